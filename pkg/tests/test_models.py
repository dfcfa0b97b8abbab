"""Test cases for "models" (networks, optimisers, training, DBN, MLP, bundles)"""

import os
import tempfile
import unittest

import numpy as np

from dbnids.evaluation import confusion, metrics
from dbnids.exceptions import (
    ConfigError,
    DataError,
    DomainError,
    FormatError,
    ShapeError,
    StateError,
)
from dbnids.formats import decode_container, encode_container
from dbnids.models import (
    BUNDLE_VERSION,
    Adam,
    Classifier,
    DbnArchitecture,
    DbnModel,
    DenseLayer,
    FeedForwardNetwork,
    FineTuneConfig,
    MlpModel,
    MlpTrainConfig,
    ModelBundle,
    Sgd,
    TrainConfig,
    fine_tune,
    forward,
    greedy_pretrain,
    mlp_predict,
    mlp_train,
    predict,
    train_network,
)
from dbnids.models._bundle import BUNDLE_KIND
from dbnids.models._optim import make_optimiser
from dbnids.models._training import row_weights
from dbnids.numerics import Rng
from dbnids.pipeline import Dataset, PipelineOptions, fit_pipeline
from dbnids.rbm import CdConfig, RbmParams

# One corner of the unit square per class, in four dimensions.
CORNERS = np.array(
    [
        [0.9, 0.9, 0.1, 0.1],
        [0.1, 0.1, 0.9, 0.9],
        [0.9, 0.1, 0.9, 0.1],
    ]
)


def corner_dataset(rows_per_class=50, seed=0, n_classes=3):
    """Rows near one corner per class, clipped to [0, 1]."""
    rng = Rng(seed)
    labels = np.repeat(np.arange(n_classes), rows_per_class)
    noise = rng.normal(0.0, 0.05, (labels.size, CORNERS.shape[1]))
    features = np.clip(CORNERS[labels] + noise, 0.0, 1.0)
    return Dataset(
        features,
        labels,
        [f"f{i}" for i in range(CORNERS.shape[1])],
        [f"c{i}" for i in range(n_classes)],
    )


def tiny_network(rng, sizes=(4, 3, 2), activation="sigmoid"):
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        layers.append(
            DenseLayer(
                rng.child(f"w{i}").normal(0.0, 0.5, (n_in, n_out)),
                rng.child(f"b{i}").normal(0.0, 0.1, n_out),
                "linear" if last else activation,
            )
        )
    return FeedForwardNetwork(layers)


def tiny_dbn(seed=0, head=True):
    rng = Rng(seed)
    arch = DbnArchitecture((4, 3, 2), n_classes=3)
    rbms = [
        RbmParams.initialise(n_visible, n_hidden, rng.child(f"rbm-{i}"))
        for i, (n_visible, n_hidden) in enumerate(arch.rbm_shapes())
    ]
    if not head:
        return DbnModel(arch, rbms)
    return DbnModel(
        arch,
        rbms,
        rng.child("head").normal(0.0, 0.5, (2, 3)),
        np.zeros(3),
        pretrained=True,
        fine_tuned=True,
    )


class TestNetwork(unittest.TestCase):
    def test_probabilities(self):
        network = tiny_network(Rng(1))
        x = Rng(2).random((7, 4))
        probs = network.predict_proba(x)
        self.assertEqual(probs.shape, (7, 2))
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(7))
        self.assertTrue(np.all(probs > 0))

    def test_loss_matches_gradient_loss(self):
        network = tiny_network(Rng(1))
        x = Rng(2).random((7, 4))
        labels = np.array([0, 1, 1, 0, 1, 0, 0])
        loss, gradients = network.loss_and_gradients(x, labels)
        self.assertAlmostEqual(loss, network.loss(x, labels))
        self.assertEqual(
            [g.shape for g in gradients], [p.shape for p in network.parameters()]
        )

    def test_unit_weights_equal_unweighted(self):
        network = tiny_network(Rng(3))
        x = Rng(4).random((5, 4))
        labels = np.array([0, 1, 0, 1, 1])
        self.assertAlmostEqual(
            network.loss(x, labels, np.ones(5)), network.loss(x, labels)
        )
        weighted = network.loss(x, labels, np.full(5, 2.0))
        self.assertAlmostEqual(weighted, 2.0 * network.loss(x, labels))

    def test_errors(self):
        network = tiny_network(Rng(1))
        with self.assertRaises(ShapeError):
            network.predict_proba(np.zeros((2, 3)))
        with self.assertRaises(DataError):
            network.loss(np.zeros((2, 4)), np.array([0, 2]))
        with self.assertRaises(DataError):
            network.loss_and_gradients(np.zeros((0, 4)), np.array([], dtype=int))
        with self.assertRaises(ShapeError):
            network.loss(np.zeros((2, 4)), np.array([0, 1]), np.ones(3))

        layer = DenseLayer(np.zeros((4, 3)), np.zeros(3), "sigmoid")
        head = DenseLayer(np.zeros((2, 2)), np.zeros(2), "linear")
        with self.assertRaises(ShapeError):
            FeedForwardNetwork([layer, head])
        with self.assertRaises(ConfigError):
            FeedForwardNetwork([layer])
        with self.assertRaises(ConfigError):
            FeedForwardNetwork([])
        with self.assertRaises(ConfigError):
            DenseLayer(np.zeros((2, 2)), np.zeros(2), "tanh")
        with self.assertRaises(ShapeError):
            DenseLayer(np.zeros((2, 2)), np.zeros(3), "relu")
        with self.assertRaises(DomainError):
            DenseLayer(np.full((2, 2), np.nan), np.zeros(2), "relu")

    def test_copy_is_independent(self):
        network = tiny_network(Rng(1))
        copy = network.copy()
        copy.layers[0].weights += 1.0
        self.assertFalse(
            np.array_equal(copy.layers[0].weights, network.layers[0].weights)
        )


class TestOptimisers(unittest.TestCase):
    def test_sgd_step(self):
        p = np.array([1.0, -2.0])
        Sgd(0.1).step([p], [np.array([1.0, 1.0])])
        np.testing.assert_allclose(p, [0.9, -2.1])

    def test_sgd_momentum(self):
        p = np.array([0.0])
        optimiser = Sgd(0.1, momentum=0.5)
        optimiser.step([p], [np.array([1.0])])
        optimiser.step([p], [np.array([1.0])])
        # v1 = -0.1, v2 = 0.5 * -0.1 - 0.1
        np.testing.assert_allclose(p, [-0.1 - 0.15])

    def test_adam_first_step(self):
        p = np.array([1.0, 1.0])
        Adam(0.01).step([p], [np.array([4.0, -0.5])])
        np.testing.assert_allclose(p, [0.99, 1.01], atol=1e-8)

    def test_adam_minimises_quadratic(self):
        p = np.array([3.0, -2.0])
        optimiser = Adam(0.1)
        for _ in range(500):
            optimiser.step([p], [2.0 * p])
        np.testing.assert_allclose(p, [0.0, 0.0], atol=0.05)

    def test_errors(self):
        with self.assertRaises(ConfigError):
            Sgd(-0.1)
        with self.assertRaises(ConfigError):
            Sgd(0.1, momentum=1.0)
        with self.assertRaises(ConfigError):
            Adam(0.1, beta1=1.0)
        with self.assertRaises(ShapeError):
            Sgd(0.1).step([np.zeros(2)], [np.zeros(3)])
        with self.assertRaises(ConfigError):
            make_optimiser("rmsprop", 0.1)

    def test_make_optimiser(self):
        self.assertIsInstance(make_optimiser("adam", 0.1), Adam)
        sgd = make_optimiser("sgd", 0.1, momentum=0.9)
        self.assertIsInstance(sgd, Sgd)
        self.assertEqual(sgd.momentum, 0.9)


class TestTraining(unittest.TestCase):
    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            TrainConfig(epochs=0)
        with self.assertRaises(ConfigError):
            TrainConfig(learning_rate=-1.0)
        with self.assertRaises(ConfigError):
            TrainConfig(batch_size=0)
        with self.assertRaises(ConfigError):
            TrainConfig(class_weights=(1.0, -1.0))

    def test_defaults(self):
        finetune = FineTuneConfig()
        self.assertEqual(
            (finetune.epochs, finetune.learning_rate, finetune.batch_size),
            (30, 0.001, 128),
        )
        self.assertEqual(finetune.optimiser, "adam")
        mlp = MlpTrainConfig()
        self.assertEqual((mlp.epochs, mlp.learning_rate, mlp.batch_size), (10, 0.02, 64))
        self.assertEqual((mlp.optimiser, mlp.momentum), ("sgd", 0.9))
        self.assertIs(MlpTrainConfig(sample_weights=np.ones(3)).to_dict()["sample_weights"], True)

    def test_row_weights(self):
        ds = corner_dataset(rows_per_class=2, n_classes=2)
        cfg = TrainConfig(class_weights=(2.0, 0.5))
        np.testing.assert_allclose(row_weights(ds, cfg), [2.0, 2.0, 0.5, 0.5])
        cfg = TrainConfig(class_weights=(2.0, 0.5), sample_weights=np.arange(4.0))
        np.testing.assert_allclose(row_weights(ds, cfg), [0.0, 2.0, 1.0, 1.5])
        with self.assertRaises(DataError):
            row_weights(ds, TrainConfig(class_weights=(1.0,)))
        with self.assertRaises(DataError):
            row_weights(ds, TrainConfig(sample_weights=np.ones(3)))

    def test_learns_separable_data(self):
        train = corner_dataset(seed=1)
        val = corner_dataset(rows_per_class=20, seed=2)
        network = tiny_network(Rng(0), sizes=(4, 8, 3), activation="relu")
        cfg = TrainConfig(epochs=30, learning_rate=0.02, batch_size=16)
        trained, history = train_network(network, train, val, cfg, Rng(5))

        self.assertEqual([record.epoch for record in history], list(range(1, 31)))
        self.assertLess(history[-1].train_loss, history[0].train_loss)
        accuracy = np.mean(np.argmax(trained.predict_proba(val.features), 1) == val.labels)
        self.assertGreater(accuracy, 0.95)
        # The input network is left untouched.
        self.assertFalse(
            np.array_equal(trained.layers[0].weights, network.layers[0].weights)
        )

    def test_select_best(self):
        train = corner_dataset(seed=1)
        val = corner_dataset(rows_per_class=20, seed=2)
        network = tiny_network(Rng(0), sizes=(4, 8, 3), activation="relu")
        cfg = TrainConfig(epochs=5, learning_rate=0.02, batch_size=16)
        trained, history = train_network(network, train, val, cfg, Rng(5))
        best = max(record.val_macro_f1 for record in history)
        predicted = np.argmax(trained.predict_proba(val.features), axis=1)
        report = metrics(confusion(val.labels, predicted, 3))
        self.assertAlmostEqual(report.macro_f1, best)

    def test_zero_learning_rate(self):
        train = corner_dataset(rows_per_class=10)
        network = tiny_network(Rng(0), sizes=(4, 3, 3))
        trained, history = train_network(
            network, train, None, TrainConfig(epochs=2, learning_rate=0.0), Rng(1)
        )
        for before, after in zip(network.parameters(), trained.parameters()):
            np.testing.assert_array_equal(before, after)
        self.assertIsNone(history[0].val_macro_f1)

    def test_deterministic(self):
        train = corner_dataset(rows_per_class=10)
        network = tiny_network(Rng(0), sizes=(4, 3, 3))
        cfg = TrainConfig(epochs=3, learning_rate=0.05, batch_size=7)
        a, _ = train_network(network, train, None, cfg, Rng(9))
        b, _ = train_network(network, train, None, cfg, Rng(9))
        for x, y in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(x, y)

    def test_weighted_batches(self):
        train = corner_dataset(rows_per_class=10)
        network = tiny_network(Rng(0), sizes=(4, 3, 3))
        cfg = TrainConfig(
            epochs=2, class_weights=(1.0, 1.0, 2.0), weighted_batches=True
        )
        _, history = train_network(network, train, None, cfg, Rng(9))
        self.assertEqual(len(history), 2)
        with self.assertRaises(DataError):
            train_network(
                network,
                train,
                None,
                TrainConfig(class_weights=(0.0, 0.0, 0.0), weighted_batches=True),
                Rng(9),
            )

    def test_errors(self):
        network = tiny_network(Rng(0), sizes=(4, 3, 2))
        with self.assertRaises(DataError):
            train_network(network, corner_dataset(n_classes=3), None, TrainConfig(), Rng(0))
        empty = corner_dataset(rows_per_class=0, n_classes=2)
        with self.assertRaises(DataError):
            train_network(network, empty, None, TrainConfig(), Rng(0))


class TestDbn(unittest.TestCase):
    def test_architecture(self):
        arch = DbnArchitecture()
        self.assertEqual(arch.layer_sizes, (49, 128, 256, 128, 128, 64))
        self.assertEqual(
            arch.rbm_shapes(),
            [(49, 128), (128, 256), (256, 128), (128, 128), (128, 64)],
        )
        self.assertEqual(arch.n_classes, 6)
        with self.assertRaises(ConfigError):
            DbnArchitecture((4,))
        with self.assertRaises(ConfigError):
            DbnArchitecture((4, 0))
        with self.assertRaises(ConfigError):
            DbnArchitecture((4, 3), n_classes=1)

    def test_shapes(self):
        arch = DbnArchitecture((4, 3, 2), n_classes=3)
        rbm = RbmParams.zeros(4, 3)
        with self.assertRaises(ShapeError):
            DbnModel(arch, [rbm])
        with self.assertRaises(ShapeError):
            DbnModel(arch, [rbm, RbmParams.zeros(3, 2)], np.zeros((2, 3)))
        with self.assertRaises(ShapeError):
            DbnModel(arch, [rbm, RbmParams.zeros(3, 2)], np.zeros((3, 3)), np.zeros(3))

    def test_uniform_head(self):
        arch = DbnArchitecture((4, 3, 2), n_classes=3)
        model = DbnModel(
            arch,
            [RbmParams.zeros(4, 3), RbmParams.zeros(3, 2)],
            np.zeros((2, 3)),
            np.zeros(3),
        )
        x = Rng(0).random((5, 4))
        np.testing.assert_allclose(forward(model, x), np.full((5, 3), 1 / 3))
        np.testing.assert_array_equal(predict(model, x), np.zeros(5))

    def test_probabilities_sum_to_one(self):
        model = tiny_dbn()
        probs = forward(model, Rng(1).random((9, 4)))
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(9))

    def test_head_required(self):
        model = tiny_dbn(head=False)
        self.assertFalse(model.head_initialised)
        with self.assertRaises(StateError):
            forward(model, np.zeros((1, 4)))

    def test_greedy_pretrain(self):
        arch = DbnArchitecture((4, 3, 2), n_classes=3)
        data = corner_dataset(rows_per_class=10).features
        cfg = CdConfig(epochs=2, batch_size=8)
        model, errors = greedy_pretrain(arch, data, cfg, Rng(3))
        self.assertTrue(model.pretrained)
        self.assertFalse(model.head_initialised)
        self.assertEqual([(r.n_visible, r.n_hidden) for r in model.rbms], [(4, 3), (3, 2)])
        self.assertEqual([len(e) for e in errors], [2, 2])

        again, _ = greedy_pretrain(arch, data, cfg, Rng(3))
        self.assertEqual(model, again)

        with self.assertRaises(ConfigError):
            greedy_pretrain(arch, data[:, :3], cfg, Rng(3))
        with self.assertRaises(DomainError):
            greedy_pretrain(arch, data + 2.0, cfg, Rng(3))

    def test_fine_tune(self):
        arch = DbnArchitecture((4, 8, 6), n_classes=3)
        train = corner_dataset(seed=1)
        val = corner_dataset(rows_per_class=20, seed=2)
        model, _ = greedy_pretrain(
            arch, train.features, CdConfig(epochs=2, batch_size=16), Rng(4)
        )
        cfg = FineTuneConfig(epochs=40, learning_rate=0.02, batch_size=16)
        tuned, history = fine_tune(model, train, val, cfg, Rng(5))

        self.assertTrue(tuned.fine_tuned)
        self.assertTrue(tuned.pretrained)
        self.assertEqual(len(history), 40)
        # Visible biases only matter for pretraining and are carried over.
        for before, after in zip(model.rbms, tuned.rbms):
            np.testing.assert_array_equal(before.visible_bias, after.visible_bias)
        accuracy = np.mean(predict(tuned, val.features) == val.labels)
        self.assertGreater(accuracy, 0.9)

    def test_fine_tune_label_error(self):
        model = tiny_dbn()
        train = corner_dataset(rows_per_class=5, n_classes=3)
        train = Dataset(train.features, train.labels, train.feature_names, ["a", "b", "c", "d"])
        train.labels[0] = 3
        with self.assertRaises(DataError):
            fine_tune(model, train, None, FineTuneConfig(epochs=1), Rng(0))

    def test_arrays(self):
        model = tiny_dbn()
        arrays = model.to_arrays()
        self.assertEqual(
            sorted(arrays),
            [
                "head/bias",
                "head/weights",
                "rbm-0/hidden_bias",
                "rbm-0/visible_bias",
                "rbm-0/weights",
                "rbm-1/hidden_bias",
                "rbm-1/visible_bias",
                "rbm-1/weights",
            ],
        )
        self.assertEqual(DbnModel.from_arrays(model.architecture(), arrays), model)
        self.assertEqual(Classifier.from_arrays(model.architecture(), arrays), model)

    def test_narrowed(self):
        model = tiny_dbn()
        narrowed = model.narrowed()
        weights = narrowed.rbms[0].weights
        np.testing.assert_array_equal(weights, weights.astype(np.float32))
        np.testing.assert_allclose(
            forward(narrowed, np.ones((1, 4))), forward(model, np.ones((1, 4))), atol=1e-6
        )


class TestMlp(unittest.TestCase):
    def test_initialise(self):
        model = MlpModel.initialise([4, 5, 3], Rng(0))
        self.assertEqual(model.layer_sizes, [4, 5, 3])
        self.assertEqual(model.n_classes, 3)
        self.assertEqual(model.architecture(), {"kind": "mlp", "layer_sizes": [4, 5, 3]})
        np.testing.assert_array_equal(model.network().layers[0].bias, np.zeros(5))
        with self.assertRaises(ConfigError):
            MlpModel.initialise([4], Rng(0))
        with self.assertRaises(ConfigError):
            MlpModel(tiny_network(Rng(0), activation="sigmoid"))

    def test_train(self):
        train = corner_dataset(seed=1)
        val = corner_dataset(rows_per_class=20, seed=2)
        cfg = MlpTrainConfig(epochs=30, batch_size=16)
        model, history = mlp_train(train, val, cfg, Rng(7), hidden_sizes=(8,))
        self.assertEqual(model.layer_sizes, [4, 8, 3])
        self.assertEqual(len(history), 30)
        self.assertGreater(np.mean(mlp_predict(model, val.features) == val.labels), 0.9)

        again, _ = mlp_train(train, val, cfg, Rng(7), hidden_sizes=(8,))
        self.assertEqual(model, again)

    def test_arrays(self):
        model = MlpModel.initialise([4, 5, 3], Rng(0))
        arrays = model.to_arrays()
        self.assertEqual(Classifier.from_arrays(model.architecture(), arrays), model)
        with self.assertRaises(FormatError):
            MlpModel.from_arrays({"kind": "mlp", "layer_sizes": [4, 6, 3]}, arrays)
        with self.assertRaises(FormatError):
            Classifier.from_arrays({"kind": "mlp", "layer_sizes": [4, 5, 5, 3]}, arrays)
        with self.assertRaises(FormatError):
            Classifier.from_arrays({"kind": "svm"}, arrays)


class TestBundle(unittest.TestCase):
    def setUp(self):
        ds = corner_dataset(rows_per_class=10)
        self.pipeline = fit_pipeline(
            ds, PipelineOptions(scaler="robust", pca=False, correlation_threshold=None)
        )
        self.model = tiny_dbn().narrowed()
        self.bundle = ModelBundle(
            self.model,
            self.pipeline,
            {"epochs": 3},
            {"val": {"accuracy": 0.5}},
            [{"epoch": 1, "train_loss": 1.25}],
        )
        self.x = Rng(3).random((6, 4))

    def test_round_trip(self):
        data = self.bundle.to_bytes()
        loaded = ModelBundle.from_bytes(data)
        self.assertEqual(loaded.model, self.model)
        np.testing.assert_array_equal(
            loaded.model.predict_proba(self.x), self.model.predict_proba(self.x)
        )
        np.testing.assert_array_equal(
            loaded.pipeline.transform(self.x), self.pipeline.transform(self.x)
        )
        self.assertEqual(loaded.train_config, {"epochs": 3})
        self.assertEqual(loaded.metrics, {"val": {"accuracy": 0.5}})
        self.assertEqual(loaded.history, [{"epoch": 1, "train_loss": 1.25}])
        self.assertEqual(loaded.to_bytes(), data)

    def test_unnarrowed_model_matches_narrowed(self):
        model = tiny_dbn()
        loaded = ModelBundle.from_bytes(ModelBundle(model, self.pipeline).to_bytes())
        np.testing.assert_array_equal(
            loaded.model.predict_proba(self.x), model.narrowed().predict_proba(self.x)
        )

    def test_model_arrays_are_float32(self):
        _, arrays = decode_container(self.bundle.to_bytes(), BUNDLE_KIND)
        for name, array in arrays.items():
            if name.startswith("model/"):
                self.assertEqual(array.dtype, np.dtype("<f4"), name)
            else:
                self.assertEqual(array.dtype, np.dtype("<f8"), name)

    def test_save_load(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "model.bundle")
            self.bundle.save(path)
            self.assertEqual(ModelBundle.load(path).model, self.model)

    def test_corrupt(self):
        data = bytearray(self.bundle.to_bytes())
        data[len(data) // 2] ^= 0xFF
        with self.assertRaises(FormatError):
            ModelBundle.from_bytes(bytes(data))

    def test_version(self):
        data = encode_container(BUNDLE_KIND, {"bundle_version": BUNDLE_VERSION + 1}, {})
        with self.assertRaises(FormatError):
            ModelBundle.from_bytes(data)
        with self.assertRaises(FormatError):
            ModelBundle.from_bytes(self.pipeline.to_bytes())


if __name__ == "__main__":
    unittest.main()
