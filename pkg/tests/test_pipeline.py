"""
<Program Name>
  test_pipeline.py

<Purpose>
  Unit test for 'pipeline.py'
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from dbnids import pipeline
from dbnids.exceptions import (
    ConfigError,
    DataError,
    FormatError,
    ShapeError,
    StateError,
    StorageError,
)
from dbnids.numerics import Rng

FIXTURE = """\
Flow ID, Source IP, Destination Port, Flow Duration, Flow Bytes/s, Label
f1,10.0.0.1,80,10,100.5,BENIGN
f2,10.0.0.2,80,20,Infinity,DoS Hulk
f3,10.0.0.3,443,30,12.25,DoS Hulk
f4,10.0.0.4,22,40,7,BENIGN
"""


def make_dataset(features, labels, class_names=("a", "b")):
    features = np.asarray(features, dtype=np.float64)
    names = [f"f{i}" for i in range(features.shape[1])]
    return pipeline.Dataset(features, labels, names, class_names)


def percentile_oracle(values, q):
    """Linear-interpolation percentile by sorting."""
    ordered = sorted(values)
    position = q / 100.0 * (len(ordered) - 1)
    low = int(np.floor(position))
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (position - low) * (ordered[high] - ordered[low])


class TestDataset(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(DataError):
            pipeline.Dataset(np.zeros((2, 2)), [0], ["x", "y"], ["a"])
        with self.assertRaises(DataError):
            pipeline.Dataset(np.zeros((1, 2)), [0], ["x"], ["a"])
        with self.assertRaises(DataError):
            pipeline.Dataset(np.zeros((1, 2)), [0], ["x", "x"], ["a"])
        with self.assertRaises(DataError):
            pipeline.Dataset(np.zeros((1, 2)), [1], ["x", "y"], ["a"])

    def test_bytes(self):
        ds = make_dataset(Rng(0).random((5, 3)), [0, 1, 1, 0, 1])
        restored = pipeline.Dataset.from_bytes(ds.to_bytes())
        np.testing.assert_array_equal(restored.features, ds.features)
        np.testing.assert_array_equal(restored.labels, ds.labels)
        self.assertEqual(restored.feature_names, ds.feature_names)
        self.assertEqual(restored.class_names, ds.class_names)
        self.assertEqual(restored.to_bytes(), ds.to_bytes())

    def test_class_counts(self):
        ds = make_dataset(np.zeros((3, 1)), [1, 1, 1], ("a", "b", "c"))
        self.assertEqual(ds.class_counts(), {"a": 0, "b": 3, "c": 0})


class TestLoadCsv(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(dir=os.getcwd())
        self.path = self._write("flows.csv", FIXTURE)

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_load(self):
        ds = pipeline.load_csv(self.path)
        self.assertEqual(ds.n_rows, 3)
        self.assertEqual(ds.invalid_rows, 1)
        self.assertEqual(ds.feature_names, ("Flow Duration", "Flow Bytes/s"))
        self.assertEqual(ds.class_names, ("BENIGN", "DoS Hulk"))
        np.testing.assert_array_equal(
            ds.features, [[10.0, 100.5], [30.0, 12.25], [40.0, 7.0]]
        )
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_unparseable(self):
        path = self._write(
            "bad.csv", "a,b,Label\n1,2,X\n3,oops,Y\nNaN,4,X\n5,-inf,Y\n6,7,Y\n"
        )
        ds = pipeline.load_csv(path, excluded_columns=())
        self.assertEqual(ds.n_rows, 2)
        self.assertEqual(ds.invalid_rows, 3)

    def test_label_column(self):
        path = self._write("label_first.csv", "Label,x\nA,1\nB,2\n")
        ds = pipeline.load_csv(path, label_column="Label")
        self.assertEqual(ds.feature_names, ("x",))
        self.assertEqual(ds.class_names, ("A", "B"))
        with self.assertRaises(DataError):
            pipeline.load_csv(path, label_column="Class")

    def test_errors(self):
        with self.assertRaises(DataError):
            pipeline.load_csv(self._write("empty.csv", ""))
        with self.assertRaises(DataError):
            pipeline.load_csv(self._write("invalid.csv", "x,Label\ninf,A\n"))
        with self.assertRaises(StorageError):
            pipeline.load_csv(os.path.join(self.temp_dir, "missing.csv"))

    def test_load_csvs(self):
        other = self._write(
            "other.csv",
            "Flow ID, Source IP, Destination Port, Flow Duration, Flow Bytes/s, Label\n"
            "g1,10.0.0.9,80,50,1,Bot\n",
        )
        ds = pipeline.load_csvs([self.path, other])
        self.assertEqual(ds.n_rows, 4)
        self.assertEqual(ds.invalid_rows, 1)
        self.assertEqual(ds.class_names, ("BENIGN", "Bot", "DoS Hulk"))
        np.testing.assert_array_equal(ds.labels, [0, 2, 0, 1])

        mismatched = self._write("mismatch.csv", "y,Label\n1,A\n")
        with self.assertRaises(DataError):
            pipeline.load_csvs([self.path, mismatched])
        with self.assertRaises(DataError):
            pipeline.load_csvs([])


class TestLabels(unittest.TestCase):
    def setUp(self):
        self.label_map = pipeline.LabelMap.cicids2017()

    def test_resolve(self):
        self.assertEqual(self.label_map.resolve("DoS Hulk"), "DoS/DDoS")
        self.assertEqual(self.label_map.resolve("BENIGN"), "Benign")
        self.assertEqual(self.label_map.resolve("Bot"), "Botnet")
        self.assertEqual(self.label_map.resolve("SSH-Patator"), "Brute Force")
        self.assertEqual(
            self.label_map.resolve("Web Attack � Sql Injection"), "Web Attack"
        )
        self.assertEqual(self.label_map.resolve("Web Attack - XSS"), "Web Attack")
        self.assertIsNone(self.label_map.resolve("Infiltration"))
        with self.assertRaisesRegex(DataError, "Mystery"):
            self.label_map.resolve("Mystery")

    def test_invalid_map(self):
        with self.assertRaises(ConfigError):
            pipeline.LabelMap({"x": "Unknown category"})

    def test_merge(self):
        raw = ("BENIGN", "DoS Hulk", "Infiltration", "Web Attack – Brute Force")
        ds = pipeline.Dataset(
            np.arange(6, dtype=np.float64).reshape(6, 1),
            [0, 1, 2, 3, 0, 2],
            ["x"],
            raw,
        )
        merged = pipeline.merge_labels(ds, self.label_map)
        self.assertEqual(merged.class_names, pipeline.DEFAULT_CLASS_NAMES)
        self.assertEqual(merged.n_rows, 4)
        np.testing.assert_array_equal(merged.features[:, 0], [0.0, 1.0, 3.0, 4.0])
        self.assertEqual(
            merged.class_counts(),
            {
                "Benign": 2,
                "Botnet": 0,
                "Brute Force": 0,
                "DoS/DDoS": 1,
                "PortScan": 0,
                "Web Attack": 1,
            },
        )

    def test_merge_unknown(self):
        ds = pipeline.Dataset(np.zeros((1, 1)), [0], ["x"], ["Mystery"])
        with self.assertRaisesRegex(DataError, "Mystery"):
            pipeline.merge_labels(ds, self.label_map)


class TestFeatureRemoval(unittest.TestCase):
    def test_zero_variance(self):
        features = np.array([[1.0, 5.0, 1.0], [2.0, 5.0, 1.0 + 1e-15], [3.0, 5.0, 1.0]])
        ds, removed = pipeline.drop_zero_variance(make_dataset(features, [0, 1, 0]))
        self.assertEqual(removed, ["f1"])
        self.assertEqual(ds.feature_names, ("f0", "f2"))

        with self.assertRaises(DataError):
            pipeline.drop_zero_variance(make_dataset(np.zeros((0, 2)), []))

    def test_correlated(self):
        base = Rng(0).random((500, 1))
        features = np.hstack([base, Rng(1).random((500, 1)), -2.0 * base + 1.0])
        ds, removed = pipeline.drop_correlated(make_dataset(features, np.zeros(500, int)))
        self.assertEqual(removed, ["f2"])
        self.assertEqual(ds.feature_names, ("f0", "f1"))

    def test_independent_columns_kept(self):
        features = Rng(2).random((5000, 6))
        ds, removed = pipeline.drop_correlated(
            make_dataset(features, np.zeros(5000, int)), 0.9
        )
        self.assertEqual(removed, [])
        self.assertEqual(ds.n_features, 6)

    def test_invalid_threshold(self):
        ds = make_dataset(np.zeros((2, 2)), [0, 1])
        for threshold in (0.0, 1.5):
            with self.assertRaises(ConfigError):
                pipeline.drop_correlated(ds, threshold)


class TestStratifiedSplit(unittest.TestCase):
    def test_single_class(self):
        ds = make_dataset(np.zeros((100, 1)), np.zeros(100, int), ("a",))
        train, val, test = pipeline.stratified_split(ds, Rng(0))
        self.assertEqual((train.n_rows, val.n_rows, test.n_rows), (60, 20, 20))

    def test_proportions(self):
        labels = np.array([0] * 900 + [1] * 100)
        features = np.arange(1000, dtype=np.float64).reshape(1000, 1)
        ds = make_dataset(features, labels)
        train, val, test = pipeline.stratified_split(ds, Rng(1))

        self.assertEqual(test.class_counts(), {"a": 180, "b": 20})
        self.assertEqual(val.class_counts(), {"a": 180, "b": 20})
        self.assertEqual(train.class_counts(), {"a": 540, "b": 60})

        # Disjoint and complete.
        rows = np.concatenate([train.features, val.features, test.features])[:, 0]
        np.testing.assert_array_equal(np.sort(rows), features[:, 0])

    def test_deterministic(self):
        ds = make_dataset(Rng(0).random((50, 2)), np.arange(50) % 2)
        a = pipeline.stratified_split(ds, Rng(3))
        b = pipeline.stratified_split(ds, Rng(3))
        c = pipeline.stratified_split(ds, Rng(4))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.features, y.features)
        self.assertFalse(np.array_equal(a[0].features, c[0].features))

    def test_time_ordered(self):
        features = np.arange(10, dtype=np.float64).reshape(10, 1)
        ds = make_dataset(features, np.zeros(10, int), ("a",))
        train, val, test = pipeline.stratified_split(ds, Rng(0), time_ordered=True)
        np.testing.assert_array_equal(train.features[:, 0], [0, 1, 2, 3, 4, 5])
        np.testing.assert_array_equal(val.features[:, 0], [6, 7])
        np.testing.assert_array_equal(test.features[:, 0], [8, 9])

    def test_errors(self):
        ds = make_dataset(np.zeros((5, 1)), [0, 0, 0, 1, 1])
        with self.assertRaises(DataError):
            pipeline.stratified_split(ds, Rng(0))
        ok = make_dataset(np.zeros((6, 1)), [0, 0, 0, 1, 1, 1])
        for fractions in ((0.5, 0.5, 0.0), (0.6, 0.2, 0.3)):
            with self.assertRaises(ConfigError):
                pipeline.stratified_split(ok, Rng(0), fractions)
        # Three rows per class are enough.
        train, val, test = pipeline.stratified_split(ok, Rng(0))
        self.assertEqual((train.n_rows, val.n_rows, test.n_rows), (2, 2, 2))


class TestQuantileTransform(unittest.TestCase):
    def test_uniform_output(self):
        features = Rng(0).normal(0.0, 1.0, (10000, 2)) ** 3
        tables = pipeline.quantile_fit(features, 1000)
        transformed = pipeline.quantile_apply(tables, features)
        n = features.shape[0]
        for j in range(2):
            ordered = np.sort(transformed[:, j])
            upper = np.max(np.arange(1, n + 1) / n - ordered)
            lower = np.max(ordered - np.arange(n) / n)
            self.assertLess(max(upper, lower), 0.02)

    def test_range_and_monotonicity(self):
        tables = pipeline.quantile_fit(Rng(1).random((500, 1)), 100)
        probes = np.linspace(-1.0, 2.0, 301).reshape(-1, 1)
        transformed = pipeline.quantile_apply(tables, probes)[:, 0]
        self.assertTrue(np.all(np.diff(transformed) >= 0))
        self.assertEqual(transformed[0], 0.0)
        self.assertEqual(transformed[-1], 1.0)
        self.assertTrue(np.all((transformed >= 0) & (transformed <= 1)))

    def test_constant_feature(self):
        tables = pipeline.quantile_fit(np.full((50, 1), 3.0))
        np.testing.assert_array_equal(
            pipeline.quantile_apply(tables, np.full((4, 1), 3.0)), np.zeros((4, 1))
        )

    def test_table_size(self):
        tables = pipeline.quantile_fit(Rng(2).random((30, 3)), 1000)
        self.assertEqual(tables.quantiles.shape, (30, 3))

    def test_errors(self):
        with self.assertRaises(StateError):
            pipeline.quantile_apply(None, np.zeros((1, 1)))
        with self.assertRaises(ConfigError):
            pipeline.quantile_fit(np.zeros((5, 1)), 1)
        tables = pipeline.quantile_fit(np.zeros((5, 2)))
        with self.assertRaises(ShapeError):
            pipeline.quantile_apply(tables, np.zeros((1, 3)))


class TestRobustScale(unittest.TestCase):
    def test_symmetric(self):
        features = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0]])
        scale = pipeline.robust_scale_fit(features)
        np.testing.assert_array_equal(pipeline.robust_scale_apply(scale, features)[2], [0.0])

    def test_constant(self):
        features = np.full((4, 1), 7.0)
        scale = pipeline.robust_scale_fit(features)
        np.testing.assert_array_equal(
            pipeline.robust_scale_apply(scale, features), np.zeros((4, 1))
        )

    def test_percentile_oracle(self):
        features = Rng(3).normal(5.0, 2.0, (101, 3))
        scale = pipeline.robust_scale_fit(features)
        for j in range(3):
            column = list(features[:, j])
            median = percentile_oracle(column, 50)
            iqr = percentile_oracle(column, 75) - percentile_oracle(column, 25)
            self.assertAlmostEqual(scale.center[j], median, places=12)
            self.assertAlmostEqual(scale.scale[j], iqr, places=12)

    def test_unfitted(self):
        with self.assertRaises(StateError):
            pipeline.robust_scale_apply(None, np.zeros((1, 1)))


class TestPca(unittest.TestCase):
    def test_axis_aligned(self):
        features = np.array([[3.0, 1.0], [3.0, -1.0], [-3.0, 1.0], [-3.0, -1.0]])
        basis = pipeline.pca_fit(features, 0.9)
        self.assertEqual(basis.n_components, 1)
        self.assertAlmostEqual(basis.explained_variance_ratio[0], 0.9, places=12)
        np.testing.assert_allclose(basis.components[:, 0], [1.0, 0.0], atol=1e-12)

    def test_reconstruction(self):
        features = Rng(4).random((50, 5))
        basis = pipeline.pca_fit(features, 1.0)
        self.assertEqual(basis.n_components, 5)
        projected = pipeline.pca_apply(basis, features)
        reconstructed = projected @ basis.components.T + basis.mean
        np.testing.assert_allclose(reconstructed, features, atol=1e-8)

    def test_against_svd(self):
        features = Rng(5).normal(0.0, 1.0, (200, 10)) * np.arange(1, 11)
        basis = pipeline.pca_fit(features, 1.0)
        singular = np.linalg.svd(features - features.mean(axis=0), compute_uv=False)
        np.testing.assert_allclose(
            basis.explained_variance_ratio,
            singular**2 / np.sum(singular**2),
            rtol=0,
            atol=1e-9,
        )

    def test_properties(self):
        features = Rng(6).random((300, 8)) @ Rng(7).random((8, 8))
        basis = pipeline.pca_fit(features, 0.99)
        components = basis.components
        np.testing.assert_allclose(
            components.T @ components, np.eye(basis.n_components), atol=1e-8
        )
        ratios = basis.explained_variance_ratio
        self.assertTrue(np.all(np.diff(ratios) <= 0))
        self.assertLessEqual(ratios.sum(), 1.0 + 1e-9)
        self.assertGreaterEqual(ratios.sum(), 0.99 - 1e-12)

        covariance = np.cov(pipeline.pca_apply(basis, features), rowvar=False)
        off_diagonal = covariance - np.diag(np.diag(covariance))
        self.assertLess(np.max(np.abs(off_diagonal)), 1e-6 * np.max(np.diag(covariance)))

        for i in range(basis.n_components):
            column = components[:, i]
            self.assertGreater(column[np.argmax(np.abs(column))], 0)

    def test_fixed_components(self):
        basis = pipeline.pca_fit(Rng(8).random((20, 4)), n_components=2)
        self.assertEqual(basis.n_components, 2)
        with self.assertRaises(ConfigError):
            pipeline.pca_fit(Rng(8).random((20, 4)), n_components=5)

    def test_errors(self):
        with self.assertRaises(DataError):
            pipeline.pca_fit(np.zeros((1, 3)))
        with self.assertRaises(ConfigError):
            pipeline.pca_fit(np.zeros((5, 3)), 0.0)
        with self.assertRaises(StateError):
            pipeline.pca_apply(None, np.zeros((1, 3)))


class TestUnitRange(unittest.TestCase):
    def test_clip(self):
        unit_range = pipeline.unit_range_fit(np.array([[0.0, 5.0], [2.0, 5.0]]))
        np.testing.assert_array_equal(
            pipeline.unit_range_apply(unit_range, np.array([[1.0, 5.0], [4.0, 6.0]])),
            [[0.5, 0.0], [1.0, 1.0]],
        )


class TestPipelineArtifact(unittest.TestCase):
    def setUp(self):
        rng = Rng(9)
        features = np.hstack([rng.normal(0, 1, (300, 3)), rng.random((300, 2))])
        self.ds = make_dataset(features, np.arange(300) % 2)

    def test_options(self):
        for kwargs in (
            {"scaler": "minmax"},
            {"correlation_threshold": 0.0},
            {"n_quantiles": 1},
            {"pca_variance": 1.5},
            {"pca_components": 0},
        ):
            with self.assertRaises(ConfigError):
                pipeline.PipelineOptions(**kwargs)
        pipeline.PipelineOptions(correlation_threshold=None)

    def test_fit_and_apply(self):
        artifact = pipeline.fit_pipeline(self.ds, pipeline.PipelineOptions())
        transformed = artifact.apply(self.ds)
        self.assertEqual(artifact.fitted_rows, 300)
        self.assertEqual(
            transformed.feature_names,
            tuple(f"pc{i + 1}" for i in range(artifact.pca.n_components)),
        )
        self.assertTrue(np.all((transformed.features >= 0) & (transformed.features <= 1)))
        np.testing.assert_array_equal(transformed.labels, self.ds.labels)

        # Columns are selected by name.
        reordered = pipeline.Dataset(
            self.ds.features[:, ::-1],
            self.ds.labels,
            self.ds.feature_names[::-1],
            self.ds.class_names,
        )
        np.testing.assert_array_equal(
            artifact.apply(reordered).features, transformed.features
        )

        missing = make_dataset(self.ds.features[:, :2], self.ds.labels)
        with self.assertRaises(DataError):
            artifact.apply(missing)

    def test_bytes(self):
        for options in (
            pipeline.PipelineOptions(),
            pipeline.PipelineOptions(scaler="robust", pca=False),
            pipeline.PipelineOptions(scaler="none", unit_range=False),
        ):
            artifact = pipeline.fit_pipeline(self.ds, options, ["z"], ["c"])
            restored = pipeline.PipelineArtifact.from_bytes(artifact.to_bytes())
            self.assertEqual(restored.to_bytes(), artifact.to_bytes())
            self.assertEqual(restored.removed_zero_variance, ("z",))
            self.assertEqual(restored.removed_correlated, ("c",))
            np.testing.assert_array_equal(
                restored.transform(self.ds.features),
                artifact.transform(self.ds.features),
            )

    def test_unsupported_version(self):
        artifact = pipeline.fit_pipeline(self.ds, pipeline.PipelineOptions())
        metadata = dict(artifact.metadata(), artifact_version=99)
        with self.assertRaises(FormatError):
            pipeline.PipelineArtifact.from_parts(metadata, artifact.arrays())
        with self.assertRaises(FormatError):
            pipeline.PipelineArtifact.from_parts(artifact.metadata(), {})

    def test_fit_uses_training_rows_only(self):
        train, val, test = pipeline.stratified_split(self.ds, Rng(0))
        artifact = pipeline.fit_pipeline(train, pipeline.PipelineOptions())

        changed = self.ds.features.copy()
        val_rows = np.isin(self.ds.features[:, 0], val.features[:, 0])
        changed[val_rows] += 100.0
        changed_ds = make_dataset(changed, self.ds.labels)
        train2, _, _ = pipeline.stratified_split(changed_ds, Rng(0))
        self.assertEqual(
            pipeline.fit_pipeline(train2, pipeline.PipelineOptions()).to_bytes(),
            artifact.to_bytes(),
        )


if __name__ == "__main__":
    unittest.main()
