"""
<Program Name>
  test_evaluation.py

<Purpose>
  Unit test for 'evaluation.py', including the published CICIDS2017
  confusion matrices of the DBN and MLP classifiers.
"""

import unittest

import numpy as np

from dbnids import evaluation
from dbnids.exceptions import DataError
from dbnids.pipeline import DEFAULT_CLASS_NAMES

# Published test-set confusion matrices, rows actual, columns predicted, in
# DEFAULT_CLASS_NAMES order, with their printed precision and recall rows.
DBN_COUNTS = [
    [361350, 358, 28, 52, 6, 60],
    [3, 384, 0, 0, 0, 0],
    [3, 0, 1691, 0, 0, 0],
    [119, 0, 0, 63707, 0, 21],
    [6, 4, 0, 17, 11371, 3],
    [5, 0, 0, 1, 0, 406],
]
DBN_PRECISION = [1.00, 0.51, 0.98, 1.00, 1.00, 0.83]
DBN_RECALL = [1.00, 0.99, 1.00, 1.00, 1.00, 0.99]

MLP_COUNTS = [
    [360810, 500, 29, 101, 7, 407],
    [6, 381, 0, 0, 0, 0],
    [4, 0, 1689, 0, 0, 0],
    [113, 0, 0, 63717, 0, 17],
    [3, 4, 1, 23, 11366, 4],
    [2, 0, 0, 2, 0, 408],
]
MLP_PRECISION = [1.00, 0.43, 0.98, 1.00, 1.00, 0.49]
MLP_RECALL = [1.00, 0.98, 1.00, 1.00, 1.00, 0.99]

# Printed percentages are rounded to whole points.
HALF_POINT = 0.005


class TestConfusion(unittest.TestCase):
    def test_counts(self):
        cm = evaluation.confusion([0, 0, 1, 2, 2, 2], [0, 1, 1, 2, 0, 2], 3)
        np.testing.assert_array_equal(cm.counts, [[1, 1, 0], [0, 1, 0], [1, 0, 2]])
        self.assertEqual(cm.class_names, ("0", "1", "2"))
        self.assertEqual(cm.total, 6)

    def test_errors(self):
        with self.assertRaises(DataError):
            evaluation.confusion([0, 1], [0], 2)
        with self.assertRaises(DataError):
            evaluation.confusion([0, 2], [0, 1], 2)
        with self.assertRaises(DataError):
            evaluation.confusion([0, 1], [0, -1], 2)
        with self.assertRaises(DataError):
            evaluation.confusion([0], [0], 2, ["only one"])
        with self.assertRaises(DataError):
            evaluation.ConfusionMatrix(np.zeros((2, 3)), ("a", "b"))

    def test_dict(self):
        cm = evaluation.ConfusionMatrix(np.array(DBN_COUNTS), DEFAULT_CLASS_NAMES)
        self.assertEqual(evaluation.ConfusionMatrix.from_dict(cm.to_dict()), cm)
        self.assertNotEqual(cm, evaluation.ConfusionMatrix(np.array(MLP_COUNTS), DEFAULT_CLASS_NAMES))


class TestMetrics(unittest.TestCase):
    def _check_published(self, counts, precision, recall):
        report = evaluation.metrics(
            evaluation.ConfusionMatrix(np.array(counts), DEFAULT_CLASS_NAMES)
        )
        for class_metrics, expected in zip(report.per_class, precision):
            self.assertAlmostEqual(
                class_metrics.precision, expected, delta=HALF_POINT, msg=class_metrics.name
            )
        for class_metrics, expected in zip(report.per_class, recall):
            self.assertAlmostEqual(
                class_metrics.recall, expected, delta=HALF_POINT, msg=class_metrics.name
            )
        return report

    def test_published_dbn(self):
        report = self._check_published(DBN_COUNTS, DBN_PRECISION, DBN_RECALL)
        web_attack = report.per_class[5]
        self.assertEqual(web_attack.name, "Web Attack")
        self.assertAlmostEqual(web_attack.precision, 406 / 490)
        self.assertAlmostEqual(report.per_class[1].precision, 384 / 746)
        # The published overall DBN precision is the macro mean.
        self.assertAlmostEqual(report.aggregates["macro"]["precision"], 0.887, delta=0.001)

    def test_published_mlp(self):
        report = self._check_published(MLP_COUNTS, MLP_PRECISION, MLP_RECALL)
        self.assertAlmostEqual(report.per_class[5].precision, 408 / 836)

    def test_perfect(self):
        cm = evaluation.confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
        report = evaluation.metrics(cm)
        np.testing.assert_array_equal(cm.counts, np.diag([1, 1, 2]))
        for class_metrics in report.per_class:
            self.assertEqual(
                (class_metrics.precision, class_metrics.recall, class_metrics.f1),
                (1.0, 1.0, 1.0),
            )
        self.assertEqual(report.accuracy, 1.0)
        self.assertEqual(report.macro_f1, 1.0)

    def test_aggregates(self):
        cm = evaluation.ConfusionMatrix(np.array([[8, 2], [1, 4]]), ("a", "b"))
        report = evaluation.metrics(cm)
        a, b = report.per_class
        self.assertAlmostEqual(a.precision, 8 / 9)
        self.assertAlmostEqual(a.recall, 0.8)
        self.assertAlmostEqual(b.precision, 4 / 6)
        self.assertAlmostEqual(b.recall, 0.8)
        self.assertAlmostEqual(a.f1, 2 * (8 / 9) * 0.8 / (8 / 9 + 0.8))
        self.assertEqual((a.support, b.support), (10, 5))

        self.assertAlmostEqual(report.accuracy, 12 / 15)
        for metric in ("precision", "recall", "f1"):
            self.assertAlmostEqual(report.aggregates["micro"][metric], 12 / 15)
        self.assertAlmostEqual(
            report.aggregates["macro"]["precision"], (8 / 9 + 4 / 6) / 2
        )
        self.assertAlmostEqual(
            report.aggregates["weighted"]["recall"], (10 * 0.8 + 5 * 0.8) / 15
        )

    def test_undefined(self):
        # Class 2 is never predicted nor present.
        cm = evaluation.confusion([0, 1], [0, 0], 3)
        report = evaluation.metrics(cm)
        self.assertEqual(report.per_class[1].precision, 0.0)
        self.assertEqual(report.per_class[1].undefined, ["precision", "f1"])
        self.assertEqual(
            report.per_class[2].undefined, ["precision", "recall", "f1"]
        )
        self.assertEqual(report.per_class[0].undefined, [])

    def test_empty(self):
        with self.assertRaises(DataError):
            evaluation.metrics(evaluation.confusion([], [], 2))


class TestRendering(unittest.TestCase):
    def setUp(self):
        self.report = evaluation.metrics(
            evaluation.ConfusionMatrix(np.array(DBN_COUNTS), DEFAULT_CLASS_NAMES)
        )

    def test_format_table(self):
        table = evaluation.format_table(self.report)
        for name in DEFAULT_CLASS_NAMES:
            self.assertIn(name, table)
        self.assertIn("361350", table)
        self.assertIn("82.9%", table)
        self.assertIn("macro (best match)", table)

    def test_records(self):
        records = evaluation.report_records(self.report, split="test")
        self.assertEqual(len(records), 6 + 3 + 1)
        self.assertTrue(all(record["split"] == "test" for record in records))
        self.assertEqual(
            [r["name"] for r in records if r["record"] == "class"],
            list(DEFAULT_CLASS_NAMES),
        )
        best = [r["name"] for r in records if r.get("best_match") is True]
        self.assertEqual(best, ["macro"])
        self.assertEqual(records[-1]["counts"], DBN_COUNTS)

    def test_to_dict(self):
        data = self.report.to_dict()
        self.assertEqual(data["best_match"], "macro")
        self.assertEqual(len(data["per_class"]), 6)
        self.assertEqual(data["confusion"]["counts"], DBN_COUNTS)


if __name__ == "__main__":
    unittest.main()
