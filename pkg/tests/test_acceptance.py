"""Controlli sui dataset reali; richiedono i file IDX in DATA_PATH."""
import numpy as np
import pytest

from src.errors import ArgumentError
from src.harness import ExperimentConfig, improvement_summary, run_experiment
from src.imageio import load_split, subsample
from src.persistence import betti_curve, betti_oracle, image_diagram
from config.config import DATA_PATH, NUM_WORKERS

pytestmark = pytest.mark.slow


def _load(dataset, split):
    try:
        return load_split(dataset, split, DATA_PATH)
    except (ArgumentError, OSError):
        pytest.skip(f"dataset {dataset} non disponibile in {DATA_PATH}")


def test_mnist_shapes():
    train_set, test_set = _load("mnist", "train"), _load("mnist", "test")
    assert (len(train_set), len(test_set)) == (60000, 10000)
    assert train_set.images[0].shape == (28, 28)
    assert train_set.class_count == 10


def test_betti_oracle_on_mnist_digits():
    sample = subsample(_load("mnist", "test"), 100, seed=0)
    thresholds = np.linspace(0.0, 1.0, 17)
    for image in sample.images:
        diagram = image_diagram(image)
        expected = np.array([betti_oracle(image, t) for t in thresholds])
        np.testing.assert_array_equal(betti_curve(diagram, 0, thresholds), expected[:, 0])
        np.testing.assert_array_equal(betti_curve(diagram, 1, thresholds), expected[:, 1])


def test_small_mnist_experiment(tmp_path):
    train_set, test_set = _load("mnist", "train"), _load("mnist", "test")
    test_set = subsample(test_set, 500, seed=1)
    config = ExperimentConfig(dataset="mnist", sizes=(100,), folds=2, seed=7,
                              variants=("baseline", "topo"), epochs=10, out_dir=tmp_path)
    reports = run_experiment(config, train_set, test_set)
    for report in reports:
        assert len(report.accuracies) == 2
        assert report.mean > 0.3


def test_digit_hole_counts():
    test_set = _load("mnist", "test")
    for digit, holes, share in ((8, 2, 0.6), (0, 1, 0.6), (1, 0, 0.8)):
        indices = np.flatnonzero(test_set.labels == digit)[:500]
        counts = [sum(p.persistence > 0.3 for p in image_diagram(test_set.images[i]).d1)
                  for i in indices]
        assert np.mean(np.array(counts) == holes) >= share, digit


def test_usps_landscape_only_accuracy(tmp_path):
    train_set, test_set = _load("usps", "train"), _load("usps", "test")
    config = ExperimentConfig(dataset="usps", sizes=(len(train_set),), folds=1,
                              variants=("landscape_only",), out_dir=tmp_path, workers=NUM_WORKERS)
    report, = run_experiment(config, train_set, test_set)
    assert 0.40 <= report.mean <= 0.60


@pytest.fixture(scope="module")
def mnist_small_sample_reports(tmp_path_factory):
    train_set, test_set = _load("mnist", "train"), _load("mnist", "test")
    config = ExperimentConfig(dataset="mnist", sizes=(100,), folds=10,
                              variants=("baseline", "topo", "landscape_only", "ensemble"),
                              out_dir=tmp_path_factory.mktemp("mnist_n100"), workers=NUM_WORKERS)
    return {r.variant: r for r in run_experiment(config, train_set, test_set)}


def test_mnist_topo_beats_baseline_at_n100(mnist_small_sample_reports):
    summary = improvement_summary(list(mnist_small_sample_reports.values()))
    row = summary[(summary["variant"] == "topo") & (summary["n"] == 100)].iloc[0]
    assert row["paired_folds"] == 10
    assert row["mean_gain"] > 0.0


def test_mnist_ensemble_not_worse_than_baseline(mnist_small_sample_reports):
    baseline = mnist_small_sample_reports["baseline"].folds
    ensemble = mnist_small_sample_reports["ensemble"].folds
    holding = sum(e.accuracy >= b.accuracy - 0.005 for b, e in zip(baseline, ensemble)
                  if not (b.failed or e.failed))
    assert holding >= 9
