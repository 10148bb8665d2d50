import struct
import time

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import ArgumentError, FormatError, LengthError
from src.imageio import GrayImage
from src.landscape import (
    FEATURE_HEADER, LandscapeParams, featurize, featurize_batch, landscape, landscape_gradient,
    read_feature_file, triangle_transform, write_feature_csv, write_feature_file,
)
from src.persistence import PersistencePoint, image_diagram


@st.composite
def diagram_points(draw, max_size=8):
    pairs = draw(st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 1.0)), max_size=max_size))
    return [PersistencePoint(min(a, b), max(a, b), 1) for a, b in pairs]


landscape_params = st.builds(LandscapeParams, k=st.integers(1, 4), q=st.integers(2, 12))


def _brute_force(points, params):
    bins = [params.t_min + n * (params.t_max - params.t_min) / (params.q - 1) for n in range(params.q)]
    layers = [[0.0] * params.q for _ in range(params.k)]
    for n, t in enumerate(bins):
        values = sorted((triangle_transform(p, t) for p in points), reverse=True)
        for layer in range(min(params.k, len(values))):
            layers[layer][n] = values[layer]
    return np.array(layers).ravel()


def test_triangle_examples():
    point = PersistencePoint(0.2, 0.8, 1)
    assert triangle_transform(point, 0.5) == pytest.approx(0.3)
    assert triangle_transform(point, 0.2) == pytest.approx(0.0, abs=1e-15)
    assert triangle_transform(point, 0.35) == pytest.approx(0.15)


def test_landscape_examples():
    params = LandscapeParams(k=2, q=4)
    np.testing.assert_array_equal(landscape([], params), np.zeros(8))

    single = landscape([PersistencePoint(0.0, 1.0, 0)], LandscapeParams(k=1, q=3))
    np.testing.assert_allclose(single, [0.0, 0.5, 0.0])

    twins = landscape([PersistencePoint(0.2, 0.8, 1)] * 2, LandscapeParams(k=2, q=5)).reshape(2, 5)
    np.testing.assert_array_equal(twins[0], twins[1])


def test_params_validation():
    for bad in ({"k": 0, "q": 5}, {"k": 1, "q": 1}, {"k": 1, "q": 5, "t_min": 1.0, "t_max": 0.0}):
        with pytest.raises(ArgumentError):
            LandscapeParams(**bad)


@settings(max_examples=1000)
@given(diagram_points(), landscape_params)
def test_layers_are_ordered_and_nonnegative(points, params):
    layers = landscape(points, params).reshape(params.k, params.q)
    assert np.all(layers >= 0.0)
    assert np.all(np.diff(layers, axis=0) <= 0.0)


@settings(max_examples=1000)
@given(diagram_points(), landscape_params)
def test_layers_are_lipschitz(points, params):
    layers = landscape(points, params).reshape(params.k, params.q)
    step = (params.t_max - params.t_min) / (params.q - 1)
    assert np.all(np.abs(np.diff(layers, axis=1)) <= step + 1e-12)


@settings(max_examples=1000)
@given(diagram_points(), landscape_params, st.randoms())
def test_permutation_invariance(points, params, random):
    shuffled = list(points)
    random.shuffle(shuffled)
    np.testing.assert_array_equal(landscape(points, params), landscape(shuffled, params))


@settings(max_examples=1000)
@given(diagram_points(max_size=6), st.builds(LandscapeParams, k=st.integers(1, 4), q=st.integers(2, 8)))
def test_matches_brute_force(points, params):
    np.testing.assert_allclose(landscape(points, params), _brute_force(points, params), atol=1e-12)


def test_gradient_apex_and_flat_region():
    params = LandscapeParams(k=1, q=3)
    grad = landscape_gradient([PersistencePoint(0.2, 0.8, 1)], params, np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(grad, [[-0.5, 0.5]])

    flat = landscape_gradient([PersistencePoint(0.1, 0.2, 1)], params, np.ones(3))
    np.testing.assert_array_equal(flat, [[0.0, 0.0]])

    with pytest.raises(ArgumentError):
        landscape_gradient([PersistencePoint(0.2, 0.8, 1)], params, np.ones(4))


def _degenerate(pairs: np.ndarray, params: LandscapeParams, margin: float = 1e-4) -> bool:
    x = (pairs[:, 0] + pairs[:, 1]) / 2.0
    y = (pairs[:, 1] - pairs[:, 0]) / 2.0
    distance = np.abs(params.bins[:, None] - x[None, :])
    if np.any(distance < margin) or np.any(np.abs(y[None, :] - distance) < margin):
        return True
    tents = np.maximum(0.0, y[None, :] - distance)
    for row in np.sort(tents, axis=1)[:, ::-1]:
        top = row[:params.k + 1]
        gaps = top[:-1] - top[1:]
        if np.any((top[:-1] > 0) & (gaps < margin)):
            return True
    return False


def test_gradient_matches_finite_differences():
    params = LandscapeParams(k=3, q=20)
    rng = np.random.default_rng(3)
    h = 1e-6
    checked = 0
    for _ in range(200):
        pairs = np.sort(rng.uniform(0.0, 1.0, size=(rng.integers(1, 7), 2)), axis=1)
        if _degenerate(pairs, params):
            continue
        upstream = rng.normal(size=params.size)
        analytic = landscape_gradient(pairs, params, upstream)
        numeric = np.zeros_like(pairs)
        for index in np.ndindex(pairs.shape):
            plus, minus = pairs.copy(), pairs.copy()
            plus[index] += h
            minus[index] -= h
            numeric[index] = (landscape(plus, params) - landscape(minus, params)) @ upstream / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)
        checked += 1
    assert checked >= 20


def test_featurize_constant_image():
    params = LandscapeParams(k=3, q=50)
    feature = featurize(GrayImage.from_array(np.full((5, 5), 0.7)), params)
    assert feature.v0.shape == feature.v1.shape == (150,)
    np.testing.assert_array_equal(feature.v1, np.zeros(150))
    expected = landscape([PersistencePoint(1.0 - 0.7, 1.0, 0, True)], params)
    np.testing.assert_array_equal(feature.v0, expected)
    assert feature.concatenated().shape == (300,)


def test_featurize_sizes_for_dataset_defaults(ring_image):
    assert featurize(ring_image, LandscapeParams(k=2, q=50)).v0.shape == (100,)


def test_featurize_ring_has_hole(ring_image):
    params = LandscapeParams(k=1, q=11)
    feature = featurize(ring_image, params)
    diagram = image_diagram(ring_image)
    np.testing.assert_array_equal(feature.v1, landscape(diagram.d1, params))
    assert feature.v1.max() == pytest.approx(0.4)


def test_featurize_batch_preserves_order(pattern_sets):
    train_set, _ = pattern_sets
    images = train_set.images[:6]
    params = LandscapeParams(k=2, q=10)
    sequential = featurize_batch(images, params, workers=1)
    parallel = featurize_batch(images, params, workers=2)
    for a, b, image in zip(sequential, parallel, images):
        expected = featurize(image, params)
        np.testing.assert_array_equal(a.v0, expected.v0)
        np.testing.assert_array_equal(b.v1, expected.v1)


def test_feature_file_round_trip(tmp_path, pattern_sets):
    train_set, _ = pattern_sets
    params = LandscapeParams(k=2, q=10)
    features = featurize_batch(train_set.images[:4], params, workers=1)
    path = tmp_path / "features.bin"
    write_feature_file(path, features, train_set.labels[:4], params)

    data = path.read_bytes()
    assert FEATURE_HEADER.unpack_from(data) == (b"TPLF", 1, 4, 2, 10, 2)
    assert len(data) == FEATURE_HEADER.size + 4 * (2 * 20 * 4 + 4)

    loaded, labels, loaded_params = read_feature_file(path)
    assert loaded_params == params
    np.testing.assert_array_equal(labels, train_set.labels[:4])
    for original, restored in zip(features, loaded):
        np.testing.assert_allclose(restored.v0, original.v0, rtol=1e-6)
        np.testing.assert_allclose(restored.v1, original.v1, rtol=1e-6)


def test_feature_file_errors(tmp_path):
    bad_magic = tmp_path / "bad.bin"
    bad_magic.write_bytes(FEATURE_HEADER.pack(b"NOPE", 1, 0, 2, 10, 2))
    with pytest.raises(FormatError):
        read_feature_file(bad_magic)

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(FEATURE_HEADER.pack(b"TPLF", 1, 2, 1, 2, 2) + struct.pack("<4f", 0, 0, 0, 0))
    with pytest.raises(LengthError):
        read_feature_file(truncated)

    with pytest.raises(ArgumentError):
        write_feature_file(tmp_path / "x.bin", [], [1], LandscapeParams(k=1, q=2))


def test_feature_csv(tmp_path, pattern_sets):
    train_set, _ = pattern_sets
    params = LandscapeParams(k=1, q=3)
    features = featurize_batch(train_set.images[:3], params, workers=1)
    path = tmp_path / "features.csv"
    write_feature_csv(path, features, train_set.labels[:3], params)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["label", "v0_0", "v0_1", "v0_2", "v1_0", "v1_1", "v1_2"]
    assert frame["label"].tolist() == train_set.labels[:3].tolist()
    np.testing.assert_allclose(frame[["v1_0", "v1_1", "v1_2"]].to_numpy()[1], features[1].v1)


def _noisy_digit_like(rng) -> GrayImage:
    rows, cols = np.mgrid[0:28, 0:28]
    radius = np.hypot(rows - 13.5, cols - 13.5)
    ring = ((radius > 6) & (radius < 10)).astype(np.float64)
    noise = rng.uniform(0.0, 0.3, size=(28, 28))
    return GrayImage.from_array(np.clip(0.7 * ring + noise, 0.0, 1.0))


@pytest.mark.slow
def test_featurize_batch_throughput():
    rng = np.random.default_rng(0)
    images = [_noisy_digit_like(rng) for _ in range(200)]
    start = time.perf_counter()
    features = featurize_batch(images, LandscapeParams(k=3, q=50), workers=1)
    elapsed = time.perf_counter() - start
    assert len(features) == 200
    assert all(f.v1.max() > 0.0 for f in features)
    assert elapsed < 2.0
