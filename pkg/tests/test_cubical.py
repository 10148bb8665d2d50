import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.cubical import build_complex, complex_at_threshold, complex_to_json
from src.errors import ArgumentError
from src.imageio import GrayImage

images = st.integers(min_value=1, max_value=6).flatmap(
    lambda h: st.integers(min_value=1, max_value=6).flatmap(
        lambda w: arrays(np.float64, (h, w), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
    )
).map(GrayImage.from_array)


def test_single_pixel_propagates_value():
    complex_ = build_complex(GrayImage.from_array([[0.7]]))
    assert (complex_.vertex_count, complex_.edge_count, complex_.square_count) == (4, 4, 1)
    np.testing.assert_allclose(complex_.values, 0.3)


def test_cell_counts_2x2():
    complex_ = build_complex(GrayImage.from_array(np.zeros((2, 2))))
    assert (complex_.vertex_count, complex_.edge_count, complex_.square_count) == (9, 12, 4)
    assert len(complex_) == 25


def test_shared_edge_takes_minimum():
    complex_ = build_complex(GrayImage.from_array([[1.0, 0.0]]))
    # Lato verticale tra i due pixel: riga 0, colonna 1 della griglia dei lati verticali
    n_horizontal = 2 * 2
    shared = complex_.vertex_count + n_horizontal + 1
    assert complex_.dims[shared] == 1
    assert complex_.values[shared] == 0.0
    assert set(complex_.boundary(shared)) == {1, 4}


@given(images)
def test_faces_enter_before_cofaces(image):
    complex_ = build_complex(image)
    ranks = complex_.ranks()
    for cell in complex_.cells:
        for face in cell.boundary:
            assert complex_.dims[face] == cell.dim - 1
            assert complex_.values[face] <= cell.filtration_value
            assert ranks[face] < ranks[cell.id]


@given(images)
def test_border_faces_take_minimum_over_existing_pixels(image):
    complex_ = build_complex(image)
    g = 1.0 - image.pixels
    h, w = image.shape
    for r in range(h + 1):
        for c in range(w + 1):
            cofaces = [g[i, j] for i in (r - 1, r) for j in (c - 1, c) if 0 <= i < h and 0 <= j < w]
            assert complex_.values[r * (w + 1) + c] == min(cofaces)


@given(images, st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
def test_threshold_subcomplexes_are_closed_and_nested(image, a, b):
    complex_ = build_complex(image)
    low, high = sorted((a, b))
    small = complex_at_threshold(complex_, low)
    large = complex_at_threshold(complex_, high)
    assert small <= large
    for cell_id in small:
        assert set(complex_.boundary(cell_id)) <= small


def test_threshold_extremes():
    pixels = np.array([[1.0, 0.0], [0.5, 1.0]])
    complex_ = build_complex(GrayImage.from_array(pixels))
    assert complex_at_threshold(complex_, 1.0) == frozenset(range(len(complex_)))
    at_zero = complex_at_threshold(complex_, 0.0)
    squares = {i for i in at_zero if complex_.dims[i] == 2}
    offset = complex_.vertex_count + complex_.edge_count
    assert squares == {offset + 0, offset + 3}


def test_threshold_out_of_range():
    complex_ = build_complex(GrayImage.from_array([[0.5]]))
    with pytest.raises(ArgumentError):
        complex_at_threshold(complex_, 1.5)
    with pytest.raises(ArgumentError):
        complex_at_threshold(complex_, -0.1)


def test_complex_to_json():
    document = complex_to_json(build_complex(GrayImage.from_array([[0.25]])))
    assert (document["height"], document["width"]) == (1, 1)
    assert len(document["cells"]) == 9
    square = document["cells"][-1]
    assert square["dim"] == 2 and square["value"] == 0.75
    assert len(square["boundary"]) == 4
