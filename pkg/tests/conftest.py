import gzip
import os
import struct
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.imageio import GrayImage, LabeledImageSet  # noqa: E402

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def _write(path: Path, data: bytes) -> Path:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "wb") as f:
            f.write(data)
    else:
        path.write_bytes(data)
    return path


@pytest.fixture
def write_idx_images():
    def write(path, images, magic=0x00000803):
        images = np.asarray(images, dtype=np.uint8)
        header = struct.pack(">IIII", magic, *images.shape)
        return _write(path, header + images.tobytes())
    return write


@pytest.fixture
def write_idx_labels():
    def write(path, labels, magic=0x00000801):
        labels = np.asarray(labels, dtype=np.uint8)
        return _write(path, struct.pack(">II", magic, len(labels)) + labels.tobytes())
    return write


@pytest.fixture
def write_pgm():
    def write(path, pixels, maxval=255, comment=None):
        pixels = np.asarray(pixels, dtype=np.uint8)
        height, width = pixels.shape
        header = b"P5\n"
        if comment:
            header += b"# " + comment.encode() + b"\n"
        header += f"{width} {height}\n{maxval}\n".encode()
        path = Path(path)
        path.write_bytes(header + pixels.tobytes())
        return path
    return write


@pytest.fixture
def ring_image():
    """3x3: bordo a 1.0, centro a 0.2."""
    pixels = np.ones((3, 3))
    pixels[1, 1] = 0.2
    return GrayImage.from_array(pixels)


def _pattern(label: int, size: int) -> np.ndarray:
    image = np.zeros((size, size))
    if label == 0:
        # Anello
        image[1:-1, 1:-1] = 1.0
        image[2:-2, 2:-2] = 0.0
    elif label == 1:
        # Barra verticale
        image[1:-1, size // 2] = 1.0
    else:
        # Due buchi
        image[1:-1, 1:-1] = 1.0
        image[2, 2:-2] = 0.0
        image[-3, 2:-2] = 0.0
    return image


def make_pattern_set(count: int, seed: int, size: int = 8, classes: int = 3) -> LabeledImageSet:
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % classes
    images = []
    for label in labels:
        noisy = _pattern(int(label), size) * rng.uniform(0.7, 1.0) + rng.uniform(0.0, 0.2, (size, size))
        images.append(GrayImage.from_array(np.clip(noisy, 0.0, 1.0)))
    return LabeledImageSet(tuple(images), labels, classes)


@pytest.fixture
def pattern_sets():
    """Piccoli training/test set sintetici a 3 classi (anello, barra, due buchi)."""
    return make_pattern_set(30, seed=1), make_pattern_set(12, seed=2)


@pytest.fixture
def pattern_set_factory():
    return make_pattern_set
