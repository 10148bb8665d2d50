"""
Caricamento di dataset di immagini in scala di grigi etichettate.

Formati supportati: IDX (layout MNIST, header big-endian a 32 bit, anche
compresso .gz) e directory di classi con file PGM binari (P5, maxval 255).
Le intensità sono sempre normalizzate come b / 255.
"""
import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArgumentError, ConsistencyError, EmptyClassError, FormatError, LengthError
from .log import logger
from .seeding import splitmix64_stream
from config.config import DATA_PATH, DATASETS

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
PGM_MAGIC = b"P5"
PGM_MAXVAL = 255

PathLike = Union[str, os.PathLike]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immagine H x W con intensità in [0, 1], memorizzata row-major."""
    height: int
    width: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ArgumentError(f"dimensioni non valide: {self.height}x{self.width}")
        pixels = np.array(self.pixels, dtype=np.float64).reshape(self.height, self.width)
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ArgumentError("intensità fuori da [0, 1]")
        pixels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_array(cls, array) -> "GrayImage":
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ArgumentError(f"attesa una matrice 2D, ricevuto shape {array.shape}")
        return cls(array.shape[0], array.shape[1], array)

    @classmethod
    def from_bytes(cls, height: int, width: int, data: bytes) -> "GrayImage":
        raw = np.frombuffer(data, dtype=np.uint8, count=height * width)
        return cls(height, width, raw / 255.0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    def __hash__(self) -> int:
        return hash((self.height, self.width, self.pixels.tobytes()))


@dataclass(frozen=True, eq=False)
class LabeledImageSet:
    images: Tuple[GrayImage, ...]
    labels: np.ndarray
    class_count: int
    class_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        if len(self.images) != len(labels):
            raise ConsistencyError(
                f"{len(self.images)} immagini ma {len(labels)} etichette"
            )
        if len(labels) and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ConsistencyError(f"etichette fuori da [0, {self.class_count})")
        labels.flags.writeable = False
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.images)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledImageSet):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and np.array_equal(self.labels, other.labels)
            and all(a == b for a, b in zip(self.images, other.images))
        )

    def take(self, indices: Sequence[int]) -> "LabeledImageSet":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledImageSet(
            tuple(self.images[i] for i in indices),
            self.labels[indices],
            self.class_count,
            self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def pixel_matrix(self) -> np.ndarray:
        """Matrice N x (H*W) delle intensità, per il ramo pixel della rete."""
        if not self.images:
            return np.zeros((0, 0))
        shapes = {image.shape for image in self.images}
        if len(shapes) != 1:
            raise ConsistencyError(f"immagini di dimensioni diverse: {sorted(shapes)}")
        return np.stack([image.pixels.ravel() for image in self.images])


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _read_idx(path: PathLike, magic: int) -> Tuple[List[int], bytes]:
    data = _read_bytes(path)
    if len(data) < 4:
        raise LengthError(f"header IDX troncato: {path}")
    found, = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"magic number IDX inatteso in {path}: 0x{found:08x} (atteso 0x{magic:08x})")
    ndim = magic & 0xFF
    header_size = 4 + 4 * ndim
    if len(data) < header_size:
        raise LengthError(f"header IDX troncato: {path}")
    dims = list(struct.unpack(f">{ndim}I", data[4:header_size]))
    expected = int(np.prod(dims))
    payload = data[header_size:]
    if len(payload) != expected:
        raise LengthError(
            f"payload IDX di {len(payload)} byte in {path}, attesi {expected} (dimensioni {dims})"
        )
    return dims, payload


def load_idx(image_path: PathLike, label_path: PathLike,
             class_count: Optional[int] = None) -> LabeledImageSet:
    """Carica una coppia di file IDX (immagini + etichette)."""
    (count, rows, cols), pixels = _read_idx(image_path, IDX_IMAGE_MAGIC)
    (label_count,), label_bytes = _read_idx(label_path, IDX_LABEL_MAGIC)
    if count != label_count:
        raise ConsistencyError(f"{count} immagini ma {label_count} etichette")

    array = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows, cols) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if count else 0
    images = tuple(GrayImage(rows, cols, array[i]) for i in range(count))
    logger.info(f"📂 Caricate {count:,} immagini {rows}x{cols} da {Path(image_path).name}")
    return LabeledImageSet(images, labels, class_count)


def _pgm_tokens(data: bytes, count: int) -> Tuple[List[bytes], int]:
    """Legge `count` token dell'header PGM saltando i commenti."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("header PGM incompleto")
        tokens.append(data[start:pos])
    # Un singolo carattere di whitespace separa l'header dai dati
    return tokens, pos + 1


def load_pgm(path: PathLike) -> GrayImage:
    data = _read_bytes(path)
    if data[:2] != PGM_MAGIC:
        raise FormatError(f"non è un file PGM binario (P5): {path}")
    tokens, offset = _pgm_tokens(data, 4)
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise FormatError(f"header PGM non numerico: {path}")
    if maxval != PGM_MAXVAL:
        raise FormatError(f"maxval PGM {maxval} non supportato (solo {PGM_MAXVAL}): {path}")
    payload = data[offset:]
    if len(payload) < width * height:
        raise LengthError(f"dati PGM troncati in {path}: {len(payload)} byte, attesi {width * height}")
    return GrayImage.from_bytes(height, width, payload)


def load_image_dir(root: PathLike) -> LabeledImageSet:
    """Carica una directory con una sottocartella di file PGM per classe.

    Gli indici di classe seguono l'ordine lessicografico delle sottocartelle.
    """
    root = Path(root)
    if not root.is_dir():
        raise ArgumentError(f"directory non trovata: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    images: List[GrayImage] = []
    labels: List[int] = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(p for p in class_dir.iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise EmptyClassError(f"classe vuota: {class_dir.name}")
        for file in files:
            images.append(load_pgm(file))
            labels.append(label)
        logger.debug(f"📁 Classe {class_dir.name}: {len(files)} immagini")
    logger.info(f"📂 Caricate {len(images):,} immagini in {len(class_dirs)} classi da {root}")
    return LabeledImageSet(tuple(images), np.array(labels, dtype=np.int64), len(class_dirs),
                           tuple(p.name for p in class_dirs))


def _resolve_idx_file(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise ArgumentError(f"file IDX non trovato: {directory / name}[.gz]")


def load_split(dataset: str, split: str, data_path: Optional[PathLike] = None) -> LabeledImageSet:
    """Carica lo split `train` o `test` di un dataset registrato o di una directory."""
    if split not in ("train", "test"):
        raise ArgumentError(f"split sconosciuto: {split}")
    data_path = Path(data_path) if data_path is not None else DATA_PATH
    if dataset in DATASETS:
        entry: Dict = DATASETS[dataset]
        directory = data_path / dataset
        return load_idx(_resolve_idx_file(directory, entry[f"{split}_images"]),
                        _resolve_idx_file(directory, entry[f"{split}_labels"]))
    root = Path(dataset)
    if (root / split).is_dir():
        return load_image_dir(root / split)
    raise ArgumentError(f"dataset sconosciuto: {dataset}")


def subsample_indices(set_size: int, n: int, seed: int) -> np.ndarray:
    """Indici ordinati di `n` elementi distinti (Fisher-Yates parziale).

    Parte da [0, set_size) e al passo i scambia la posizione i con
    i + u_i mod (set_size - i), dove u_i è l'i-esima uscita di
    splitmix64_stream(seed); restituisce le prime n posizioni ordinate.
    Lo scarto del modulo su 64 bit è sotto 1e-14 per set fino a 60000.
    """
    if n < 0 or n > set_size:
        raise ArgumentError(f"impossibile estrarre {n} elementi da {set_size}")
    pool = np.arange(set_size, dtype=np.int64)
    for i, draw in enumerate(splitmix64_stream(seed, n)):
        j = i + draw % (set_size - i)
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:n])


def subsample(image_set: LabeledImageSet, n: int, seed: int) -> LabeledImageSet:
    indices = subsample_indices(len(image_set), n, seed)
    if n == len(image_set):
        return image_set
    return image_set.take(indices)
