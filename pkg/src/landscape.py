"""
Vettorizzazione dei diagrammi di persistenza come top-k persistence landscape.

Ogni punto (b, d) diventa la funzione triangolo max(0, y - |t - x|) con
x = (b + d) / 2 e y = (d - b) / 2; su ognuno dei q bin equispaziati si
tengono i k valori più grandi. L'output è layer-major: landscape 1 su
tutti i bin, poi landscape 2, ...

Il range dei bin è globale ([0, 1] di default) e non per immagine, così
i vettori sono confrontabili tra immagini diverse.
"""
import struct
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .batch import parallel_map
from .cubical import build_complex
from .errors import ArgumentError, FormatError, LengthError
from .imageio import GrayImage, PathLike
from .log import logger
from .persistence import PersistencePoint, compute_diagram
from config.config import LANDSCAPE_T_MAX, LANDSCAPE_T_MIN

FEATURE_MAGIC = b"TPLF"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sIIIII")

Points = Union[Sequence[PersistencePoint], np.ndarray]


@dataclass(frozen=True)
class LandscapeParams:
    k: int
    q: int
    t_min: float = LANDSCAPE_T_MIN
    t_max: float = LANDSCAPE_T_MAX

    def __post_init__(self):
        if self.k < 1 or self.q < 2 or not self.t_min < self.t_max:
            raise ArgumentError(f"parametri landscape non validi: {self}")

    @property
    def size(self) -> int:
        return self.k * self.q

    @property
    def bins(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.q)


@dataclass(frozen=True, eq=False)
class LandscapeFeature:
    v0: np.ndarray
    v1: np.ndarray

    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.v0, self.v1])


def _as_pairs(points: Points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.reshape(-1, 2).astype(np.float64)
    return np.array([(p.birth, p.death) for p in points], dtype=np.float64).reshape(-1, 2)


def triangle_transform(point: PersistencePoint, t: float) -> float:
    x = (point.birth + point.death) / 2.0
    y = (point.death - point.birth) / 2.0
    return max(0.0, y - abs(t - x))


def _tents(pairs: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Matrice (q, P) dei valori dei triangoli sui bin."""
    x = (pairs[:, 0] + pairs[:, 1]) / 2.0
    y = (pairs[:, 1] - pairs[:, 0]) / 2.0
    return np.maximum(0.0, y[None, :] - np.abs(bins[:, None] - x[None, :]))


def _top_k_order(tents: np.ndarray, k: int) -> np.ndarray:
    """Indici dei punti selezionati per bin, (q, min(k, P)); parità -> indice minore."""
    order = np.argsort(-tents, axis=1, kind="stable")
    return order[:, :k]


def landscape(points: Points, params: LandscapeParams) -> np.ndarray:
    pairs = _as_pairs(points)
    out = np.zeros((params.k, params.q))
    if len(pairs):
        tents = _tents(pairs, params.bins)
        selected = _top_k_order(tents, params.k)
        top = np.take_along_axis(tents, selected, axis=1)
        out[:top.shape[1], :] = top.T
    return out.ravel()


def landscape_gradient(points: Points, params: LandscapeParams, upstream: np.ndarray) -> np.ndarray:
    """Subgradiente del landscape rispetto a (nascita, morte) di ogni punto.

    Sul lato crescente del triangolo d/d nascita = -1, su quello
    decrescente d/d morte = +1; all'apice si usa la media dei limiti
    unilaterali (-1/2, +1/2); dove il triangolo vale 0 il gradiente è 0.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (params.size,):
        raise ArgumentError(f"upstream di lunghezza {upstream.size}, attesa {params.size}")
    pairs = _as_pairs(points)
    grad = np.zeros_like(pairs)
    if not len(pairs):
        return grad

    bins = params.bins
    tents = _tents(pairs, bins)
    selected = _top_k_order(tents, params.k)
    weights = upstream.reshape(params.k, params.q)
    x = (pairs[:, 0] + pairs[:, 1]) / 2.0
    for layer in range(selected.shape[1]):
        for n, p in enumerate(selected[:, layer]):
            if tents[n, p] <= 0.0:
                continue
            w = weights[layer, n]
            t = bins[n]
            if t < x[p]:
                grad[p, 0] -= w
            elif t > x[p]:
                grad[p, 1] += w
            else:
                grad[p, 0] -= 0.5 * w
                grad[p, 1] += 0.5 * w
    return grad


def featurize(image: GrayImage, params: LandscapeParams) -> LandscapeFeature:
    """complesso cubico -> diagramma -> landscape per D0 e D1."""
    diagram = compute_diagram(build_complex(image))
    return LandscapeFeature(landscape(diagram.d0, params), landscape(diagram.d1, params))


def featurize_batch(images: Sequence[GrayImage], params: LandscapeParams,
                    workers: Optional[int] = None) -> List[LandscapeFeature]:
    logger.info(f"🚀 Featurizzazione di {len(images):,} immagini (k={params.k}, q={params.q})")
    return parallel_map(partial(featurize, params=params), images, workers,
                        description="immagini")


def stack_features(features: Sequence[LandscapeFeature], size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Matrici (N, k*q) di V0 e V1."""
    if not features:
        return np.zeros((0, size)), np.zeros((0, size))
    return np.stack([f.v0 for f in features]), np.stack([f.v1 for f in features])


def _record_dtype(size: int) -> np.dtype:
    return np.dtype([("v0", "<f4", (size,)), ("v1", "<f4", (size,)), ("label", "<u4")])


def write_feature_file(path: PathLike, features: Sequence[LandscapeFeature],
                       labels: Sequence[int], params: LandscapeParams) -> None:
    """Formato binario little-endian TPLF: header, poi per immagine v0, v1 (float32) e label (u32)."""
    if len(features) != len(labels):
        raise ArgumentError(f"{len(features)} feature ma {len(labels)} etichette")
    record = _record_dtype(params.size)
    rows = np.zeros(len(features), dtype=record)
    for i, (feature, label) in enumerate(zip(features, labels)):
        rows[i] = (feature.v0, feature.v1, label)
    with open(path, "wb") as f:
        f.write(FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, len(features),
                                    params.k, params.q, 2))
        f.write(rows.tobytes())
    logger.info(f"✅ {len(features):,} feature scritte in {path}")


def read_feature_file(path: PathLike) -> Tuple[List[LandscapeFeature], np.ndarray, LandscapeParams]:
    data = Path(path).read_bytes()
    if len(data) < FEATURE_HEADER.size:
        raise LengthError(f"header TPLF troncato: {path}")
    magic, version, count, k, q, dims = FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC or version != FEATURE_VERSION or dims != 2:
        raise FormatError(f"file feature non riconosciuto: {path}")
    params = LandscapeParams(k, q)
    record = _record_dtype(params.size)
    payload = data[FEATURE_HEADER.size:]
    if len(payload) != count * record.itemsize:
        raise LengthError(f"payload TPLF di {len(payload)} byte, attesi {count * record.itemsize}")
    rows = np.frombuffer(payload, dtype=record, count=count)
    features = [LandscapeFeature(row["v0"].astype(np.float64), row["v1"].astype(np.float64))
                for row in rows]
    return features, rows["label"].astype(np.int64), params


def write_feature_csv(path: PathLike, features: Sequence[LandscapeFeature],
                      labels: Sequence[int], params: LandscapeParams) -> None:
    """Una riga per immagine: label, v0..., v1..."""
    v0, v1 = stack_features(features, params.size)
    columns = ([f"v0_{i}" for i in range(params.size)] + [f"v1_{i}" for i in range(params.size)])
    frame = pd.DataFrame(np.hstack([v0, v1]), columns=columns)
    frame.insert(0, "label", np.asarray(labels, dtype=np.int64))
    frame.to_csv(path, index=False)
    logger.info(f"✅ {len(frame):,} righe di feature scritte in {path}")
