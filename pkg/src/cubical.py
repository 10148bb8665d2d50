"""
Complesso cubico filtrato di un'immagine in scala di grigi.

Ogni pixel (i, j) è un quadrato (2-cella) con valore di filtrazione
g(i, j) = 1 - X[i, j]: i pixel chiari entrano per primi. Lati e vertici
prendono il minimo di g sui pixel che li contengono, così la filtrazione
per sottolivelli è valida anche al bordo dell'immagine.

Layout degli id (densi):
    vertici       [0, V)            vertice (r, c)  -> r * (W + 1) + c
    lati orizz.   [V, V + Eh)       lato (r, c)     -> (r, c)-(r, c + 1)
    lati vert.    [V + Eh, V + E)   lato (r, c)     -> (r, c)-(r + 1, c)
    quadrati      [V + E, N)        pixel (i, j)
"""
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Tuple

import numpy as np

from .errors import ArgumentError
from .imageio import GrayImage


@dataclass(frozen=True)
class Cell:
    dim: int
    id: int
    filtration_value: float
    boundary: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class FilteredComplex:
    height: int
    width: int
    dims: np.ndarray            # dimensione di ogni cella
    values: np.ndarray          # valore di filtrazione di ogni cella
    edge_vertices: np.ndarray   # (E, 2) id dei vertici di ogni lato
    square_edges: np.ndarray    # (F, 4) id dei lati di ogni quadrato
    sorted_order: np.ndarray    # permutazione ordinata per (valore, dim, id)

    @property
    def vertex_count(self) -> int:
        return (self.height + 1) * (self.width + 1)

    @property
    def edge_count(self) -> int:
        return self.height * (self.width + 1) + self.width * (self.height + 1)

    @property
    def square_count(self) -> int:
        return self.height * self.width

    def __len__(self) -> int:
        return len(self.values)

    def boundary(self, cell_id: int) -> Tuple[int, ...]:
        dim = self.dims[cell_id]
        if dim == 0:
            return ()
        if dim == 1:
            return tuple(int(v) for v in self.edge_vertices[cell_id - self.vertex_count])
        offset = self.vertex_count + self.edge_count
        return tuple(int(e) for e in self.square_edges[cell_id - offset])

    def cell(self, cell_id: int) -> Cell:
        return Cell(int(self.dims[cell_id]), int(cell_id), float(self.values[cell_id]),
                    self.boundary(cell_id))

    @property
    def cells(self) -> List[Cell]:
        return [self.cell(i) for i in range(len(self))]

    def ranks(self) -> np.ndarray:
        """Posizione di ogni cella in `sorted_order`."""
        ranks = np.empty(len(self.sorted_order), dtype=np.int64)
        ranks[self.sorted_order] = np.arange(len(self.sorted_order))
        return ranks


def _face_values(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Valori di vertici, lati orizzontali e verticali come minimo sui pixel cofacce."""
    h, w = g.shape
    padded = np.full((h + 2, w + 2), np.inf)
    padded[1:-1, 1:-1] = g
    vertices = np.minimum.reduce([
        padded[0:h + 1, 0:w + 1], padded[0:h + 1, 1:w + 2],
        padded[1:h + 2, 0:w + 1], padded[1:h + 2, 1:w + 2],
    ])
    horizontal = np.minimum(padded[0:h + 1, 1:w + 1], padded[1:h + 2, 1:w + 1])
    vertical = np.minimum(padded[1:h + 1, 0:w + 1], padded[1:h + 1, 1:w + 2])
    return vertices, horizontal, vertical


def _grid_incidences(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    vertex_id = np.arange((h + 1) * (w + 1)).reshape(h + 1, w + 1)
    n_vertices = vertex_id.size
    n_horizontal = (h + 1) * w

    horizontal = np.stack([vertex_id[:, :-1].ravel(), vertex_id[:, 1:].ravel()], axis=1)
    vertical = np.stack([vertex_id[:-1, :].ravel(), vertex_id[1:, :].ravel()], axis=1)
    edge_vertices = np.concatenate([horizontal, vertical])

    horizontal_id = n_vertices + np.arange(n_horizontal).reshape(h + 1, w)
    vertical_id = n_vertices + n_horizontal + np.arange(h * (w + 1)).reshape(h, w + 1)
    square_edges = np.stack([
        horizontal_id[:-1, :].ravel(), horizontal_id[1:, :].ravel(),
        vertical_id[:, :-1].ravel(), vertical_id[:, 1:].ravel(),
    ], axis=1)
    return edge_vertices, square_edges


def build_complex(image: GrayImage) -> FilteredComplex:
    h, w = image.shape
    g = 1.0 - image.pixels
    vertex_values, horizontal_values, vertical_values = _face_values(g)
    values = np.concatenate([
        vertex_values.ravel(), horizontal_values.ravel(), vertical_values.ravel(), g.ravel(),
    ])
    dims = np.concatenate([
        np.zeros(vertex_values.size, dtype=np.int8),
        np.ones(horizontal_values.size + vertical_values.size, dtype=np.int8),
        np.full(g.size, 2, dtype=np.int8),
    ])
    edge_vertices, square_edges = _grid_incidences(h, w)
    ids = np.arange(len(values))
    # A parità di valore le celle di dimensione minore precedono le cofacce
    sorted_order = np.lexsort((ids, dims, values))
    for array in (values, dims, edge_vertices, square_edges, sorted_order):
        array.flags.writeable = False
    return FilteredComplex(h, w, dims, values, edge_vertices, square_edges, sorted_order)


def complex_at_threshold(complex_: FilteredComplex, alpha: float) -> FrozenSet[int]:
    """Id delle celle con valore di filtrazione <= alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha fuori da [0, 1]: {alpha}")
    return frozenset(int(i) for i in np.flatnonzero(complex_.values <= alpha))


def complex_to_json(complex_: FilteredComplex) -> Dict:
    """Dump di debug del complesso (sottocomando `complex`)."""
    return {
        "height": complex_.height,
        "width": complex_.width,
        "cells": [
            {"id": cell.id, "dim": cell.dim, "value": cell.filtration_value,
             "boundary": list(cell.boundary)}
            for cell in complex_.cells
        ],
    }
