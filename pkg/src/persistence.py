"""
Omologia persistente 0D e 1D di un complesso cubico filtrato.

Le coppie si ottengono per riduzione a colonne della matrice di bordo su
Z/2 nell'ordine `sorted_order` (con clearing: prima le colonne dei
quadrati, poi quelle dei lati non già marcate come positive). Il percorso
veloce usa solo union-find: D0 con la regola dell'anziano sui vertici, D1
sul grafo duale dei quadrati (più la faccia esterna) in ordine inverso. I
due percorsi devono produrre le stesse coppie.

Le coordinate sono quelle di filtrazione alpha = 1 - intensità. La classe
essenziale di D0 muore per convenzione a 1.0 (fine della filtrazione).
"""
import json
from dataclasses import dataclass
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .batch import parallel_map
from .cubical import FilteredComplex, build_complex
from .errors import ArgumentError
from .imageio import GrayImage, LabeledImageSet
from .union_find import UnionFind
from config.config import CENSUS_MIN_PERSISTENCE

ESSENTIAL_DEATH = 1.0
METHODS = ("reduction", "union_find")


@dataclass(frozen=True)
class PersistencePoint:
    birth: float
    death: float
    dim: int
    essential: bool = False

    def __post_init__(self):
        if self.birth > self.death:
            raise ArgumentError(f"nascita {self.birth} successiva alla morte {self.death}")
        if self.essential and self.death != ESSENTIAL_DEATH:
            raise ArgumentError("un punto essenziale deve morire a 1.0")

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class PersistenceDiagram:
    d0: Tuple[PersistencePoint, ...]
    d1: Tuple[PersistencePoint, ...]

    def points(self, dim: int) -> Tuple[PersistencePoint, ...]:
        if dim == 0:
            return self.d0
        if dim == 1:
            return self.d1
        raise ArgumentError(f"dimensione omologica non supportata: {dim}")

    def as_array(self, dim: int) -> np.ndarray:
        """Matrice (P, 2) di (nascita, morte)."""
        points = self.points(dim)
        return np.array([(p.birth, p.death) for p in points], dtype=np.float64).reshape(len(points), 2)


@dataclass(frozen=True)
class PersistencePairs:
    """Coppie grezze (id cella nascita, id cella morte), persistenza zero inclusa."""
    pairs: Tuple[Tuple[int, int], ...]
    essential: Tuple[int, ...]


def _add_columns(a: List[int], b: List[int]) -> List[int]:
    """Somma su Z/2 di due colonne come liste ordinate (differenza simmetrica)."""
    out = []
    i = j = 0
    len_a, len_b = len(a), len(b)
    while i < len_a and j < len_b:
        x, y = a[i], b[j]
        if x < y:
            out.append(x)
            i += 1
        elif y < x:
            out.append(y)
            j += 1
        else:
            i += 1
            j += 1
    if i < len_a:
        out.extend(a[i:])
    if j < len_b:
        out.extend(b[j:])
    return out


def _reduce_columns(columns: Iterable[Tuple[int, List[int]]], reduced: Dict[int, List[int]],
                    cleared: frozenset) -> List[Tuple[int, int]]:
    """Riduzione standard; `reduced` mappa pivot -> colonna ridotta."""
    pairs = []
    for j, column in columns:
        if j in cleared:
            continue
        while column:
            reducer = reduced.get(column[-1])
            if reducer is None:
                break
            column = _add_columns(column, reducer)
        if column:
            reduced[column[-1]] = column
            pairs.append((column[-1], j))
    return pairs


def _elder_rule_pairs(complex_: FilteredComplex, ranks: np.ndarray) -> List[Tuple[int, int]]:
    """Coppie D0 per union-find: alla fusione muore la componente più giovane."""
    n_vertices = complex_.vertex_count
    edge_ranks = ranks[n_vertices:n_vertices + complex_.edge_count]
    uf = UnionFind(n_vertices)
    vertex_rank = ranks[:n_vertices].tolist()
    edge_vertices = complex_.edge_vertices.tolist()
    pairs = []
    for edge in np.argsort(edge_ranks).tolist():
        u, v = edge_vertices[edge]
        root_u, root_v = uf.find(u), uf.find(v)
        if root_u == root_v:
            continue
        # La radice è sempre il vertice più anziano della componente
        if vertex_rank[root_u] < vertex_rank[root_v]:
            elder, younger = root_u, root_v
        else:
            elder, younger = root_v, root_u
        uf.link(younger, elder)
        pairs.append((vertex_rank[younger], int(edge_ranks[edge])))
    return pairs


def _dual_pairs(complex_: FilteredComplex, ranks: np.ndarray) -> List[Tuple[int, int]]:
    """Coppie D1 per dualità: union-find sui quadrati in ordine inverso.

    Ogni lato separa due quadrati (o un quadrato e la faccia esterna, che
    non muore mai). Scorrendo i lati dal più giovane, un lato che unisce
    due componenti duali crea un ciclo, che muore con il quadrato di rango
    massimo della componente assorbita.
    """
    n_vertices = complex_.vertex_count
    n_edges = complex_.edge_count
    n_squares = complex_.square_count
    outside = n_squares
    square_offset = n_vertices + n_edges
    cofaces = np.full((n_edges, 2), outside, dtype=np.int64)
    flat = complex_.square_edges.ravel() - n_vertices
    owner = np.repeat(np.arange(n_squares), 4)
    order = np.argsort(flat, kind="stable")
    flat, owner = flat[order], owner[order]
    # I lati interni compaiono due volte, quelli di bordo una sola
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    cofaces[flat[first], 0] = owner[first]
    cofaces[flat[~first], 1] = owner[~first]

    edge_ranks = ranks[n_vertices:square_offset]
    square_rank = ranks[square_offset:].tolist() + [len(ranks)]
    uf = UnionFind(n_squares + 1)
    cofaces = cofaces.tolist()
    pairs = []
    for edge in np.argsort(-edge_ranks).tolist():
        a, b = cofaces[edge]
        root_a, root_b = uf.find(a), uf.find(b)
        if root_a == root_b:
            continue
        # La radice è sempre il quadrato di rango massimo della componente
        if square_rank[root_a] > square_rank[root_b]:
            elder, younger = root_a, root_b
        else:
            elder, younger = root_b, root_a
        uf.link(younger, elder)
        pairs.append((int(edge_ranks[edge]), square_rank[younger]))
    return pairs


def persistence_pairs(complex_: FilteredComplex, method: str = "union_find") -> PersistencePairs:
    if method not in METHODS:
        raise ArgumentError(f"metodo sconosciuto: {method}")
    order = complex_.sorted_order
    ranks = complex_.ranks()

    if method == "reduction":
        n_vertices = complex_.vertex_count
        square_offset = n_vertices + complex_.edge_count
        reduced: Dict[int, List[int]] = {}
        squares = zip(ranks[square_offset:].tolist(),
                      np.sort(ranks[complex_.square_edges], axis=1).tolist())
        pairs = _reduce_columns(sorted(squares), reduced, frozenset())
        # Clearing: i lati pivot di un quadrato sono positivi, la loro colonna si annulla
        cleared = frozenset(low for low, _ in pairs)
        edges = zip(ranks[n_vertices:square_offset].tolist(),
                    np.sort(ranks[complex_.edge_vertices], axis=1).tolist())
        pairs += _reduce_columns(sorted(edges), reduced, cleared)
    else:
        pairs = _dual_pairs(complex_, ranks) + _elder_rule_pairs(complex_, ranks)

    rank_pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    unpaired = np.ones(len(order), dtype=bool)
    unpaired[rank_pairs.ravel()] = False
    essential = tuple(order[np.flatnonzero(unpaired)].tolist())
    id_pairs = tuple(sorted(map(tuple, order[rank_pairs].tolist())))
    return PersistencePairs(id_pairs, essential)


def compute_diagram(complex_: FilteredComplex, method: str = "union_find") -> PersistenceDiagram:
    raw = persistence_pairs(complex_, method)
    values = complex_.values
    dims = complex_.dims
    ids = np.array(raw.pairs, dtype=np.int64).reshape(-1, 2)
    births, deaths = values[ids[:, 0]], values[ids[:, 1]]
    pair_dims = dims[ids[:, 0]]
    # Le coppie a persistenza nulla non contribuiscono al landscape
    keep = births < deaths
    essential = np.array(raw.essential, dtype=np.int64)
    points: Dict[int, List[PersistencePoint]] = {}
    for dim in (0, 1):
        mask = keep & (pair_dims == dim)
        points[dim] = [PersistencePoint(b, d, dim)
                       for b, d in zip(births[mask].tolist(), deaths[mask].tolist())]
        points[dim] += [PersistencePoint(v, ESSENTIAL_DEATH, dim, True)
                        for v in values[essential[dims[essential] == dim]].tolist()]
    key = lambda p: (p.birth, p.death, p.essential)
    return PersistenceDiagram(tuple(sorted(points[0], key=key)), tuple(sorted(points[1], key=key)))


def image_diagram(image: GrayImage, method: str = "union_find") -> PersistenceDiagram:
    return compute_diagram(build_complex(image), method)


def betti_oracle(image: GrayImage, alpha: float) -> Tuple[int, int]:
    """Numeri di Betti del sottocomplesso a soglia alpha, senza riduzione.

    b0 per union-find sui vertici, b1 = b0 - chi: un sottocomplesso planare
    non ha 2-cicli.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha fuori da [0, 1]: {alpha}")
    h, w = image.shape
    inside = (1.0 - image.pixels) <= alpha
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = inside
    vertices = (padded[0:h + 1, 0:w + 1] | padded[0:h + 1, 1:w + 2]
                | padded[1:h + 2, 0:w + 1] | padded[1:h + 2, 1:w + 2])
    horizontal = padded[0:h + 1, 1:w + 1] | padded[1:h + 2, 1:w + 1]
    vertical = padded[1:h + 1, 0:w + 1] | padded[1:h + 1, 1:w + 2]

    n_vertices = int(vertices.sum())
    if n_vertices == 0:
        return 0, 0
    uf = UnionFind((h + 1) * (w + 1))
    for r, c in zip(*np.nonzero(horizontal)):
        uf.union(r * (w + 1) + c, r * (w + 1) + c + 1)
    for r, c in zip(*np.nonzero(vertical)):
        uf.union(r * (w + 1) + c, (r + 1) * (w + 1) + c)
    # I vertici esclusi restano singoletti e vanno sottratti
    b0 = uf.components - (vertices.size - n_vertices)
    euler = n_vertices - int(horizontal.sum() + vertical.sum()) + int(inside.sum())
    return b0, b0 - euler


def betti_curve(diagram: PersistenceDiagram, dim: int, thresholds: Sequence[float]) -> np.ndarray:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) < 0):
        raise ArgumentError("le soglie devono essere ordinate")
    if thresholds.size and (thresholds[0] < 0.0 or thresholds[-1] > 1.0):
        raise ArgumentError("soglie fuori da [0, 1]")
    points = diagram.points(dim)
    counts = np.zeros(thresholds.shape, dtype=np.int64)
    for p in points:
        alive = thresholds >= p.birth
        if not p.essential:
            alive &= thresholds < p.death
        counts += alive
    return counts


def diagram_to_json(diagram: PersistenceDiagram) -> Dict:
    return {
        "d0": [[p.birth, p.death, p.essential] for p in diagram.d0],
        "d1": [[p.birth, p.death] for p in diagram.d1],
    }


def diagram_from_json(document: Dict) -> PersistenceDiagram:
    d0 = tuple(PersistencePoint(float(b), float(d), 0, bool(e)) for b, d, e in document["d0"])
    d1 = tuple(PersistencePoint(float(b), float(d), 1) for b, d in document["d1"])
    return PersistenceDiagram(d0, d1)


def dump_diagram(diagram: PersistenceDiagram) -> str:
    return json.dumps(diagram_to_json(diagram), indent=2)


def _has_perfect_matching(adjacency: List[List[int]], size: int) -> bool:
    """Matching perfetto bipartito per cammini aumentanti (Kuhn)."""
    match_right = [-1] * size

    def augment(left: int, seen: List[bool]) -> bool:
        for right in adjacency[left]:
            if seen[right]:
                continue
            seen[right] = True
            if match_right[right] < 0 or augment(match_right[right], seen):
                match_right[right] = left
                return True
        return False

    return all(augment(left, [False] * size) for left in range(size))


def bottleneck_distance(points_a: Sequence[PersistencePoint],
                        points_b: Sequence[PersistencePoint]) -> float:
    """Distanza bottleneck esatta (diagrammi piccoli).

    I punti essenziali si accoppiano solo tra loro; quelli finiti anche con
    la diagonale, a costo metà della persistenza.
    """
    essential_a = sorted(p.birth for p in points_a if p.essential)
    essential_b = sorted(p.birth for p in points_b if p.essential)
    if len(essential_a) != len(essential_b):
        return float("inf")
    essential_cost = max((abs(a - b) for a, b in zip(essential_a, essential_b)), default=0.0)

    a = np.array([(p.birth, p.death) for p in points_a if not p.essential]).reshape(-1, 2)
    b = np.array([(p.birth, p.death) for p in points_b if not p.essential]).reshape(-1, 2)
    n, m = len(a), len(b)
    if n + m == 0:
        return essential_cost
    pairwise = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2) if n and m else np.zeros((n, m))
    diagonal_a = (a[:, 1] - a[:, 0]) / 2.0
    diagonal_b = (b[:, 1] - b[:, 0]) / 2.0
    candidates = np.unique(np.concatenate([pairwise.ravel(), diagonal_a, diagonal_b, [0.0]]))

    size = n + m

    def feasible(cost: float) -> bool:
        # Sinistra: punti di A, poi proiezioni di B; destra: punti di B, poi proiezioni di A
        adjacency: List[List[int]] = []
        for i in range(n):
            row = [j for j in range(m) if pairwise[i, j] <= cost]
            if diagonal_a[i] <= cost:
                row.append(m + i)
            adjacency.append(row)
        for j in range(m):
            row = [j] if diagonal_b[j] <= cost else []
            row.extend(m + i for i in range(n))
            adjacency.append(row)
        return _has_perfect_matching(adjacency, size)

    low, high = 0, len(candidates) - 1
    while low < high:
        mid = (low + high) // 2
        if feasible(candidates[mid]):
            high = mid
        else:
            low = mid + 1
    return max(float(candidates[low]), essential_cost)


def _hole_count(image: GrayImage, min_persistence: float) -> int:
    diagram = image_diagram(image)
    return sum(1 for p in diagram.d1 if p.persistence > min_persistence)


def hole_census(image_set: LabeledImageSet, min_persistence: Optional[float] = None,
                workers: Optional[int] = None) -> pd.DataFrame:
    """Distribuzione per classe del numero di buchi persistenti (punti D1).

    Restituisce una tabella classe x numero di buchi con le frazioni di
    immagini, più la colonna `count`.
    """
    if min_persistence is None:
        min_persistence = CENSUS_MIN_PERSISTENCE
    holes = parallel_map(partial(_hole_count, min_persistence=min_persistence),
                         image_set.images, workers, description="immagini (census)")
    frame = pd.DataFrame({"label": image_set.labels, "holes": holes})
    table = pd.crosstab(frame["label"], frame["holes"], normalize="index")
    table.columns = [f"holes_{c}" for c in table.columns]
    table["count"] = frame.groupby("label").size()
    return table
