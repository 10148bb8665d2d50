"""
Union-find (disjoint-set forest) su indici interi densi.

Union by rank e path compression. Usato dal percorso veloce di D0 e D1 e
dall'oracolo dei numeri di Betti.
"""
from typing import List


class UnionFind:
    def __init__(self, size: int):
        self._parents: List[int] = list(range(size))
        self._ranks: List[int] = [0] * size
        self.components = size

    def find(self, a: int) -> int:
        parents = self._parents
        root = a
        while parents[root] != root:
            root = parents[root]
        # Compressione del cammino
        while parents[a] != root:
            parents[a], a = root, parents[a]
        return root

    def union(self, a: int, b: int) -> bool:
        """Unisce gli insiemi di `a` e `b`; False se erano già uniti."""
        root_a = self.find(a)
        root_b = self.find(b)
        if root_a == root_b:
            return False

        rank_a = self._ranks[root_a]
        rank_b = self._ranks[root_b]
        if rank_a < rank_b:
            self._parents[root_a] = root_b
        elif rank_a > rank_b:
            self._parents[root_b] = root_a
        else:
            self._parents[root_b] = root_a
            self._ranks[root_a] += 1
        self.components -= 1
        return True

    def link(self, child_root: int, parent_root: int) -> None:
        """Appende la radice `child_root` sotto `parent_root` (entrambe radici).

        Serve alla regola dell'anziano, dove la radice sopravvissuta è
        decisa dal chiamante e non dal rank.
        """
        self._parents[child_root] = parent_root
        self.components -= 1
