"""Graph instances, objective matrices, and branching reductions.

Instances use the plain text format ``n m`` on the first line followed by m
lines ``i j w`` with 1-indexed endpoints.  Internally everything is
0-indexed; the objective matrix carries the homogenization row as its last
row/column, and subproblem reduction merges a fixed vertex into the
representative (last) vertex so every node of the search tree is again a
genuine Max-Cut instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class ParseError(ValueError):
    """Malformed instance text; the message names the offending line."""


@dataclass(frozen=True)
class Graph:
    """Weighted undirected graph with 1-indexed edges (i < j, no duplicates)."""

    n: int
    edges: tuple[tuple[int, int, float], ...]
    integer_weights: bool

    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """0-indexed endpoint arrays and weights, cached per graph."""
        arrs = self._cache.get("arrays")
        if arrs is None:
            if self.edges:
                ei = np.fromiter((e[0] - 1 for e in self.edges), np.int64, len(self.edges))
                ej = np.fromiter((e[1] - 1 for e in self.edges), np.int64, len(self.edges))
                w = np.fromiter((e[2] for e in self.edges), np.float64, len(self.edges))
            else:
                ei = np.empty(0, np.int64)
                ej = np.empty(0, np.int64)
                w = np.empty(0, np.float64)
            arrs = (ei, ej, w)
            self._cache["arrays"] = arrs
        return arrs

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weighted adjacency matrix."""
        adj = self._cache.get("adjacency")
        if adj is None:
            adj = np.zeros((self.n, self.n))
            ei, ej, w = self.edge_arrays()
            adj[ei, ej] = w
            adj[ej, ei] = w
            self._cache["adjacency"] = adj
        return adj


def make_graph(n: int, edges: Iterable[tuple[int, int, float]]) -> Graph:
    """Build a Graph, validating endpoints and detecting integer weights."""
    cleaned = []
    seen = set()
    for i, j, w in edges:
        if not (1 <= i < j <= n):
            raise ValueError(f"invalid edge ({i},{j}) for n={n}")
        if (i, j) in seen:
            raise ValueError(f"duplicate edge ({i},{j})")
        seen.add((i, j))
        cleaned.append((int(i), int(j), float(w)))
    integer = all(float(w).is_integer() for _, _, w in cleaned)
    return Graph(n=int(n), edges=tuple(cleaned), integer_weights=integer)


def parse_instance(text: str) -> Graph:
    """Parse ``n m`` / ``i j w`` instance text.

    Lines starting with '#' and blank lines are skipped.  Raises ParseError
    naming the line number on any malformed content, out-of-range endpoint,
    duplicate edge, or edge-count mismatch.  Zero-weight edges are kept.
    """
    header = None
    edges = []
    seen = {}
    n = m = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise ParseError(f"expected 'n m' header at line {lineno}")
            try:
                n, m = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer header at line {lineno}") from None
            if n < 1 or m < 0:
                raise ParseError(f"invalid header values at line {lineno}")
            header = lineno
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'i j w' at line {lineno}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2])
        except ValueError:
            raise ParseError(f"malformed edge at line {lineno}") from None
        if not np.isfinite(w):
            raise ParseError(f"non-finite weight at line {lineno}")
        if i == j:
            raise ParseError(f"self-loop ({i},{i}) at line {lineno}")
        if i > j:
            i, j = j, i
        for v in (i, j):
            if v > n:
                raise ParseError(f"vertex index {v} exceeds n={n} at line {lineno}")
            if v < 1:
                raise ParseError(f"vertex index {v} below 1 at line {lineno}")
        if (i, j) in seen:
            raise ParseError(
                f"duplicate edge ({i},{j}) at line {lineno} (first at line {seen[(i, j)]})"
            )
        seen[(i, j)] = lineno
        edges.append((i, j, w))
        if len(edges) > m:
            raise ParseError(f"more than {m} edges; extra edge at line {lineno}")
    if header is None:
        raise ParseError("empty instance: no 'n m' header found")
    if len(edges) != m:
        raise ParseError(f"header promised {m} edges but {len(edges)} were given")
    return make_graph(n, edges)


def load_instance(path: str) -> Graph:
    with open(path, "r", encoding="ascii") as fh:
        return parse_instance(fh.read())


def laplacian(g: Graph) -> np.ndarray:
    """Weighted graph Laplacian diag(Ae) - A; symmetric with zero row sums."""
    a = g.adjacency()
    return np.diag(a.sum(axis=1)) - a


def objective_matrix(g: Graph) -> np.ndarray:
    """The n x n cut objective for the +/-1 model with homogenization row last.

    With lc the Laplacian of g minus its last row/column, the result is
    (1/4) [[lc, lc e], [e^T lc, e^T lc e]]; <result, vv^T> with v = [x; 1]
    equals the weight of the cut encoded by x in {-1,1}^(n-1).
    """
    n = g.n
    if n < 2:
        raise ValueError("objective matrix needs n >= 2 (single vertex has cut 0)")
    lc = laplacian(g)[: n - 1, : n - 1]
    row = lc @ np.ones(n - 1)
    out = np.empty((n, n))
    out[: n - 1, : n - 1] = lc
    out[: n - 1, n - 1] = row
    out[n - 1, : n - 1] = row
    out[n - 1, n - 1] = row.sum()
    out *= 0.25
    return out


@dataclass(frozen=True)
class Subproblem:
    """A Max-Cut instance with some vertices fixed relative to the reference.

    ``fixed`` maps original 1-indexed vertices to 0 (same side as the
    reference vertex n) or 1 (opposite side).  ``reduced`` is the instance on
    the unfixed vertices plus one representative vertex, placed last;
    ``vertex_map[p]`` is the original vertex behind reduced position p.  Any
    cut of the reduced instance plus ``offset`` equals the corresponding cut
    of the parent.
    """

    parent: Graph
    fixed: dict[int, int]
    reduced: Graph
    offset: float
    vertex_map: tuple[int, ...]


def root_subproblem(g: Graph) -> Subproblem:
    return Subproblem(
        parent=g,
        fixed={},
        reduced=g,
        offset=0.0,
        vertex_map=tuple(range(1, g.n + 1)),
    )


def reduce_subproblem(parent: Subproblem, vertex: int, value: int) -> Subproblem:
    """Fix ``vertex`` (original id) to ``value`` and contract it away.

    value 0 merges the vertex into the representative; value 1 merges it
    with flipped incident edge signs, accumulating the forced-cut weight in
    the offset.  Weights of merged parallel edges are summed and exact zero
    results are dropped.
    """
    if vertex in parent.fixed:
        raise ValueError(f"vertex {vertex} is already fixed")
    if value not in (0, 1):
        raise ValueError(f"fixed value must be 0 or 1, got {value}")
    try:
        pos = parent.vertex_map.index(vertex)
    except ValueError:
        raise ValueError(f"vertex {vertex} is not present in the subproblem") from None
    nr = parent.reduced.n
    rep = nr - 1
    if pos == rep:
        raise ValueError("the representative vertex cannot be fixed")

    def shift(p: int) -> int:
        return p - 1 if p > pos else p

    new_rep = rep - 1
    weights: dict[tuple[int, int], float] = {}
    offset = parent.offset
    for i, j, w in parent.reduced.edges:
        p, q = i - 1, j - 1
        if p != pos and q != pos:
            key = (shift(p), shift(q))
            weights[key] = weights.get(key, 0.0) + w
            continue
        other = q if p == pos else p
        if value == 1:
            offset += w
        if other == rep:
            continue  # edge into the representative collapses entirely
        key = tuple(sorted((shift(other), new_rep)))
        weights[key] = weights.get(key, 0.0) + (w if value == 0 else -w)
    edges = tuple(
        (p + 1, q + 1, w) for (p, q), w in sorted(weights.items()) if w != 0.0
    )
    reduced = make_graph(nr - 1, edges)
    fixed = dict(parent.fixed)
    fixed[vertex] = value
    vmap = parent.vertex_map[:pos] + parent.vertex_map[pos + 1 :]
    return Subproblem(
        parent=parent.parent,
        fixed=fixed,
        reduced=reduced,
        offset=offset,
        vertex_map=vmap,
    )


def lift_assignment(sub: Subproblem, reduced_sides: np.ndarray) -> np.ndarray:
    """Expand a 0/1 assignment of the reduced instance to the parent graph."""
    sides = np.asarray(reduced_sides, dtype=np.int8)
    if sides.shape != (sub.reduced.n,):
        raise ValueError("assignment length does not match the reduced instance")
    full = np.zeros(sub.parent.n, dtype=np.int8)
    for p, orig in enumerate(sub.vertex_map):
        full[orig - 1] = sides[p]
    rep_side = int(sides[-1])
    for v, val in sub.fixed.items():
        full[v - 1] = rep_side ^ val
    return full


def cut_value(g: Graph, sides: np.ndarray) -> float:
    """Total weight of edges crossing the 0/1 partition ``sides``."""
    ei, ej, w = g.edge_arrays()
    sides = np.asarray(sides)
    if sides.shape != (g.n,):
        raise ValueError(f"assignment length {sides.shape} does not match n={g.n}")
    if not len(w):
        return 0.0
    return float(w @ (sides[ei] != sides[ej]))
