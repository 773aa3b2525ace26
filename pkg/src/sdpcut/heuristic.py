"""Feasible cuts: hyperplane rounding of the relaxation plus 1-flip search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .instance import Graph, Subproblem, cut_value, lift_assignment


@dataclass(frozen=True)
class CutSolution:
    """A 0/1 assignment over the original vertices and its exact cut weight."""

    assignment: tuple[int, ...]
    value: float

    @staticmethod
    def from_assignment(g: Graph, sides: np.ndarray) -> "CutSolution":
        sides = np.asarray(sides, dtype=np.int8)
        return CutSolution(
            assignment=tuple(int(v) for v in sides),
            value=cut_value(g, sides),
        )


def trivial_cut(g: Graph) -> CutSolution:
    """All vertices on one side: weight 0, always feasible."""
    return CutSolution.from_assignment(g, np.zeros(g.n, dtype=np.int8))


def gw_round(factor: np.ndarray, r: np.ndarray, sub: Subproblem) -> CutSolution:
    """Random-hyperplane rounding of the node relaxation.

    ``factor`` has the node's primal matrix as V^T V with vertex i behind
    column i.  Vertex i joins side 1 when v_i . r >= 0.  The relaxation is
    posed in the homogenized frame, where agreement with the last
    (representative) coordinate is inverted relative to every other pair,
    so the representative's score changes sign before thresholding; the
    reduced assignment is then lifted through the node's fixed variables
    and scored on the original graph.
    """
    scores = factor.T @ np.asarray(r, dtype=np.float64)
    scores[-1] = -scores[-1]
    reduced = (scores >= 0.0).astype(np.int8)
    return CutSolution.from_assignment(sub.parent, lift_assignment(sub, reduced))


def local_search_1flip(cut: CutSolution, g: Graph) -> CutSolution:
    """Apply best single-vertex flips while they strictly improve the cut."""
    x = np.array([2.0 * a - 1.0 for a in cut.assignment])
    if x.shape != (g.n,):
        raise ValueError("assignment does not match the graph")
    w = np.ascontiguousarray(g.adjacency())
    x = _kernels.one_flip(w, x)
    improved = CutSolution.from_assignment(g, (x > 0).astype(np.int8))
    # Guard against float round-off on non-integer weights.
    return improved if improved.value >= cut.value else cut


def generate_cuts(report, sub: Subproblem, g: Graph, seed: int) -> CutSolution:
    """Best of n rounding trials (n = node size), each refined by 1-flip search.

    ``report`` only needs a ``factor`` attribute (a bound report or a raw
    solver result both work).  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    nr = sub.reduced.n
    best: CutSolution | None = None
    for _ in range(nr):
        r = rng.standard_normal(nr)
        norm = np.linalg.norm(r)
        if norm == 0.0:
            continue
        cand = local_search_1flip(gw_round(report.factor, r / norm, sub), g)
        if best is None or cand.value > best.value:
            best = cand
    return best if best is not None else trivial_cut(g)
