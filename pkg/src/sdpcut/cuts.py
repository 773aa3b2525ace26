"""Hypermetric cutting planes: the cut operator, its adjoint, and separation.

A cut is given by a +/-1 vector b supported on k in {3, 5, 7} vertices.  Row
normalization 2/(k-1) puts every inequality in the form value <= 1, where
value = -scale * sum_{p<q in support} b_p b_q X_pq, so slack and purge
tolerances are scale-free across cut orders.  The operator touches only
off-diagonal entries, which makes apply(Diag(y)) == 0 and the zero diagonal
of the adjoint exact, not approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels

VIOLATION_TOL = 1e-4
ACTIVE_SLACK_TOL = 1e-5
ACTIVE_DUAL_TOL = 1e-5

# Canonical sign patterns of the four triangle inequalities, keyed by the
# scan's pattern code.  (1,1,1) is the all-minus inequality
# -Xij-Xik-Xjk <= 1; code 1 is the global flip of (-1,1,1), which has the
# same pairwise products and hence the same inequality.
TRIANGLE_PATTERNS = ((1, 1, 1), (1, -1, -1), (1, -1, 1), (1, 1, -1))

SA_T_START = 1.0
SA_T_END = 1e-3
SA_COOLING = 0.95


@dataclass(frozen=True)
class HypermetricCut:
    """One inequality: sorted 0-indexed support, aligned +/-1 signs, scale 2/(k-1)."""

    support: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        k = len(self.support)
        if k not in (3, 5, 7):
            raise ValueError(f"cut order must be 3, 5 or 7, got {k}")
        if len(self.signs) != k:
            raise ValueError("signs length does not match support")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be sorted and duplicate-free")
        if any(v < 0 for v in self.support):
            raise ValueError("support indices must be non-negative")
        if self.signs[0] != 1:
            raise ValueError("canonical cuts have signs[0] == +1")

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def scale(self) -> float:
        return 2.0 / (self.k - 1)


def make_cut(support, signs) -> HypermetricCut:
    """Canonicalize (sort support, align signs, force signs[0] = +1) and build."""
    order = np.argsort(np.asarray(support, dtype=np.int64), kind="stable")
    sup = tuple(int(np.asarray(support)[o]) for o in order)
    sgn = [int(np.asarray(signs)[o]) for o in order]
    if sgn[0] == -1:  # b and -b define the same inequality
        sgn = [-s for s in sgn]
    return HypermetricCut(support=sup, signs=tuple(sgn))


class CutPool:
    """Immutable ordered collection of distinct canonical cuts."""

    def __init__(self, cuts=()):
        cuts = tuple(cuts)
        keys = set()
        for c in cuts:
            key = (c.support, c.signs)
            if key in keys:
                raise ValueError(f"duplicate cut {key}")
            keys.add(key)
        self.cuts = cuts
        self.m = len(cuts)
        self._keys = keys
        self._pairs = None

    def __len__(self) -> int:
        return self.m

    def __contains__(self, cut: HypermetricCut) -> bool:
        return (cut.support, cut.signs) in self._keys

    def extended(self, new_cuts) -> "CutPool":
        """Pool with ``new_cuts`` appended, silently skipping duplicates."""
        out = list(self.cuts)
        keys = set(self._keys)
        for c in new_cuts:
            key = (c.support, c.signs)
            if key not in keys:
                keys.add(key)
                out.append(c)
        return CutPool(out)

    def max_index(self) -> int:
        return max((c.support[-1] for c in self.cuts), default=-1)

    def pair_arrays(self):
        """Flattened (rows, p, q, coef) arrays; coef = -scale * b_p * b_q."""
        if self._pairs is None:
            rows, pp, qq, coef = [], [], [], []
            for idx, c in enumerate(self.cuts):
                for a in range(c.k - 1):
                    for b in range(a + 1, c.k):
                        rows.append(idx)
                        pp.append(c.support[a])
                        qq.append(c.support[b])
                        coef.append(-c.scale * c.signs[a] * c.signs[b])
            self._pairs = (
                np.asarray(rows, dtype=np.int64),
                np.asarray(pp, dtype=np.int64),
                np.asarray(qq, dtype=np.int64),
                np.asarray(coef, dtype=np.float64),
            )
        return self._pairs


EMPTY_POOL = CutPool()


def apply_B(pool: CutPool, x: np.ndarray) -> np.ndarray:
    """Evaluate every cut on x; feasible points satisfy apply_B(x) <= 1."""
    if pool.m and pool.max_index() >= x.shape[0]:
        raise ValueError("cut support exceeds matrix dimension")
    rows, pp, qq, coef = pool.pair_arrays()
    xc = np.ascontiguousarray(x, dtype=np.float64)
    return _kernels.apply_pairs(rows, pp, qq, coef, pool.m, xc)


def adjoint_B(pool: CutPool, t: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of apply_B: symmetric n x n matrix with exactly zero diagonal."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (pool.m,):
        raise ValueError(f"vector has length {t.shape}, pool has m={pool.m}")
    rows, pp, qq, coef = pool.pair_arrays()
    return _kernels.adjoint_pairs(rows, pp, qq, coef, t, n)


def assemble_gram(pool: CutPool) -> sp.csc_matrix:
    """Sparse SPD Gram matrix of the cut operator plus identity."""
    if pool.m == 0:
        return sp.csc_matrix((0, 0))
    rows, pp, qq, coef = pool.pair_arrays()
    # Each cut is a sparse vector over upper-triangle positions; the Gram of
    # the symmetric coefficient matrices is half the Gram of these vectors.
    n_hint = int(qq.max()) + 1
    pos = pp * n_hint + qq
    mat = sp.csr_matrix(
        (coef, (rows, pos)), shape=(pool.m, int(pos.max()) + 1)
    )
    gram = (mat @ mat.T) * 0.5
    gram = gram + sp.identity(pool.m, format="csr")
    return gram.tocsc()


def separate_triangles(
    x: np.ndarray, limit: int, tol: float = VIOLATION_TOL
) -> tuple[list[HypermetricCut], float]:
    """Enumerate all 4 C(n,3) triangle inequalities on x.

    Returns up to ``limit`` violated cuts ordered by decreasing violation
    (ties by support then signs), and the maximum violation seen over the
    whole scan (which may be <= tol when nothing is returned).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        return [], -np.inf
    ii, jj, kk, pat, viol, vmax = _kernels.triangle_scan(x, tol)
    if not len(viol):
        return [], float(vmax)
    # lexicographic rank of the sign tuples, so ties resolve on (support, signs)
    sign_rank = np.array([3, 0, 1, 2], dtype=np.int8)[pat]
    order = np.lexsort((sign_rank, kk, jj, ii, -viol))[:limit]
    cuts = [
        HypermetricCut(
            support=(int(ii[o]), int(jj[o]), int(kk[o])),
            signs=TRIANGLE_PATTERNS[pat[o]],
        )
        for o in order
    ]
    return cuts, float(vmax)


def _annealing_temps() -> np.ndarray:
    temps = []
    t = SA_T_START
    while t > SA_T_END:
        temps.append(t)
        t *= SA_COOLING
    return np.asarray(temps)


def separate_hypermetric(
    x: np.ndarray, k: int, count: int, seed: int, tol: float = VIOLATION_TOL
) -> tuple[list[HypermetricCut], float]:
    """Search for violated order-k cuts by simulated annealing.

    Runs ``count`` independently seeded restarts (geometric cooling, n*k
    moves per temperature, moves relocate one support vertex or flip one
    sign) and returns the distinct violated cuts found, best first, plus the
    largest violation seen.  Deterministic for a fixed seed.
    """
    if k not in (5, 7):
        raise ValueError(f"separation order must be 5 or 7, got {k}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < k or count <= 0:
        return [], -np.inf
    temps = _annealing_temps()
    steps_per_temp = n * k
    total = temps.shape[0] * steps_per_temp
    scale = 2.0 / (k - 1)
    vmax = -np.inf
    found: dict[tuple, float] = {}
    for child in np.random.SeedSequence(seed).spawn(count):
        rng = np.random.default_rng(child)
        sup = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
        sgn = (rng.integers(0, 2, size=k) * 2 - 1).astype(np.int64)
        r_kind = rng.random(total)
        r_pos = rng.integers(0, k, size=total)
        r_vert = rng.integers(0, n, size=total)
        r_acc = rng.random(total)
        bsup, bsgn, bviol = _kernels.sa_run(
            x, sup, sgn, scale, temps, steps_per_temp, r_kind, r_pos, r_vert, r_acc
        )
        vmax = max(vmax, bviol)
        if bviol > tol:
            cut = make_cut(bsup, bsgn)
            key = (cut.support, cut.signs)
            if key not in found or bviol > found[key]:
                found[key] = bviol
    ordered = sorted(found.items(), key=lambda kv: (-kv[1], kv[0]))[:count]
    return [HypermetricCut(support=s, signs=g) for (s, g), _ in ordered], float(vmax)


def purge_inactive(
    pool: CutPool,
    s: np.ndarray,
    u: np.ndarray,
    slack_tol: float = ACTIVE_SLACK_TOL,
    dual_tol: float = ACTIVE_DUAL_TOL,
) -> CutPool:
    """Keep cuts that are tight (small slack) or carry dual weight."""
    s = np.asarray(s)
    u = np.asarray(u)
    if s.shape != (pool.m,) or u.shape != (pool.m,):
        raise ValueError("slack/dual lengths do not match the pool")
    keep = [c for c, si, ui in zip(pool.cuts, s, u) if si <= slack_tol or ui >= dual_tol]
    return CutPool(keep)
