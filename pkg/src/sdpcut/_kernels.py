"""Hot numeric kernels, compiled with numba by default.

Setting the environment variable ``SDPCUT_PURE_NUMPY=1`` (read once at
import) selects pure numpy/Python implementations instead; the same happens
automatically when numba is not importable.  Both paths are kept importable
(``*_loop`` / ``*_numpy``) so tests and ``benchmarks/bench_kernels.py`` can
compare them.  The two paths are written to produce bit-identical results:
accumulation order, tie-breaking and random-number consumption match.
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("SDPCUT_PURE_NUMPY", "").strip().lower()
PURE_NUMPY = _flag in {"1", "true", "yes", "on"}

if not PURE_NUMPY:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        PURE_NUMPY = True

if PURE_NUMPY:
    def _jit(fn):
        return fn
else:
    def _jit(fn):
        return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# Cut-operator kernels.  A cut pool is flattened into parallel pair arrays:
# pair r couples matrix entry (pp[r], qq[r]) (pp < qq) to constraint rows[r]
# with coefficient coef[r].  rows is non-decreasing (pairs grouped per cut),
# which fixes the float accumulation order in both implementations.
# ---------------------------------------------------------------------------

def _apply_pairs_loop(rows, pp, qq, coef, m, x):
    out = np.zeros(m)
    for r in range(rows.shape[0]):
        out[rows[r]] += coef[r] * x[pp[r], qq[r]]
    return out


def _apply_pairs_numpy(rows, pp, qq, coef, m, x):
    if m == 0:
        return np.zeros(0)
    return np.bincount(rows, weights=coef * x[pp, qq], minlength=m)


def _adjoint_pairs_loop(rows, pp, qq, coef, t, n):
    out = np.zeros((n, n))
    for r in range(rows.shape[0]):
        h = 0.5 * t[rows[r]] * coef[r]
        out[pp[r], qq[r]] += h
        out[qq[r], pp[r]] += h
    return out


def _adjoint_pairs_numpy(rows, pp, qq, coef, t, n):
    out = np.zeros((n, n))
    if rows.shape[0]:
        h = 0.5 * t[rows] * coef
        np.add.at(out, (pp, qq), h)
        np.add.at(out, (qq, pp), h)
    return out


# ---------------------------------------------------------------------------
# Triangle scan.  For every i < j < k the four sign patterns of a triangle
# inequality are evaluated; entries with violation > tol are returned along
# with the maximum violation over the whole scan.  Pattern codes match
# cuts.TRIANGLE_PATTERNS.
# ---------------------------------------------------------------------------

def _triangle_scan_loop(x, tol):
    n = x.shape[0]
    count = 0
    vmax = -np.inf
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            xij = x[i, j]
            for k in range(j + 1, n):
                xik = x[i, k]
                xjk = x[j, k]
                v0 = -(xij + xik + xjk) - 1.0
                v1 = (xij + xik - xjk) - 1.0
                v2 = (xij - xik + xjk) - 1.0
                v3 = (-xij + xik + xjk) - 1.0
                if v0 > vmax:
                    vmax = v0
                if v1 > vmax:
                    vmax = v1
                if v2 > vmax:
                    vmax = v2
                if v3 > vmax:
                    vmax = v3
                if v0 > tol:
                    count += 1
                if v1 > tol:
                    count += 1
                if v2 > tol:
                    count += 1
                if v3 > tol:
                    count += 1
    ii = np.empty(count, np.int32)
    jj = np.empty(count, np.int32)
    kk = np.empty(count, np.int32)
    pat = np.empty(count, np.int8)
    viol = np.empty(count, np.float64)
    w = 0
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            xij = x[i, j]
            for k in range(j + 1, n):
                xik = x[i, k]
                xjk = x[j, k]
                v0 = -(xij + xik + xjk) - 1.0
                v1 = (xij + xik - xjk) - 1.0
                v2 = (xij - xik + xjk) - 1.0
                v3 = (-xij + xik + xjk) - 1.0
                if v0 > tol:
                    ii[w] = i; jj[w] = j; kk[w] = k; pat[w] = 0; viol[w] = v0
                    w += 1
                if v1 > tol:
                    ii[w] = i; jj[w] = j; kk[w] = k; pat[w] = 1; viol[w] = v1
                    w += 1
                if v2 > tol:
                    ii[w] = i; jj[w] = j; kk[w] = k; pat[w] = 2; viol[w] = v2
                    w += 1
                if v3 > tol:
                    ii[w] = i; jj[w] = j; kk[w] = k; pat[w] = 3; viol[w] = v3
                    w += 1
    return ii, jj, kk, pat, viol, vmax


def _triangle_scan_numpy(x, tol):
    n = x.shape[0]
    acc_i, acc_j, acc_k, acc_p, acc_v = [], [], [], [], []
    vmax = -np.inf
    for i in range(n - 2):
        rj, rk = np.triu_indices(n - i - 1, k=1)
        jj = (rj + i + 1).astype(np.int32)
        kk = (rk + i + 1).astype(np.int32)
        xij = x[i, jj]
        xik = x[i, kk]
        xjk = x[jj, kk]
        v = (
            -(xij + xik + xjk) - 1.0,
            (xij + xik - xjk) - 1.0,
            (xij - xik + xjk) - 1.0,
            (-xij + xik + xjk) - 1.0,
        )
        for p in range(4):
            if v[p].size:
                vmax = max(vmax, v[p].max())
            mask = v[p] > tol
            if mask.any():
                acc_i.append(np.full(int(mask.sum()), i, np.int32))
                acc_j.append(jj[mask])
                acc_k.append(kk[mask])
                acc_p.append(np.full(int(mask.sum()), p, np.int8))
                acc_v.append(v[p][mask])
    if not acc_i:
        empty = np.empty(0, np.int32)
        return empty, empty.copy(), empty.copy(), np.empty(0, np.int8), np.empty(0), vmax
    return (
        np.concatenate(acc_i),
        np.concatenate(acc_j),
        np.concatenate(acc_k),
        np.concatenate(acc_p),
        np.concatenate(acc_v),
        vmax,
    )


# ---------------------------------------------------------------------------
# Simulated-annealing search for one violated hypermetric inequality of
# order k.  All randomness is consumed from pre-drawn arrays so the compiled
# and interpreted paths follow identical trajectories.  A relocation move
# that lands on an existing support index is a no-op (its randoms are still
# consumed).
# ---------------------------------------------------------------------------

def _sa_violation(x, sup, sgn, scale, k):
    acc = 0.0
    for a in range(k - 1):
        for b in range(a + 1, k):
            acc += sgn[a] * sgn[b] * x[sup[a], sup[b]]
    return -scale * acc - 1.0


def _sa_run(x, sup, sgn, scale, temps, steps_per_temp,
            r_kind, r_pos, r_vert, r_acc):
    k = sup.shape[0]
    cur = _sa_violation(x, sup, sgn, scale, k)
    best = cur
    best_sup = sup.copy()
    best_sgn = sgn.copy()
    step = 0
    for ti in range(temps.shape[0]):
        temp = temps[ti]
        for _ in range(steps_per_temp):
            pos = r_pos[step]
            if r_kind[step] < 0.5:
                sgn[pos] = -sgn[pos]
                new = _sa_violation(x, sup, sgn, scale, k)
                delta = new - cur
                if delta >= 0.0 or r_acc[step] < math.exp(delta / temp):
                    cur = new
                else:
                    sgn[pos] = -sgn[pos]
            else:
                vert = r_vert[step]
                taken = False
                for a in range(k):
                    if sup[a] == vert:
                        taken = True
                if not taken:
                    old = sup[pos]
                    sup[pos] = vert
                    new = _sa_violation(x, sup, sgn, scale, k)
                    delta = new - cur
                    if delta >= 0.0 or r_acc[step] < math.exp(delta / temp):
                        cur = new
                    else:
                        sup[pos] = old
            if cur > best:
                best = cur
                best_sup[:] = sup
                best_sgn[:] = sgn
            step += 1
    return best_sup, best_sgn, best


# ---------------------------------------------------------------------------
# Best-improvement single-vertex flips on a +/-1 assignment until no flip
# strictly increases the cut.  w is the dense adjacency matrix.  Mutates and
# returns x.
# ---------------------------------------------------------------------------

def _one_flip_loop(w, x):
    n = x.shape[0]
    g = np.dot(w, x)
    while True:
        bestd = 0.0
        best = -1
        for i in range(n):
            d = x[i] * g[i]
            if d > bestd:
                bestd = d
                best = i
        if best < 0:
            break
        x[best] = -x[best]
        for i in range(n):
            g[i] += 2.0 * x[best] * w[i, best]
    return x


def _one_flip_numpy(w, x):
    g = np.dot(w, x)
    while True:
        d = x * g
        b = int(np.argmax(d))
        if d[b] <= 0.0:
            break
        x[b] = -x[b]
        g += 2.0 * x[b] * w[:, b]
    return x


apply_pairs_loop = _jit(_apply_pairs_loop)
apply_pairs_numpy = _apply_pairs_numpy
adjoint_pairs_loop = _jit(_adjoint_pairs_loop)
adjoint_pairs_numpy = _adjoint_pairs_numpy
triangle_scan_loop = _jit(_triangle_scan_loop)
triangle_scan_numpy = _triangle_scan_numpy
_sa_violation = _jit(_sa_violation)
sa_run_loop = _jit(_sa_run)
one_flip_loop = _jit(_one_flip_loop)
one_flip_numpy = _one_flip_numpy

if PURE_NUMPY:
    apply_pairs = apply_pairs_numpy
    adjoint_pairs = adjoint_pairs_numpy
    triangle_scan = triangle_scan_numpy
    sa_run = sa_run_loop
    one_flip = one_flip_numpy
else:
    apply_pairs = apply_pairs_loop
    adjoint_pairs = adjoint_pairs_loop
    triangle_scan = triangle_scan_loop
    sa_run = sa_run_loop
    one_flip = one_flip_loop
