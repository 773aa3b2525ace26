"""Alternating direction method for the dual of the strengthened relaxation.

Each iteration does closed-form block updates: the diagonal dual y, the
inequality dual t (one cached sparse solve against the cut Gram matrix),
then simultaneous cone projections giving Z, u, X, s.  Cone membership and
complementarity hold by construction every iteration, so a run stopped at
any point still yields a certified upper bound via ``safe_bound``: the dual
slack matrix is shifted by its most negative eigenvalue, which can only
raise the reported value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cuts import CutPool, adjoint_B, apply_B, assemble_gram
from .linalg import SparseFactorization, eig_sym, factorize_spd, split_from_decomp, symmetrize

DEFAULT_RHO = 1.6
DEFAULT_EPS = 1e-5
DEFAULT_MAX_ITER = 20000

RHO_MU = 0.5
RHO_TAU = 1.001
RHO_MIN = 1e-4
RHO_MAX = 1e4
_RESIDUAL_FLOOR = 1e-15


@dataclass
class AdmmState:
    """All six iterates plus the penalty; plain data, safe to hand around."""

    X: np.ndarray
    s: np.ndarray
    y: np.ndarray
    t: np.ndarray
    Z: np.ndarray
    u: np.ndarray
    rho: float


@dataclass
class AdmmResult:
    state: AdmmState
    safe_bound: float
    raw_dual_value: float
    r_P: float
    r_D: float
    iterations: int
    converged: bool
    factor: np.ndarray  # V with X = V^T V; columns align with vertices


def cold_state(n: int, m: int, rho: float) -> AdmmState:
    return AdmmState(
        X=np.zeros((n, n)),
        s=np.zeros(m),
        y=np.zeros(n),
        t=np.zeros(m),
        Z=np.zeros((n, n)),
        u=np.zeros(m),
        rho=float(rho),
    )


def _iterate(
    state: AdmmState,
    L: np.ndarray,
    pool: CutPool,
    gram: SparseFactorization | None,
) -> tuple[AdmmState, np.ndarray, np.ndarray]:
    """One full update sweep; also returns the eigendecomposition of M."""
    rho = state.rho
    n = L.shape[0]
    m = pool.m
    work = L + state.Z + state.X / rho
    # The cut operator ignores diagonals and its adjoint has zero diagonal,
    # so y and t decouple exactly and neither needs the other's fresh value.
    y = -1.0 / rho + np.diagonal(work)
    if m:
        rhs = apply_B(pool, work) + state.u + (state.s - 1.0) / rho
        t = gram.solve(rhs)
        v = t - state.s / rho
        bt = adjoint_B(pool, t, n)
        M = L - np.diag(y) - bt + state.X / rho
    else:
        t = np.empty(0)
        v = np.empty(0)
        M = L - np.diag(y) + state.X / rho
    M = symmetrize(M)
    lam, vecs = eig_sym(M)
    m_plus, m_minus = split_from_decomp(lam, vecs)
    new = AdmmState(
        X=rho * m_plus,
        s=-rho * np.minimum(v, 0.0),
        y=y,
        t=t,
        Z=-m_minus,
        u=np.maximum(v, 0.0),
        rho=rho,
    )
    return new, lam, vecs


def admm_iterate(
    state: AdmmState,
    L: np.ndarray,
    pool: CutPool,
    gram: SparseFactorization | None = None,
) -> AdmmState:
    """Public single-iteration step (factorizes the Gram if not supplied)."""
    if pool.m and gram is None:
        gram = factorize_spd(assemble_gram(pool))
    new, _, _ = _iterate(state, L, pool, gram)
    return new


def residuals(state: AdmmState, L: np.ndarray, pool: CutPool) -> tuple[float, float]:
    """Scaled primal and dual feasibility residuals of the current iterates."""
    n = L.shape[0]
    primal = np.linalg.norm(np.diagonal(state.X) - 1.0)
    if pool.m:
        primal += np.linalg.norm(np.maximum(apply_B(pool, state.X) - 1.0, 0.0))
    r_p = primal / (1.0 + np.sqrt(n))
    dual_mat = L - np.diag(state.y) + state.Z
    if pool.m:
        dual_mat = dual_mat - adjoint_B(pool, state.t, n)
    dual = np.linalg.norm(dual_mat) + np.linalg.norm(state.u - state.t)
    r_d = dual / (1.0 + np.linalg.norm(L))
    return float(r_p), float(r_d)


def update_rho(rho: float, r_p: float, r_d: float) -> float:
    """Nudge the penalty to keep the two residuals within half an order of magnitude."""
    if r_p < _RESIDUAL_FLOOR or r_d < _RESIDUAL_FLOOR:
        return rho
    if np.log10(r_d / r_p) > RHO_MU:
        rho = rho * RHO_TAU
    elif np.log10(r_p / r_d) > RHO_MU:
        rho = rho / RHO_TAU
    return float(min(max(rho, RHO_MIN), RHO_MAX))


def safe_bound(state: AdmmState, L: np.ndarray, pool: CutPool) -> float:
    """Certified upper bound from the current (possibly non-converged) duals.

    Replaces t by u, forms the dual slack matrix, and if it is not PSD
    shifts y by its most negative eigenvalue; the result is always a valid
    bound on the maximum cut and never smaller than e'y + e'u.
    """
    n = L.shape[0]
    zhat = np.diag(state.y) - L
    if pool.m:
        zhat = zhat + adjoint_B(pool, state.u, n)
    lam_min = float(np.linalg.eigvalsh(symmetrize(zhat))[0])
    raw = float(state.y.sum() + state.u.sum())
    if lam_min >= 0.0:
        return raw
    return raw - n * lam_min


def admm_solve(
    L: np.ndarray,
    pool: CutPool,
    warm: AdmmState | None = None,
    rho0: float = DEFAULT_RHO,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> AdmmResult:
    """Run the method until max(r_P, r_D) < eps or the iteration cap.

    A warm state seeds all six variables.  On hitting the cap the result is
    flagged non-converged but its safe_bound is still valid.
    """
    if rho0 <= 0 or eps <= 0:
        raise ValueError("rho0 and eps must be positive")
    n = L.shape[0]
    m = pool.m
    gram = factorize_spd(assemble_gram(pool)) if m else None
    state = warm if warm is not None else cold_state(n, m, rho0)
    lam = np.zeros(n)
    vecs = np.eye(n)
    r_p = r_d = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        state, lam, vecs = _iterate(state, L, pool, gram)
        r_p, r_d = residuals(state, L, pool)
        if max(r_p, r_d) < eps:
            converged = True
            break
        state.rho = update_rho(state.rho, r_p, r_d)
    bound = safe_bound(state, L, pool)
    raw = float(state.y.sum() + state.u.sum())
    # X = rho * M_plus, so scaling the positive eigenpairs of M factors X.
    lam_pos = np.maximum(lam * state.rho, 0.0)
    factor = np.sqrt(lam_pos)[:, None] * vecs.T
    return AdmmResult(
        state=state,
        safe_bound=float(bound),
        raw_dual_value=raw,
        r_P=r_p,
        r_D=r_d,
        iterations=iterations,
        converged=converged,
        factor=factor,
    )
