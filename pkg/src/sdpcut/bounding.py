"""Cutting-plane loop around the ADMM bound for one search node.

Rounds alternate solving the current relaxation (warm-started), purging
inactive cuts, and separating new violated ones.  Triangle separation is
capped at 10n cuts per round; pentagonal separation starts once the largest
triangle violation falls below 0.2 and heptagonal once the largest
pentagonal violation falls below 0.4, with budgets growing by 200 per
round.  The loop stops early when the bound reaches the caller's pruning
target, progress stalls, or a linear forecast says the gap cannot close.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmResult, AdmmState, admm_solve
from .cuts import EMPTY_POOL, CutPool, purge_inactive, separate_hypermetric, separate_triangles
from .instance import Subproblem, objective_matrix

TRIANGLES_PER_VERTEX = 10
TRI_ESCALATE_BELOW = 0.2
PENT_ESCALATE_BELOW = 0.4
HYP_BUDGET_GROWTH = 200

STOP_CONVERGED = "converged"
STOP_FORECAST = "forecast"
STOP_ROUND_LIMIT = "round_limit"


@dataclass
class BoundReport:
    """Outcome of bounding one node; all bound values include the node offset."""

    upper_bound: float
    X: np.ndarray
    factor: np.ndarray
    pool: CutPool
    rounds: int
    stopped_by: str
    basic_bound: float
    bound_history: list[float] = field(default_factory=list)
    admm_iterations: int = 0
    cuts_added: dict[int, int] = field(default_factory=lambda: {3: 0, 5: 0, 7: 0})


def forecast_stop(bound_history: list[float], lb: float, rounds_left: int) -> bool:
    """Linear forecast: stop when the remaining rounds cannot reach lb + 1.

    Averages the decrease over the last min(3, len-1) rounds and projects it
    forward; True means further rounds are provably not worth their cost at
    the current rate.
    """
    if len(bound_history) < 2:
        raise ValueError("need at least two bound values to forecast")
    window = min(3, len(bound_history) - 1)
    recent = bound_history[-(window + 1):]
    avg_decrease = (recent[0] - recent[-1]) / window
    projected = bound_history[-1] - rounds_left * avg_decrease
    return projected > lb + 1.0


def remap_warm_start(old: AdmmState, old_pool: CutPool, new_pool: CutPool) -> AdmmState:
    """Carry X, Z, y, rho to a new pool; keep (s, u) per surviving cut, zero new ones."""
    index = {(c.support, c.signs): i for i, c in enumerate(old_pool.cuts)}
    m = new_pool.m
    s = np.zeros(m)
    u = np.zeros(m)
    for j, c in enumerate(new_pool.cuts):
        i = index.get((c.support, c.signs))
        if i is not None:
            s[j] = old.s[i]
            u[j] = old.u[i]
    return AdmmState(
        X=old.X,
        s=s,
        y=old.y,
        t=u.copy(),
        Z=old.Z,
        u=u,
        rho=old.rho,
    )


def _hyp_seed(seed: int, rnd: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, rnd, k]).generate_state(1)[0])


def bound_node(
    sub: Subproblem,
    lb: float,
    cfg,
    *,
    basic: AdmmResult | None = None,
    stop_target: float | None = None,
    root: bool = False,
    seed: int = 0,
) -> BoundReport:
    """Compute a certified upper bound for one subproblem.

    ``basic`` may carry a precomputed empty-pool solve to avoid repeating it.
    ``stop_target`` is the caller's pruning threshold (bound below it ends
    the loop); the root passes None and also ignores the forecast so the
    strengthened root bound is always fully computed.
    """
    L = objective_matrix(sub.reduced)
    n = sub.reduced.n
    off = sub.offset
    if basic is None:
        basic = admm_solve(
            L, EMPTY_POOL, rho0=cfg.rho0, eps=cfg.eps, max_iter=cfg.admm_max_iter
        )
    report = BoundReport(
        upper_bound=off + basic.safe_bound,
        X=basic.state.X,
        factor=basic.factor,
        pool=EMPTY_POOL,
        rounds=0,
        stopped_by=STOP_CONVERGED,
        basic_bound=off + basic.safe_bound,
        bound_history=[off + basic.safe_bound],
        admm_iterations=basic.iterations,
    )
    prunable = stop_target is not None and report.upper_bound < stop_target
    if prunable:
        return report

    tri, r_tri = separate_triangles(basic.state.X, TRIANGLES_PER_VERTEX * n)
    if not tri:
        return report
    pool = EMPTY_POOL.extended(tri)
    report.cuts_added[3] += len(tri)
    state = remap_warm_start(basic.state, EMPTY_POOL, pool)
    pent_on = r_tri < TRI_ESCALATE_BELOW
    hept_on = False
    pent_budget = cfg.hyp_initial
    hept_budget = cfg.hyp_initial // 2
    max_rounds = cfg.root_max_rounds if root else cfg.max_rounds
    report.stopped_by = STOP_ROUND_LIMIT

    for rnd in range(1, max_rounds + 1):
        res = admm_solve(
            L, pool, warm=state, rho0=state.rho, eps=cfg.eps, max_iter=cfg.admm_max_iter
        )
        report.rounds = rnd
        report.admm_iterations += res.iterations
        val = off + res.safe_bound
        report.bound_history.append(val)
        report.upper_bound = min(report.upper_bound, val)
        report.X = res.state.X
        report.factor = res.factor
        report.pool = pool
        if stop_target is not None and report.upper_bound < stop_target:
            report.stopped_by = STOP_CONVERGED
            break

        kept = purge_inactive(pool, res.state.s, res.state.u)
        tri, r_tri = separate_triangles(res.state.X, TRIANGLES_PER_VERTEX * n)
        new_cuts = list(tri)
        if r_tri < TRI_ESCALATE_BELOW:
            pent_on = True
        if pent_on and n >= 5:
            pents, r_pent = separate_hypermetric(
                res.state.X, 5, pent_budget, _hyp_seed(seed, rnd, 5)
            )
            new_cuts.extend(pents)
            if r_pent < PENT_ESCALATE_BELOW:
                hept_on = True
            if hept_on and n >= 7:
                hepts, _ = separate_hypermetric(
                    res.state.X, 7, hept_budget, _hyp_seed(seed, rnd, 7)
                )
                new_cuts.extend(hepts)
                hept_budget += HYP_BUDGET_GROWTH
            pent_budget += HYP_BUDGET_GROWTH
        next_pool = kept.extended(new_cuts)
        added = next_pool.m - kept.m
        report.cuts_added[3] += sum(1 for c in next_pool.cuts[kept.m:] if c.k == 3)
        report.cuts_added[5] += sum(1 for c in next_pool.cuts[kept.m:] if c.k == 5)
        report.cuts_added[7] += sum(1 for c in next_pool.cuts[kept.m:] if c.k == 7)

        decrease = report.bound_history[-2] - report.bound_history[-1]
        if added == 0 or decrease < cfg.min_progress:
            report.stopped_by = STOP_CONVERGED
            break
        if not root and forecast_stop(report.bound_history, lb, max_rounds - rnd):
            report.stopped_by = STOP_FORECAST
            break
        state = remap_warm_start(res.state, pool, next_pool)
        pool = next_pool
    return report
