"""Serial branch-and-bound driver with best-bound node selection.

Each node gets a cheap empty-pool bound first; the full cutting-plane
routine runs only when the gate (root-calibrated gap between the basic and
strengthened bounds) says pruning is plausible.  Only certified bounds ever
enter pruning decisions, so the returned optimum is exact whenever the
queue empties within the configured budgets.
"""

from __future__ import annotations

import heapq
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .admm import admm_solve
from .bounding import BoundReport, bound_node
from .cuts import EMPTY_POOL
from .heuristic import CutSolution, generate_cuts, trivial_cut
from .instance import Graph, Subproblem, lift_assignment, objective_matrix, reduce_subproblem, root_subproblem

BRANCH_MOST_FRACTIONAL = "most_fractional"
BRANCH_LEAST_FRACTIONAL = "least_fractional"


@dataclass
class SolverConfig:
    rho0: float = 1.6
    eps: float = 1e-5
    branching: str = BRANCH_MOST_FRACTIONAL
    max_rounds: int = 25
    root_max_rounds: int = 50
    hyp_initial: int = 200
    min_progress: float = 1e-2
    seed: int = 0
    gap_tol: float = 1e-4
    workers: int = 1
    admm_max_iter: int = 20000
    node_limit: int | None = None
    time_limit: float | None = None

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.branching not in (BRANCH_MOST_FRACTIONAL, BRANCH_LEAST_FRACTIONAL):
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class BBNode:
    sub: Subproblem
    upper_bound: float
    depth: int
    id: int


@dataclass
class Solution:
    best_cut: CutSolution
    optimum: float
    nodes_evaluated: int
    wall_time: float
    proof: bool
    best_bound: float
    stats: dict = field(default_factory=dict)


def branch_variable(x_last_column: np.ndarray, rule: str = BRANCH_MOST_FRACTIONAL) -> int:
    """Pick the branching position from the last column of the node's X.

    Entries map to z = (x+1)/2 in [0, 1]; most-fractional takes the entry
    closest to 0.5, least-fractional the farthest.  Ties go to the smallest
    index.  The returned index is 0-based over the non-representative
    vertices.
    """
    x = np.asarray(x_last_column, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot branch on an empty vector")
    score = np.abs((x + 1.0) / 2.0 - 0.5)
    if rule == BRANCH_MOST_FRACTIONAL:
        return int(np.argmin(score))
    if rule == BRANCH_LEAST_FRACTIONAL:
        return int(np.argmax(score))
    raise ValueError(f"unknown branching rule {rule!r}")


def should_prune(ub: float, lb: float, integer_weights: bool, gap_tol: float) -> bool:
    """Integer weights allow pruning at ub < lb + 1; otherwise use gap_tol."""
    slack = 1.0 if integer_weights else gap_tol
    return ub < lb + slack


def diff_gate(basic_bound: float, lb: float, diff: float) -> bool:
    """True when the strengthened bound plausibly prunes, i.e. is worth paying for."""
    return basic_bound <= lb + diff + 1.0


def _node_seed(cfg_seed: int, sub: Subproblem, depth: int) -> int:
    """Stable per-node seed derived from the fixed-variable content."""
    blob = repr(sorted(sub.fixed.items())).encode()
    return int(
        np.random.SeedSequence([cfg_seed, depth, zlib.crc32(blob)]).generate_state(1)[0]
    )


@dataclass
class NodeOutcome:
    ub: float
    cut: CutSolution | None
    children: list[tuple[Subproblem, float]]
    kind: str  # "leaf" | "pruned" | "branched"
    admm_iterations: int = 0
    cuts_added: dict = field(default_factory=lambda: {3: 0, 5: 0, 7: 0})
    basic_bound: float = np.nan


def evaluate_node(
    sub: Subproblem,
    inherited_ub: float,
    depth: int,
    lb: float,
    cfg: SolverConfig,
    diff: float | None,
    root: bool = False,
) -> NodeOutcome:
    """One node step: basic bound, gate, optional full bounding, heuristic, branch.

    Returns the node's certified bound, the best cut the heuristic found,
    and the two children when the node could not be pruned.
    """
    g = sub.parent
    nr = sub.reduced.n
    if nr == 1:
        sides = lift_assignment(sub, np.zeros(1, dtype=np.int8))
        cut = CutSolution.from_assignment(g, sides)
        return NodeOutcome(ub=cut.value, cut=cut, children=[], kind="leaf")

    seed = _node_seed(cfg.seed, sub, depth)
    slack = 1.0 if g.integer_weights else cfg.gap_tol
    L = objective_matrix(sub.reduced)
    basic = admm_solve(L, EMPTY_POOL, rho0=cfg.rho0, eps=cfg.eps, max_iter=cfg.admm_max_iter)
    basic_full = sub.offset + basic.safe_bound
    iters = basic.iterations
    cuts_added = {3: 0, 5: 0, 7: 0}

    # Rounding the basic solution first gives the cutting-plane loop a live
    # pruning target, so it stops as soon as the gap is provably closed.
    cut = generate_cuts(basic, sub, g, seed)
    new_lb = max(lb, cut.value)
    ub = min(inherited_ub, basic_full)
    x_mat = basic.state.X

    prunable = should_prune(ub, new_lb, g.integer_weights, cfg.gap_tol)
    run_full = not prunable and (root or diff is None or diff_gate(basic_full, new_lb, diff))
    if run_full:
        report = bound_node(
            sub,
            new_lb,
            cfg,
            basic=basic,
            stop_target=new_lb + slack,
            root=root,
            seed=seed,
        )
        ub = min(inherited_ub, report.upper_bound)
        iters = report.admm_iterations
        cuts_added = report.cuts_added
        x_mat = report.X
        better = generate_cuts(report, sub, g, seed)
        if better.value > cut.value:
            cut = better
            new_lb = max(new_lb, cut.value)

    outcome = NodeOutcome(
        ub=ub, cut=cut, children=[], kind="pruned",
        admm_iterations=iters, cuts_added=cuts_added,
        basic_bound=basic_full,
    )
    if should_prune(ub, new_lb, g.integer_weights, cfg.gap_tol):
        return outcome

    branch_pos = branch_variable(x_mat[:-1, -1], cfg.branching)
    vertex = sub.vertex_map[branch_pos]
    outcome.children = [
        (reduce_subproblem(sub, vertex, 0), ub),
        (reduce_subproblem(sub, vertex, 1), ub),
    ]
    outcome.kind = "branched"
    return outcome


def solve_serial(g: Graph, cfg: SolverConfig | None = None) -> Solution:
    """Exact Max-Cut by best-bound branch and bound; proof=True means optimal."""
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    incumbent = trivial_cut(g)
    stats = {
        "nodes_created": 1,
        "nodes_pruned": 0,
        "nodes_branched": 0,
        "nodes_leaf": 0,
        "admm_iterations": 0,
        "cuts_separated": {3: 0, 5: 0, 7: 0},
    }

    heap: list[tuple[float, int, BBNode]] = []
    next_id = 0

    def push(sub: Subproblem, ub: float, depth: int):
        nonlocal next_id
        node = BBNode(sub=sub, upper_bound=ub, depth=depth, id=next_id)
        heapq.heappush(heap, (-ub, node.id, node))
        next_id += 1
        stats["nodes_created"] += 1

    def absorb(outcome: NodeOutcome, depth: int):
        nonlocal incumbent
        stats["admm_iterations"] += outcome.admm_iterations
        for k in (3, 5, 7):
            stats["cuts_separated"][k] += outcome.cuts_added.get(k, 0)
        if outcome.cut is not None and outcome.cut.value > incumbent.value:
            incumbent = outcome.cut
        stats[f"nodes_{outcome.kind}"] += 1
        for child_sub, child_ub in outcome.children:
            push(child_sub, child_ub, depth + 1)

    root = root_subproblem(g)
    root_outcome = evaluate_node(root, np.inf, 0, incumbent.value, cfg, None, root=True)
    nodes_evaluated = 1
    diff = 0.0
    if root_outcome.kind != "leaf":
        diff = max(0.0, root_outcome.basic_bound - root_outcome.ub)
    absorb(root_outcome, 0)
    root_ub = root_outcome.ub

    budget_hit = False
    while heap:
        if cfg.node_limit is not None and nodes_evaluated >= cfg.node_limit:
            budget_hit = True
            break
        if cfg.time_limit is not None and time.perf_counter() - start > cfg.time_limit:
            budget_hit = True
            break
        _, _, node = heapq.heappop(heap)
        nodes_evaluated += 1
        if should_prune(node.upper_bound, incumbent.value, g.integer_weights, cfg.gap_tol):
            stats["nodes_pruned"] += 1
            continue
        outcome = evaluate_node(
            node.sub, node.upper_bound, node.depth, incumbent.value, cfg, diff
        )
        absorb(outcome, node.depth)

    proof = not heap and not budget_hit
    if proof:
        best_bound = incumbent.value
    else:
        remaining = max((-entry[0] for entry in heap), default=root_ub)
        best_bound = max(incumbent.value, remaining)
    stats["diff"] = diff
    return Solution(
        best_cut=incumbent,
        optimum=incumbent.value,
        nodes_evaluated=nodes_evaluated,
        wall_time=time.perf_counter() - start,
        proof=proof,
        best_bound=float(best_bound),
        stats=stats,
    )
