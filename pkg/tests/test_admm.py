import numpy as np
import pytest

from sdpcut.admm import (
    AdmmState,
    admm_iterate,
    admm_solve,
    cold_state,
    residuals,
    safe_bound,
    update_rho,
)
from sdpcut.cuts import EMPTY_POOL, make_cut, separate_triangles
from sdpcut.instance import objective_matrix, parse_instance

from oracles import (
    brute_force_max_cut,
    cycle_graph,
    complete_graph,
    random_graph,
    sdp_relaxation_value,
)

K2 = parse_instance("2 1\n1 2 1")
K3 = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
C5 = cycle_graph(5)

C5_BASIC = 2.5 * (1 + np.cos(np.pi / 5))  # closed form, 4.52254...


def test_first_iteration_from_zero_state():
    # rho=1, L=0: y = -e, M = I, so Z = 0 and X = I
    state = admm_iterate(cold_state(3, 0, 1.0), np.zeros((3, 3)), EMPTY_POOL)
    assert np.allclose(state.y, -1.0)
    assert np.allclose(state.Z, 0.0, atol=1e-12)
    assert np.allclose(state.X, np.eye(3), atol=1e-12)


def test_iteration_keeps_cones_and_complementarity():
    rng = np.random.default_rng(0)
    L = objective_matrix(K3)
    pool = EMPTY_POOL.extended(
        [make_cut((0, 1, 2), s) for s in [(1, 1, 1), (1, -1, -1), (1, 1, -1)]]
    )
    state = cold_state(3, pool.m, 1.6)
    for _ in range(25):
        state = admm_iterate(state, L, pool)
        assert np.linalg.eigvalsh(state.X)[0] >= -1e-9
        assert np.linalg.eigvalsh(state.Z)[0] >= -1e-9
        assert state.s.min() >= 0.0 and state.u.min() >= 0.0
        xz = abs(np.sum(state.X * state.Z))
        assert xz <= 1e-8 * (1 + np.linalg.norm(state.X) * np.linalg.norm(state.Z))
        assert state.u @ state.s == 0.0  # disjoint supports by construction


def test_y_update_ignores_inequality_dual():
    # states differing only in the inequality-side variables produce the
    # same y: the diagonal and cut blocks decouple exactly
    L = objective_matrix(K3)
    pool = EMPTY_POOL.extended([make_cut((0, 1, 2), (1, 1, -1))])
    base = cold_state(3, 1, 1.0)
    base.X = np.diag([1.0, 2.0, 3.0])
    other = AdmmState(
        X=base.X.copy(), s=base.s.copy(), y=base.y.copy(),
        t=np.array([123.0]), Z=base.Z.copy(), u=np.array([5.0]), rho=1.0,
    )
    s1 = admm_iterate(base, L, pool)
    s2 = admm_iterate(other, L, pool)
    assert np.array_equal(s1.y, s2.y)
    assert not np.array_equal(s1.t, s2.t)  # u feeds the t system, y stays put


def test_residuals_at_exact_optimum():
    # hand-built primal-dual optimum of the K2 relaxation
    L = objective_matrix(K2)
    state = AdmmState(
        X=np.ones((2, 2)),
        s=np.empty(0),
        y=np.array([0.5, 0.5]),
        t=np.empty(0),
        Z=np.array([[0.25, -0.25], [-0.25, 0.25]]),
        u=np.empty(0),
        rho=1.0,
    )
    r_p, r_d = residuals(state, L, EMPTY_POOL)
    assert r_p <= 1e-10 and r_d <= 1e-10
    assert safe_bound(state, L, EMPTY_POOL) == pytest.approx(1.0, abs=1e-12)


def test_residual_formula():
    state = cold_state(2, 0, 1.0)
    state.X = 2.0 * np.eye(2)
    r_p, r_d = residuals(state, np.zeros((2, 2)), EMPTY_POOL)
    assert r_p == pytest.approx(np.sqrt(2.0) / (1 + np.sqrt(2.0)))
    # dual residual scales with 1 + ||L||_F through its denominator
    state.y = np.array([1.0, 0.0])
    L = np.eye(2)
    _, r_d = residuals(state, L, EMPTY_POOL)
    expect = np.linalg.norm(L - np.diag(state.y)) / (1 + np.linalg.norm(L))
    assert r_d == pytest.approx(expect)


def test_update_rho_rules():
    assert update_rho(2.0, 1e-3, 1e-3) == 2.0
    assert update_rho(2.0, 1e-4, 1e-3) == pytest.approx(2.0 * 1.001)
    assert update_rho(2.0, 1e-3, 1e-4) == pytest.approx(2.0 / 1.001)
    assert update_rho(2.0, 0.0, 1e-3) == 2.0  # zero-residual guard
    assert update_rho(1e4, 1e-4, 1e-3) == 1e4  # clamped at the ceiling


def test_safe_bound_correction_arithmetic():
    # lambda_min = -0.1 on n=10 must add exactly +1.0 to the raw value
    n = 10
    state = cold_state(n, 0, 1.0)
    state.y = -0.1 * np.ones(n)
    raw = state.y.sum()
    val = safe_bound(state, np.zeros((n, n)), EMPTY_POOL)
    assert val == pytest.approx(raw + 1.0, abs=1e-12)
    # feasible dual is returned unchanged
    state.y = 0.1 * np.ones(n)
    assert safe_bound(state, np.zeros((n, n)), EMPTY_POOL) == pytest.approx(
        state.y.sum(), abs=1e-12
    )


def test_safe_bound_dominates_brute_force():
    rng = np.random.default_rng(11)
    for trial in range(30):
        g = random_graph(rng, int(rng.integers(3, 13)), density=0.7)
        expect, _ = brute_force_max_cut(g)
        res = admm_solve(objective_matrix(g), EMPTY_POOL, max_iter=40)
        assert res.safe_bound >= expect - 1e-12
        assert res.safe_bound >= res.raw_dual_value - 1e-12


def test_basic_bounds_match_oracles():
    assert admm_solve(objective_matrix(K2), EMPTY_POOL).safe_bound == pytest.approx(
        1.0, abs=1e-4
    )
    assert admm_solve(objective_matrix(K3), EMPTY_POOL).safe_bound == pytest.approx(
        2.25, abs=1e-3
    )
    assert admm_solve(objective_matrix(C5), EMPTY_POOL).safe_bound == pytest.approx(
        C5_BASIC, abs=1e-3
    )


def test_k3_triangle_cut_closes_gap():
    L = objective_matrix(K3)
    base = admm_solve(L, EMPTY_POOL)
    cuts, _ = separate_triangles(base.state.X, 10)
    pool = EMPTY_POOL.extended(cuts[:1])
    res = admm_solve(L, pool)
    assert res.safe_bound == pytest.approx(2.0, abs=1e-3)
    oracle = sdp_relaxation_value(K3, [(cuts[0].support, cuts[0].signs)])
    assert res.safe_bound == pytest.approx(oracle, abs=1e-3)


def test_solver_result_fields():
    res = admm_solve(objective_matrix(C5), EMPTY_POOL, eps=1e-6)
    assert res.converged
    assert max(res.r_P, res.r_D) < 1e-6
    assert res.safe_bound >= res.raw_dual_value - 1e-12
    x_back = res.factor.T @ res.factor
    assert np.allclose(x_back, res.state.X, atol=1e-8)


def test_non_converged_run_still_bounds():
    res = admm_solve(objective_matrix(C5), EMPTY_POOL, max_iter=3)
    assert not res.converged
    assert res.iterations == 3
    assert res.safe_bound >= 4.0  # still a valid bound on the max cut


def test_convergence_speed_on_small_instances():
    for g in (K3, C5, complete_graph(4)):
        res = admm_solve(objective_matrix(g), EMPTY_POOL, eps=1e-5, max_iter=2000)
        assert res.converged and res.iterations < 2000


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        admm_solve(objective_matrix(K2), EMPTY_POOL, rho0=0.0)
    with pytest.raises(ValueError):
        admm_solve(objective_matrix(K2), EMPTY_POOL, eps=-1.0)
