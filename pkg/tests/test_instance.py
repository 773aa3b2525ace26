import numpy as np
import pytest

from sdpcut.instance import (
    Graph,
    ParseError,
    cut_value,
    laplacian,
    lift_assignment,
    make_graph,
    objective_matrix,
    parse_instance,
    reduce_subproblem,
    root_subproblem,
)

from oracles import brute_force_max_cut, random_graph


def test_parse_single_edge():
    g = parse_instance("2 1\n1 2 1")
    assert g.n == 2
    assert g.edges == ((1, 2, 1.0),)
    assert g.integer_weights


def test_parse_k3():
    g = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
    assert g.n == 3
    assert len(g.edges) == 3
    assert g.integer_weights


def test_parse_index_out_of_range():
    with pytest.raises(ParseError, match=r"vertex index 3 exceeds n=2 at line 2"):
        parse_instance("2 1\n1 3 1")


def test_parse_duplicate_edge():
    with pytest.raises(ParseError, match=r"duplicate edge \(1,2\) at line 3"):
        parse_instance("3 2\n1 2 1\n2 1 4")


def test_parse_edge_count_mismatch():
    with pytest.raises(ParseError, match="promised 2 edges but 1"):
        parse_instance("3 2\n1 2 1")
    with pytest.raises(ParseError, match="more than 1 edges"):
        parse_instance("3 1\n1 2 1\n1 3 1")


def test_parse_malformed_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_instance("2 1\n1 2")
    with pytest.raises(ParseError, match="line 2"):
        parse_instance("2 1\n1 2 abc")
    with pytest.raises(ParseError, match="self-loop"):
        parse_instance("2 1\n2 2 1")
    with pytest.raises(ParseError, match="header"):
        parse_instance("nope")
    with pytest.raises(ParseError, match="empty instance"):
        parse_instance("# only comments\n")


def test_parse_comments_and_blank_lines():
    g = parse_instance("# generated\n\n3 1\n# edge list\n1 3 -2.5\n")
    assert g.edges == ((1, 3, -2.5),)
    assert not g.integer_weights


def test_parse_zero_weight_retained_and_endpoint_order():
    g = parse_instance("3 2\n2 1 0\n3 1 1")
    assert (1, 2, 0.0) in g.edges
    assert (1, 3, 1.0) in g.edges


def test_parse_decimal_integer_weights():
    assert parse_instance("2 1\n1 2 5.0").integer_weights
    assert not parse_instance("2 1\n1 2 0.5").integer_weights


def test_laplacian_k2_k3():
    k2 = parse_instance("2 1\n1 2 1")
    assert np.array_equal(laplacian(k2), [[1, -1], [-1, 1]])
    k3 = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
    assert np.array_equal(laplacian(k3), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_laplacian_weighted_path():
    g = parse_instance("3 2\n1 2 2\n2 3 5")
    lap = laplacian(g)
    assert np.array_equal(np.diag(lap), [2, 7, 5])
    assert lap[0, 1] == -2 and lap[1, 2] == -5 and lap[0, 2] == 0


def test_laplacian_properties():
    rng = np.random.default_rng(0)
    for trial in range(20):
        g = random_graph(rng, int(rng.integers(2, 12)))
        lap = laplacian(g)
        assert np.allclose(lap.sum(axis=1), 0.0)
        assert np.array_equal(lap, lap.T)


def test_objective_matrix_k2():
    g = parse_instance("2 1\n1 2 1")
    assert np.array_equal(objective_matrix(g), 0.25 * np.ones((2, 2)))


def test_objective_matrix_k3():
    g = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
    expect = 0.25 * np.array([[2, -1, 1], [-1, 2, 1], [1, 1, 2]])
    assert np.allclose(objective_matrix(g), expect)


def test_objective_matrix_empty_graph():
    g = make_graph(3, [])
    assert np.array_equal(objective_matrix(g), np.zeros((3, 3)))


def test_objective_matrix_rejects_single_vertex():
    with pytest.raises(ValueError):
        objective_matrix(make_graph(1, []))


def test_objective_matrix_matches_cut_values():
    # <L, vv^T> with v = [x; 1] must equal the cut weight for every x.
    rng = np.random.default_rng(1)
    for trial in range(15):
        n = int(rng.integers(2, 7))
        g = random_graph(rng, n, density=0.8)
        L = objective_matrix(g)
        for bits in range(2 ** (n - 1)):
            x = np.array([1.0 if (bits >> i) & 1 else -1.0 for i in range(n - 1)] + [1.0])
            # z = (x+e)/2 with the reference vertex n pinned to side 0
            sides = np.append((x[: n - 1] > 0), 0).astype(np.int8)
            assert x @ L @ x == pytest.approx(cut_value(g, sides), abs=1e-9)


def test_reduce_k2_examples():
    g = parse_instance("2 1\n1 2 1")
    root = root_subproblem(g)
    same = reduce_subproblem(root, 1, 0)
    assert same.reduced.n == 1 and same.offset == 0.0
    opposite = reduce_subproblem(root, 1, 1)
    assert opposite.reduced.n == 1 and opposite.offset == 1.0


def test_reduce_k3_fix_one():
    g = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
    root = root_subproblem(g)
    child = reduce_subproblem(root, 1, 1)
    assert child.reduced.n == 2
    # brute force over the remaining completions through the reduction contract
    best = 0.0
    for z2 in (0, 1):
        sides = lift_assignment(child, np.array([z2, 0], dtype=np.int8))
        assert sides[0] == 1  # vertex 1 fixed opposite the reference
        best = max(best, cut_value(g, sides))
    assert best == 2.0


def test_reduce_rejects_bad_fixes():
    g = parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1")
    root = root_subproblem(g)
    child = reduce_subproblem(root, 1, 0)
    with pytest.raises(ValueError):
        reduce_subproblem(child, 1, 1)
    with pytest.raises(ValueError):
        reduce_subproblem(root, 3, 0)  # representative
    with pytest.raises(ValueError):
        reduce_subproblem(root, 1, 2)


def test_reduction_contract_exhaustive():
    # Random reduction chains: at every step, every completion of the free
    # variables must satisfy parent value == reduced value + offset.
    rng = np.random.default_rng(42)
    for trial in range(200):
        n = int(rng.integers(2, 11))
        g = random_graph(rng, n, density=0.6, lo=-5, hi=5)
        sub = root_subproblem(g)
        while sub.reduced.n > 1:
            vertex = int(rng.choice(sub.vertex_map[:-1]))
            value = int(rng.integers(0, 2))
            sub = reduce_subproblem(sub, vertex, value)
            nr = sub.reduced.n
            for bits in range(2 ** max(0, nr - 1)):
                reduced_sides = np.array(
                    [(bits >> i) & 1 for i in range(nr - 1)] + [0], dtype=np.int8
                )
                full = lift_assignment(sub, reduced_sides)
                assert cut_value(g, full) == pytest.approx(
                    cut_value(sub.reduced, reduced_sides) + sub.offset, abs=1e-9
                )


def test_reduction_preserves_optimum():
    rng = np.random.default_rng(9)
    for trial in range(25):
        n = int(rng.integers(3, 9))
        g = random_graph(rng, n, density=0.7, lo=-4, hi=6)
        expect, _ = brute_force_max_cut(g)
        sub = root_subproblem(g)
        vertex = int(rng.choice(sub.vertex_map[:-1]))
        lo = reduce_subproblem(sub, vertex, 0)
        hi = reduce_subproblem(sub, vertex, 1)
        got = max(
            brute_force_max_cut(lo.reduced)[0] + lo.offset,
            brute_force_max_cut(hi.reduced)[0] + hi.offset,
        )
        assert got == pytest.approx(expect, abs=1e-9)
