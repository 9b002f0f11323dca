import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import central_difference_jacobian, dense_laplacian, naive_p_laplacian
from graph_csh import (
    NonRegularError,
    ProblemData,
    SolverConfig,
    compute_bounds,
    complete_graph,
    cycle_graph,
    det_sign,
    global_degree,
    jacobian_F,
    jacobian_G,
    jacobian_p_laplacian,
    local_degree,
    path_graph,
    random_connected_graph,
    solve_small_eps,
    spectral_gap_check,
    spectrum,
)
from graph_csh.degree import excluded_edge_count

K2 = complete_graph(2)
K3 = complete_graph(3)


# ---------------------------------------------------------------- Jacobians


def test_p2_jacobian_is_graph_laplacian():
    g = random_connected_graph(7, 1)
    u = np.random.default_rng(0).normal(size=7)
    np.testing.assert_allclose(jacobian_p_laplacian(g, u, 2), dense_laplacian(7, g.edges), atol=1e-15)


@pytest.mark.parametrize("p, w", [(3, 2.0), (1.5, 0.5)])
def test_k2_jacobian_weights(p, w):
    np.testing.assert_allclose(jacobian_p_laplacian(K2, [0.0, 1.0], p), [[w, -w], [-w, w]], atol=1e-15)


def test_equal_neighbours_carry_no_weight_below_two():
    g = path_graph(3)
    u = [0.0, 0.0, 1.0]
    assert excluded_edge_count(g, u, 1.5) == 1
    np.testing.assert_allclose(jacobian_p_laplacian(g, u, 1.5), [[0, 0, 0], [0, 0.5, -0.5], [0, -0.5, 0.5]])
    assert excluded_edge_count(g, u, 3) == 0


def test_jacobian_G_at_zero():
    np.testing.assert_allclose(jacobian_G(K2, [0.0, 0.0], 1.0, 2), [[3, -1], [-1, 3]])


def test_jacobian_F_at_zero():
    np.testing.assert_allclose(jacobian_F(K3, [0.0] * 3, 1.0, 1.0, 2), dense_laplacian(3, K3.edges) + np.eye(3))


def test_zero_coupling_leaves_singular_laplacian():
    m = jacobian_F(K3, [0.3, -0.2, 1.0], 0.0, 1.0, 2)
    assert det_sign(m) == 0 or abs(np.linalg.det(m)) < 1e-12
    with pytest.raises(NonRegularError, match="non-regular solution"):
        local_degree(m)


@st.composite
def jacobian_instance(draw):
    n = draw(st.integers(2, 10))
    g = random_connected_graph(n, draw(st.integers(0, 10**6)), extra_edge_prob=draw(st.floats(0, 0.7)))
    p = draw(st.sampled_from([2.0, 3.0, 4.5]))
    u = np.array(draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    lam = draw(st.sampled_from([-2.0, -1.0, 1.0, 2.0]))
    sigma = draw(st.floats(0, 1))
    return g, p, u, lam, sigma


@given(jacobian_instance())
def test_jacobian_symmetric_with_zero_row_sums(inst):
    g, p, u, lam, sigma = inst
    a = jacobian_p_laplacian(g, u, p)
    scale = max(float(np.max(np.abs(a))), 1e-300)
    assert np.max(np.abs(a - a.T)) <= 1e-12 * scale
    assert np.max(np.abs(a.sum(axis=1))) <= 1e-10 * scale
    full = jacobian_F(g, u, lam, sigma, p)
    np.testing.assert_allclose(full - a, np.diag(lam * np.exp(u) * (2 * np.exp(u) - sigma)), atol=1e-14)


@given(jacobian_instance())
def test_jacobian_matches_central_differences(inst):
    g, p, u, lam, sigma = inst
    n = g.vertex_count

    def F(v):
        return -naive_p_laplacian(n, g.edges, v, p) + lam * np.exp(v) * (np.exp(v) - sigma)

    J = jacobian_F(g, u, lam, sigma, p)
    fd = central_difference_jacobian(F, u, 1e-6)
    scale = np.maximum(np.max(np.abs(J), axis=0), 1.0)
    assert np.all(np.max(np.abs(fd - J), axis=0) <= 1e-5 * scale)


def test_jacobian_G_matches_central_differences():
    g = cycle_graph(5)
    u = np.random.default_rng(4).normal(size=5)

    def G(v):
        return -naive_p_laplacian(5, g.edges, v, 3) - 1.5 * np.exp(2 * v)

    np.testing.assert_allclose(jacobian_G(g, u, -1.5, 3), central_difference_jacobian(G, u), rtol=1e-6, atol=1e-7)


# --------------------------------------------------------- spectral tools


@pytest.mark.parametrize("m, expected", [
    (dense_laplacian(2, [(0, 1)]), [0, 2]),
    (dense_laplacian(3, [(0, 1), (0, 2), (1, 2)]), [0, 3, 3]),
    ([[2, -2], [-2, 2]], [0, 4]),
])
def test_spectrum_examples(m, expected):
    np.testing.assert_allclose(spectrum(m), expected, atol=1e-12)


@pytest.mark.parametrize("m, sign", [
    ([[3, -1], [-1, 3]], 1),
    (np.diag([-1.0, 2.0, 2.0]), -1),
    (np.diag([-1.0, -2.0, 2.0]), 1),
    ([[0, 1], [1, 0]], -1),
])
def test_local_degree_examples(m, sign):
    assert local_degree(m) == sign


@given(jacobian_instance())
def test_eigenvalues_consistent_with_trace_and_determinant(inst):
    g, p, u, lam, sigma = inst
    m = jacobian_F(g, u, lam, sigma, p)
    ev = spectrum(m)
    tr = np.trace(m)
    assert abs(ev.sum() - tr) <= 1e-9 * max(np.sum(np.abs(ev)), 1e-300)
    det = np.linalg.det(m)
    prod = np.prod(ev)
    cond = np.linalg.cond(m)
    if cond < 1e6:
        assert abs(prod - det) <= 1e-7 * abs(det)
        assert det_sign(m) == int(np.sign(det))


def test_small_eps_negative_coupling_has_index_minus_one():
    pd = ProblemData.create(K3, -1.0, [0.5, 0.4, 0.6], 2)
    eps = compute_bounds(pd).eps0 / 2
    u = solve_small_eps(pd, eps).solution
    assert spectral_gap_check(K3, u, -1.0, 2) > 0
    assert local_degree(jacobian_G(K3, u, -1.0, 2)) == -1


def test_gap_approaches_fiedler_value():
    assert spectral_gap_check(K3, [-20.0] * 3, 1.0, 2) == pytest.approx(3.0, abs=1e-12)
    u = [0.5 * math.log(0.05)] * 2
    assert spectral_gap_check(K2, u, 1.0, 2) >= 1.8 - 1e-12
    assert spectral_gap_check(K2, u, -1.0, 2) >= 1.8 - 1e-12


def test_gap_not_positive_when_weights_disconnect():
    # u equal across the bridge 0-1 kills that edge's weight at p = 4
    gap = spectral_gap_check(path_graph(3), [0.0, 0.0, 1.0], 1.0, 4)
    assert gap <= 0


# ----------------------------------------------------------- global degree


def test_degree_positive_coupling_single_solution():
    pd = ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)
    rep = global_degree(pd)
    assert rep.degree == 1 and rep.matches_sgn_lambda
    assert rep.radius_R == compute_bounds(pd).R0
    assert len(rep.solutions) == 1 and rep.local_signs == [1]
    np.testing.assert_allclose(rep.solutions[0], math.log((1 + math.sqrt(5)) / 2), atol=1e-10)
    assert rep.degree == sum(rep.local_signs)


def test_degree_negative_coupling():
    rep = global_degree(ProblemData.create(K2, -1.0, [1.0, 1.0], 2))
    assert rep.degree == -1 and rep.matches_sgn_lambda


def test_degree_solutions_inside_ball():
    pd = ProblemData.create(random_connected_graph(6, 2), -2.0, [0.5, 0.45, 0.6, 0.52, 0.55, 0.4], 3)
    rep = global_degree(pd)
    assert all(np.max(np.abs(u)) < rep.radius_R for u in rep.solutions)
    assert rep.pairs_consistent


def test_degree_rejects_ball_smaller_than_bounds():
    pd = ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)
    with pytest.raises(ValueError, match="below R0"):
        global_degree(pd, R=0.5)


@pytest.mark.parametrize("lam, sign, p", [(1.0, -1, 2.0), (-2.0, 1, 2.0), (2.0, -1, 3.0), (-1.0, 1, 1.5)])
def test_degree_invariant_along_sigma(lam, sign, p):
    g = cycle_graph(4)
    f = sign * (0.5 + np.random.default_rng(7).uniform(-0.1, 0.1, 4))
    pd = ProblemData.create(g, lam, f, p)
    degrees = {s: global_degree(pd, sigma=s).degree for s in (0.0, 0.5, 1.0)}
    assert set(degrees.values()) == {int(np.sign(lam))}, degrees


def test_degree_report_serialises():
    d = global_degree(ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)).to_dict()
    assert set(d) >= {"radius_R", "solutions", "local_signs", "degree", "spectral_gaps", "matches_sgn_lambda"}
    assert d["partners"] == ["bottom"]


def test_degree_is_deterministic():
    pd = ProblemData.create(path_graph(3), 2.0, [-0.5, -0.6, -0.4], 1.5)
    cfg = SolverConfig(seed=3)
    a = global_degree(pd, cfg=cfg)
    b = global_degree(pd, cfg=cfg)
    assert a.degree == b.degree
    assert [u.tobytes() for u in a.solutions] == [u.tobytes() for u in b.solutions]
