import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import box_constants
from graph_csh import (
    HypothesisError,
    ProblemData,
    check_bound,
    complete_graph,
    compute_bounds,
    path_graph,
    random_connected_graph,
    small_eps_bounds,
    solve_csh,
)
from graph_csh.graph import diameter_path_length, poincare_constant

K2 = complete_graph(2)


@pytest.fixture(scope="module")
def k2_bounds():
    pd = ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)
    return pd, compute_bounds(pd)


def test_k2_box_constants(k2_bounds):
    _, b = k2_bounds
    assert b.a == 4.0
    assert b.upper == pytest.approx(math.log((1 + math.sqrt(17)) / 2), abs=1e-14)
    assert b.upper == pytest.approx(0.9406, abs=1e-4)
    assert b.zeta == 2.0
    assert b.A == pytest.approx(math.log(4), abs=1e-14)
    assert b.eta == 2.0


def test_chain_constants_follow_their_formulas(k2_bounds):
    pd, b = k2_bounds
    p, q, n = 2.0, 2.0, 2
    chat = poincare_constant(K2, 2)
    l = diameter_path_length(K2)
    assert b.poincare_c == chat and b.path_l == l == 2
    assert b.energy_c == pytest.approx(chat ** (q / p))
    chain = (2 * (l - 1) ** (p - 1) * n * b.energy_c) ** (1 / p)
    assert b.b == pytest.approx(abs(pd.lam) * ((1 + math.sqrt(17)) ** 2 / 4 + (1 + math.sqrt(17)) / 2) + 1.0)
    assert b.c0 == pytest.approx(b.b ** (q / p) * chain)
    assert b.lower == pytest.approx(-b.A - b.c0)
    assert b.C3 == pytest.approx(4 * b.eta * abs(pd.lam) * chain)
    assert b.eps0 == pytest.approx(1 / (2 * b.C3))
    assert b.R0 == pytest.approx(max(abs(b.upper), abs(b.lower)) + 1)


@pytest.mark.parametrize("lam, fbar, n", [(1.0, -1.0, 2), (-2.0, 0.3, 5), (0.5, -3.0, 8), (-1.0, 4.0, 3)])
def test_box_constants_against_formulas(lam, fbar, n):
    pd = ProblemData.create(path_graph(n), lam, np.full(n, fbar), 3)
    b = compute_bounds(pd)
    for name, value in box_constants(n, lam, fbar).items():
        assert getattr(b, name) == pytest.approx(value, rel=1e-14), name


def test_bounds_serialise_every_constant(k2_bounds):
    _, b = k2_bounds
    assert set(b.to_dict()) == {"a", "upper", "b", "c0", "zeta", "A", "lower", "eta", "C3", "eps0", "R0",
                                "poincare_c", "energy_c", "path_l"}


def test_check_bound_examples(k2_bounds):
    pd, b = k2_bounds
    assert check_bound(pd, b, [0.0, 0.0])
    assert not check_bound(pd, b, [100.0, 100.0])
    assert check_bound(pd, b, [b.upper, b.upper])
    assert check_bound(pd, b, [b.lower, b.lower])
    assert not check_bound(pd, b, [b.lower - 1e-9, 0.0])


@pytest.mark.parametrize("lam, f", [(1.0, [1.0, 1.0]), (-1.0, [-1.0, 0.5]), (1.0, [1.0, -1.0])])
def test_sign_condition_enforced(lam, f):
    with pytest.raises(HypothesisError, match="hypothesis"):
        ProblemData.create(K2, lam, f, 2)


def test_zero_lambda_rejected():
    with pytest.raises(ValueError):
        ProblemData.create(K2, 0.0, [-1.0, -1.0], 2)


def test_relaxed_data_is_refused_by_solvers():
    pd = ProblemData.relaxed_data(K2, 1.0, [1.0, 1.0], 2)
    assert not pd.sign_condition()
    with pytest.raises(HypothesisError):
        compute_bounds(pd)
    with pytest.raises(HypothesisError):
        solve_csh(pd)
    # even data that satisfies the sign condition is refused when built relaxed
    with pytest.raises(HypothesisError):
        solve_csh(ProblemData.relaxed_data(K2, 1.0, [-1.0, -1.0], 2))


def test_problem_data_is_immutable():
    pd = ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)
    with pytest.raises(ValueError):
        pd.f[0] = 3.0


def test_small_eps_bounds_scale_the_source():
    pd = ProblemData.create(K2, 1.0, [-1.0, -1.0], 2)
    small = small_eps_bounds(pd, 0.01)
    assert small.eta == pytest.approx(0.02)
    assert small.upper < compute_bounds(pd).upper


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.01, 5), st.sampled_from([1.0, -1.0]),
       st.integers(2, 9))
def test_box_grows_with_source_magnitude(lam_mag, fmag, extra, sign, n):
    lam = sign * lam_mag
    g = random_connected_graph(n, n)
    small = compute_bounds(ProblemData.create(g, lam, np.full(n, -sign * fmag), 2), poincare_c=1.0)
    large = compute_bounds(ProblemData.create(g, lam, np.full(n, -sign * (fmag + extra)), 2), poincare_c=1.0)
    assert large.a >= small.a
    assert large.upper >= small.upper
