import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graph_csh import _kernels, random_connected_graph

NUMBA = dict(zip(("p_laplacian", "gradient_energy", "edge_weights", "neg_dlap"), _kernels._build_numba()))
NUMPY = {
    "p_laplacian": _kernels.p_laplacian_np,
    "gradient_energy": _kernels.gradient_energy_np,
    "edge_weights": _kernels.edge_weights_np,
    "neg_dlap": _kernels.neg_dlap_np,
}


@given(st.integers(2, 14), st.integers(0, 10**6), st.sampled_from([1.3, 1.5, 2.0, 3.0, 4.5]), st.booleans())
def test_kernels_agree_across_backends(n, seed, p, ties):
    g = random_connected_graph(n, seed)
    rng = np.random.default_rng(seed)
    u = rng.integers(0, 3, n).astype(float) if ties else rng.normal(size=n)
    tau = _kernels.equal_value_threshold(u)
    for name in NUMPY:
        args = (u, g._ei, g._ej, p) if name == "gradient_energy" else (u, g._ei, g._ej, p, tau)
        np.testing.assert_allclose(NUMBA[name](*args), NUMPY[name](*args), rtol=1e-13, atol=1e-13, err_msg=name)


def test_threshold_scales_with_sup_norm():
    assert _kernels.equal_value_threshold(np.array([0.0, -3.0])) == pytest.approx(4e-12)


SNIPPET = """
import numpy as np
from graph_csh import BACKEND, ProblemData, random_connected_graph, solve_csh
pd = ProblemData.create(random_connected_graph(6, 2), -1.0, [0.5, 0.45, 0.6, 0.52, 0.55, 0.4], 1.5)
rep = solve_csh(pd)
print(BACKEND, rep.converged, *(repr(float(x)) for x in rep.solution))
"""


def _run(flag):
    env = dict(os.environ, GRAPH_CSH_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    backend, converged, *values = out.stdout.split()
    return backend, converged == "True", np.array([float(v) for v in values])


def test_environment_flag_selects_backend_and_results_agree():
    b0, ok0, u0 = _run("0")
    b1, ok1, u1 = _run("1")
    assert (b0, b1) == ("numpy", "numba")
    assert ok0 and ok1
    np.testing.assert_allclose(u0, u1, atol=1e-9)
