"""Edge-loop kernels for the graph p-Laplacian.

Every kernel exists twice: a vectorised numpy version and a numba ``@njit``
version with identical semantics. ``GRAPH_CSH_NUMBA=0`` (or a missing numba
install) selects the numpy path; the default is numba.

Edges are passed as two int64 arrays ``ei < ej`` listing each undirected edge
once, in a fixed order, so accumulation order is deterministic.
"""

import os

import numpy as np

EQ_REL_TOL = 1e-12


def equal_value_threshold(u):
    """Edge differences at or below this are dropped when ``p < 2``."""
    return EQ_REL_TOL * (1.0 + float(np.max(np.abs(u))))


# ---------------------------------------------------------------- numpy path


def _edge_flux_np(u, ei, ej, p, tau):
    d = u[ej] - u[ei]
    ad = np.abs(d)
    if p < 2.0:
        keep = ad > tau
        t = np.zeros_like(d)
        t[keep] = ad[keep] ** (p - 2.0) * d[keep]
        return t
    return ad ** (p - 2.0) * d


def p_laplacian_np(u, ei, ej, p, tau):
    t = _edge_flux_np(u, ei, ej, p, tau)
    out = np.zeros_like(u)
    np.add.at(out, ei, t)
    np.subtract.at(out, ej, t)
    return out


def gradient_energy_np(u, ei, ej, p):
    return float(np.sum(np.abs(u[ej] - u[ei]) ** p))


def edge_weights_np(u, ei, ej, p, tau):
    d = u[ej] - u[ei]
    ad = np.abs(d)
    if p < 2.0:
        w = np.zeros_like(d)
        keep = ad > tau
        w[keep] = (p - 1.0) * ad[keep] ** (p - 2.0)
        return w
    return (p - 1.0) * ad ** (p - 2.0)


def neg_dlap_np(u, ei, ej, p, tau):
    w = edge_weights_np(u, ei, ej, p, tau)
    n = u.shape[0]
    m = np.zeros((n, n))
    np.add.at(m, (ei, ej), -w)
    np.add.at(m, (ej, ei), -w)
    np.add.at(m, (ei, ei), w)
    np.add.at(m, (ej, ej), w)
    return m


# ---------------------------------------------------------------- numba path


def _build_numba():
    from numba import njit

    @njit(cache=True, error_model="numpy")
    def p_laplacian_nb(u, ei, ej, p, tau):
        out = np.zeros_like(u)
        small = p < 2.0
        for k in range(ei.shape[0]):
            i = ei[k]
            j = ej[k]
            d = u[j] - u[i]
            ad = abs(d)
            if small and ad <= tau:
                continue
            t = ad ** (p - 2.0) * d
            out[i] += t
            out[j] -= t
        return out

    @njit(cache=True, error_model="numpy")
    def gradient_energy_nb(u, ei, ej, p):
        s = 0.0
        for k in range(ei.shape[0]):
            s += abs(u[ej[k]] - u[ei[k]]) ** p
        return s

    @njit(cache=True, error_model="numpy")
    def edge_weights_nb(u, ei, ej, p, tau):
        w = np.zeros(ei.shape[0])
        small = p < 2.0
        for k in range(ei.shape[0]):
            ad = abs(u[ej[k]] - u[ei[k]])
            if small and ad <= tau:
                continue
            w[k] = (p - 1.0) * ad ** (p - 2.0)
        return w

    @njit(cache=True, error_model="numpy")
    def neg_dlap_nb(u, ei, ej, p, tau):
        n = u.shape[0]
        m = np.zeros((n, n))
        w = edge_weights_nb(u, ei, ej, p, tau)
        for k in range(ei.shape[0]):
            i = ei[k]
            j = ej[k]
            m[i, j] -= w[k]
            m[j, i] -= w[k]
            m[i, i] += w[k]
            m[j, j] += w[k]
        return m

    return p_laplacian_nb, gradient_energy_nb, edge_weights_nb, neg_dlap_nb


def _numba_requested():
    return os.environ.get("GRAPH_CSH_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = False
if _numba_requested():
    try:
        p_laplacian, gradient_energy, edge_weights, neg_dlap = _build_numba()
        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency in practice
        pass

if not USE_NUMBA:
    p_laplacian = p_laplacian_np
    gradient_energy = gradient_energy_np
    edge_weights = edge_weights_np
    neg_dlap = neg_dlap_np

BACKEND = "numba" if USE_NUMBA else "numpy"
