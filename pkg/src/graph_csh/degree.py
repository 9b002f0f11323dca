"""Jacobians of the Chern-Simons Higgs maps and their Brouwer degree.

On a ball ``B_R`` containing every zero, and at a regular value, the degree
is the sum over zeros of ``sign det DF``. :func:`global_degree` collects the
zeros of ``F(., sigma)`` by multistart Newton seeded from the homotopy
pipeline and sums their local signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import Graph, _p, vertex_function

RCOND_MIN = 1e-14


class NonRegularError(ArithmeticError):
    """A zero with a (numerically) singular Jacobian; the degree needs a regular value."""


# ------------------------------------------------------------------ Jacobians


def jacobian_p_laplacian(g: Graph, u, e) -> np.ndarray:
    """Matrix of ``-d(Delta_p u)/du``: a graph Laplacian with weights ``(p-1)|du|^{p-2}``.

    For ``p < 2`` edges whose endpoint values agree (up to the equal-value
    threshold) carry no weight.
    """
    u = vertex_function(g, u)
    p = _p(e)
    tau = _kernels.equal_value_threshold(u)
    return _kernels.neg_dlap(u, g._ei, g._ej, p, tau)


def excluded_edge_count(g: Graph, u, e) -> int:
    p = _p(e)
    if p >= 2.0:
        return 0
    u = vertex_function(g, u)
    tau = _kernels.equal_value_threshold(u)
    return int(np.sum(np.abs(u[g._ej] - u[g._ei]) <= tau))


def jacobian_F(g: Graph, u, lam: float, sigma: float, e) -> np.ndarray:
    u = vertex_function(g, u)
    m = jacobian_p_laplacian(g, u, e)
    eu = np.exp(u)
    m[np.diag_indices_from(m)] += lam * eu * (2.0 * eu - sigma)
    return m


def jacobian_G(g: Graph, u, lam: float, e) -> np.ndarray:
    u = vertex_function(g, u)
    m = jacobian_p_laplacian(g, u, e)
    m[np.diag_indices_from(m)] += 2.0 * lam * np.exp(2.0 * u)
    return m


# --------------------------------------------------------------- the maps


@dataclass(frozen=True)
class FFamily:
    """``F(u, sigma) = -Delta_p u + lam e^u (e^u - sigma) + f``; sigma=1 is the target."""

    name: str = field(default="F", init=False)

    def residual(self, pd, u, sigma):
        lap = _kernels.p_laplacian(u, pd.graph._ei, pd.graph._ej, pd.p,
                                   _kernels.equal_value_threshold(u))
        eu = np.exp(u)
        return -lap + pd.lam * eu * (eu - sigma) + pd.f

    def jacobian(self, pd, u, sigma):
        return jacobian_F(pd.graph, u, pd.lam, sigma, pd.exponent)

    def d_param(self, pd, u, sigma):
        return -pd.lam * np.exp(u)

    def balance_shift(self, pd, u, sigma):
        """Constant ``s`` with ``sum F(u + s, sigma) = 0``, or None if there is none.

        With ``y = e^{s+m}`` (``m = max u``) the summed equation is the
        quadratic ``A2 y^2 - sigma A1 y + sum(f)/lam = 0`` whose constant term
        is negative, so exactly one root is positive.
        """
        m = float(np.max(u))
        a2 = float(np.sum(np.exp(2.0 * (u - m))))
        a1 = float(np.sum(np.exp(u - m)))
        c = float(np.sum(pd.f)) / pd.lam
        if not c < 0.0:
            return None
        bq = sigma * a1
        y = (bq + np.sqrt(bq * bq - 4.0 * a2 * c)) / (2.0 * a2)
        return float(np.log(y) - m)


@dataclass(frozen=True)
class GFamily:
    """``G_eps(u, t) = -Delta_p u + lam e^{2u} + (t + (1-t) eps) f``."""

    eps: float
    name: str = field(default="G", init=False)

    def source_scale(self, t):
        return t + (1.0 - t) * self.eps

    def residual(self, pd, u, t):
        lap = _kernels.p_laplacian(u, pd.graph._ei, pd.graph._ej, pd.p,
                                   _kernels.equal_value_threshold(u))
        return -lap + pd.lam * np.exp(2.0 * u) + self.source_scale(t) * pd.f

    def jacobian(self, pd, u, t):
        return jacobian_G(pd.graph, u, pd.lam, pd.exponent)

    def d_param(self, pd, u, t):
        return (1.0 - self.eps) * pd.f

    def balance_shift(self, pd, u, t):
        """Constant ``s`` with ``sum G(u + s, t) = 0``, or None if there is none."""
        ratio = -self.source_scale(t) * float(np.sum(pd.f)) / pd.lam
        if not ratio > 0.0:
            return None
        m = float(np.max(u))
        return float(0.5 * (np.log(ratio) - np.log(np.sum(np.exp(2.0 * (u - m))))) - m)


# --------------------------------------------------------- spectral tools


def spectrum(m) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    return np.sort(np.linalg.eigvalsh(0.5 * (m + m.T)))


def reciprocal_condition(m) -> float:
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def det_sign(m) -> int:
    """Sign of ``det m`` from Gaussian elimination with partial pivoting.

    Returns 0 for an exactly zero pivot.
    """
    a = np.array(m, dtype=float, copy=True)
    n = a.shape[0]
    sign = 1
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if a[piv, k] == 0.0:
            return 0
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            sign = -sign
        if a[k, k] < 0.0:
            sign = -sign
        a[k + 1:, k:] -= np.outer(a[k + 1:, k] / a[k, k], a[k, k:])
    return sign


def local_degree(m) -> int:
    """Local Brouwer index ``sign det m`` at a regular zero."""
    if reciprocal_condition(m) < RCOND_MIN:
        raise NonRegularError("non-regular solution: Jacobian is numerically singular")
    s = det_sign(m)
    if s == 0:
        raise NonRegularError("non-regular solution: zero pivot")
    return s


def spectral_gap_check(g: Graph, u_eps, lam: float, e) -> float:
    """``lambda_1(-dDelta_p) - 2|lam| max e^{2u}``; positive means the sign argument applies."""
    u_eps = vertex_function(g, u_eps)
    ev = spectrum(jacobian_p_laplacian(g, u_eps, e))
    return float(ev[1] - 2.0 * abs(lam) * np.max(np.exp(2.0 * u_eps)))


# ------------------------------------------------------------ global degree


@dataclass
class DegreeReport:
    radius_R: float
    solutions: list
    local_signs: list
    degree: int
    spectral_gaps: list
    matches_sgn_lambda: bool
    sigma: float = 1.0
    partners: list = field(default_factory=list)
    pairs_consistent: bool = True

    def to_dict(self) -> dict:
        return {
            "radius_R": float(self.radius_R),
            "sigma": float(self.sigma),
            "solutions": [[float(x) for x in u] for u in self.solutions],
            "local_signs": [int(s) for s in self.local_signs],
            "degree": int(self.degree),
            "spectral_gaps": [float(x) for x in self.spectral_gaps],
            "matches_sgn_lambda": bool(self.matches_sgn_lambda),
            "partners": list(self.partners),
            "pairs_consistent": bool(self.pairs_consistent),
        }


def _index_of(u, found, tol):
    for i, v in enumerate(found):
        if float(np.max(np.abs(u - v))) < tol:
            return i
    return None


def _sign_at(pd, u, sigma):
    try:
        return local_degree(jacobian_F(pd.graph, u, pd.lam, sigma, pd.exponent))
    except NonRegularError as exc:
        raise NonRegularError("degree undefined at regular-value level; perturb f") from exc


TRACK_STEP_LADDER = (0.2, 0.05, 0.0125)


def global_degree(pd, R: float | None = None, cfg=None, sigma: float = 1.0,
                  pair_closure: bool = True, dedup_tol: float = 1e-6, max_tracks: int = 400) -> DegreeReport:
    """``deg(F(., sigma), B_R, 0)`` as the sum of local indices over the zeros found.

    Zeros come from multistart Newton in the a priori box, seeded with the end
    of the solution curve that starts at the unique small-epsilon solution.
    With ``pair_closure`` each zero is then followed backwards along the
    joined homotopy: its curve either descends to the small-epsilon end or
    returns to ``sigma`` at a partner zero, which is added if new. A curve
    that ends somewhere inconsistent (a second descent to the small-epsilon
    end, or a partner of equal index) has jumped branches and is re-followed
    with shorter steps. ``partners[i]`` is the partner index, ``"bottom"``
    for the curve through the small-epsilon solution, or None if unresolved.
    """
    from . import solvers
    from .estimates import compute_bounds

    cfg = cfg or solvers.SolverConfig()
    pd.require_strict()
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    bounds = compute_bounds(pd)
    R = bounds.R0 if R is None else float(R)
    if R < bounds.R0:
        raise ValueError(f"R = {R!r} is below R0 = {bounds.R0!r}; the ball must contain every solution")
    eps = cfg.epsilon if cfg.epsilon is not None else bounds.eps0 / 2.0
    top = 1.0 + sigma

    small = solvers.solve_small_eps(pd, eps, cfg)
    gaps = [spectral_gap_check(pd.graph, small.solution, pd.lam, pd.exponent)]
    seeds = []
    try:
        seeds.append(solvers.follow_main_branch(pd, eps, small.solution, cfg, top=top).solution)
    except solvers.SolverError:
        pass
    found = solvers.multistart_solutions(pd, FFamily(), sigma, (bounds.lower, bounds.upper), cfg,
                                         seeds=seeds, dedup_tol=dedup_tol)
    found = [u for u in found if float(np.max(np.abs(u))) < R]
    signs = [_sign_at(pd, u, sigma) for u in found]
    main_idx = _index_of(seeds[0], found, dedup_tol) if seeds else None

    partners: list = [None] * len(found)
    if main_idx is not None:
        # this zero was reached by following the curve up from the small-epsilon end
        partners[main_idx] = "bottom"
    if pair_closure:
        tracks = 0
        i = 0
        while i < len(found) and tracks < max_tracks:
            for h_max in TRACK_STEP_LADDER if partners[i] is None else ():
                tracks += 1
                try:
                    res = solvers.arclength_track(pd, eps, found[i], top, False, cfg, top=top, h_max=h_max)
                except solvers.SolverError:
                    continue
                if res.end == "bottom":
                    if main_idx is None and "bottom" not in partners:
                        main_idx = i
                    if i == main_idx:
                        partners[i] = "bottom"
                        break
                    continue
                if float(np.max(np.abs(res.solution))) >= R:
                    continue
                j = _index_of(res.solution, found, dedup_tol)
                if j is None:
                    found.append(res.solution)
                    partners.append(None)
                    signs.append(_sign_at(pd, res.solution, sigma))
                    j = len(found) - 1
                if j != i and partners[j] is None and signs[j] == -signs[i]:
                    partners[i], partners[j] = j, i
                    break
            i += 1

    consistent = all(
        p is None or p == "bottom" or signs[i] == -signs[p] for i, p in enumerate(partners)
    )
    degree = int(sum(signs))
    return DegreeReport(R, found, signs, degree, gaps, degree == int(np.sign(pd.lam)),
                        sigma, partners, consistent)
