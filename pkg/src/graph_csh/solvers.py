"""Solvers for ``Delta_p u = lam e^{2u} + eps f`` and ``Delta_p u = lam e^u (e^u - 1) + f``.

Two constructive routes reach the small-epsilon equation: for ``lam > 0`` an
ordered pair of lower/upper solutions and the monotone scheme
``(Delta_p - k) u_{n+1} = lam e^{2u_n} + eps f - k u_n``; for ``lam < 0``
minimisation of ``(1/p) int|grad u|^p + eps int f u`` on the level set
``lam int e^{2u} = -eps mean(f) |V|``. Damped Newton and natural-parameter
continuation carry the result to the full equation, with pseudo-arclength
continuation taking over where the natural parameter folds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .degree import FFamily, GFamily, RCOND_MIN, reciprocal_condition
from .estimates import AprioriBounds, ProblemData, check_bound, compute_bounds, small_eps_bounds
from .graph import Graph, _p, vertex_function

log = logging.getLogger(__name__)

ORDER_SLACK = 1e-9
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 60
BRACKET_DOUBLING_LIMIT = 2.0**60
TAU_TOL = 1e-6
STALL_ITERS = 25  # iterations without halving the residual before giving up
PREDICTOR_RCOND = 1e-8


class SolverError(RuntimeError):
    """A solver stage failed; ``best`` holds the best iterate, ``stage`` the pipeline stage."""

    def __init__(self, message, best=None, stage=None, partial=None):
        if stage:
            message = f"[{stage}] {message}"
        super().__init__(message)
        self.best = best
        self.stage = stage
        self.partial = partial


@dataclass
class SolverConfig:
    residual_tol: float = 1e-10
    max_outer_iters: int = 500
    max_inner_iters: int = 200
    inner_tol: float = 1e-12
    line_search_shrink: float = 0.5
    multistart_count: int = 32
    seed: int = 0
    homotopy_steps: int = 16
    epsilon: float | None = None

    def __post_init__(self):
        for name in ("residual_tol", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer_iters", "max_inner_iters", "multistart_count", "homotopy_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon override must be positive")


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_sup: float
    iterations: int
    method: str
    converged: bool
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        """``converged``, ``roundoff_floor`` (residual at the attainable floor) or ``failed``."""
        if self.converged:
            return "converged"
        return "roundoff_floor" if self.info.get("at_floor") else "failed"

    @property
    def usable(self) -> bool:
        return self.status != "failed"

    def to_dict(self) -> dict:
        return {
            "solution": [float(x) for x in self.solution],
            "residual_sup": float(self.residual_sup),
            "iterations": int(self.iterations),
            "method": self.method,
            "converged": bool(self.converged),
            "status": self.status,
            "trace": [[int(i), float(r), None if o is None else float(o)] for i, r, o in self.trace],
        }


@dataclass
class Bracket:
    u_minus: np.ndarray
    u_plus: np.ndarray
    k: np.ndarray
    v_eps: np.ndarray
    A_shift: float
    b_shift: float

    def to_dict(self) -> dict:
        return {key: (val.tolist() if isinstance(val, np.ndarray) else float(val))
                for key, val in asdict(self).items()}


def _sup(x) -> float:
    return float(np.max(np.abs(x)))


def _lap(g: Graph, u, p):
    return _kernels.p_laplacian(u, g._ei, g._ej, p, _kernels.equal_value_threshold(u))


def _energy_grad_lap(g: Graph, u, p):
    """``Delta_p u`` dropping only exactly equal neighbours.

    This is the true derivative of ``(1/p) int|grad u|^p``. The thresholded
    operator jumps by up to ``tau^{p-1}`` for p < 2, which would leave the
    minimisers a gradient floor far above their tolerance.
    """
    return _kernels.p_laplacian(u, g._ei, g._ej, p, 0.0)


FLOOR_FACTOR = 10.0


def residual_floor(g: Graph, u, p: float) -> float:
    """Smallest sup-residual of an equation in ``Delta_p u`` that float64 can certify at ``u``.

    Per vertex it adds the effect of rounding in each edge difference
    (``(p-1)|du|^{p-2}`` times a few ulps of the endpoint values). For
    p < 2 the equal-value rule makes the operator jump by ``tau^{p-1}`` at
    ``|du| = tau``; edges within a small band of the threshold contribute
    that jump instead.
    """
    u = np.asarray(u, dtype=float)
    d = np.abs(u[g._ej] - u[g._ei])
    ulp = 4.0 * np.finfo(float).eps * (np.abs(u[g._ei]) + np.abs(u[g._ej]) + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if p < 2.0:
            band = 4.0 * _kernels.equal_value_threshold(u)
            near = d <= band
            term = np.where(near, band ** (p - 1.0), (p - 1.0) * np.where(near, 1.0, d) ** (p - 2.0) * ulp)
        else:
            term = (p - 1.0) * d ** (p - 2.0) * ulp
    out = np.zeros(g.vertex_count)
    np.add.at(out, g._ei, term)
    np.add.at(out, g._ej, term)
    return float(np.max(out))


def _at_floor(g, u, p, res, tol):
    return bool(res <= tol + FLOOR_FACTOR * residual_floor(g, u, p))


def eq33_residual(pd: ProblemData, eps: float, u) -> np.ndarray:
    """``Delta_p u - lam e^{2u} - eps f``."""
    return _lap(pd.graph, u, pd.p) - pd.lam * np.exp(2.0 * u) - eps * pd.f


def csh_residual(pd: ProblemData, u, sigma: float = 1.0) -> np.ndarray:
    """``Delta_p u - lam e^u (e^u - sigma) - f``."""
    eu = np.exp(u)
    return _lap(pd.graph, u, pd.p) - pd.lam * eu * (eu - sigma) - pd.f


# ------------------------------------------------------ convex minimisation


def _newton_direction(h, grad, extra=None):
    """Solve ``(h + extra) d = -grad`` by Cholesky, shifting the diagonal until it is PD.

    The first nonzero shift is ``sqrt(sup|grad|)``, which keeps steps of a
    sensible size where the Hessian degenerates (constant stretches at p != 2).
    """
    m = h if extra is None else h + extra
    shift = 0.0
    for _ in range(60):
        try:
            c = np.linalg.cholesky(m + shift * np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            shift = max(math.sqrt(_sup(grad)), 1e-12) if shift == 0.0 else shift * 4.0
            continue
        y = np.linalg.solve(c, -grad)
        return np.linalg.solve(c.T, y)
    return -grad


def _roundoff_floor(terms, hess, x):
    """Size of the gradient attributable to rounding in ``x`` and in the summed terms."""
    eps = np.finfo(float).eps
    return 32.0 * eps * (terms + float(np.max(np.abs(hess) @ (np.abs(x) + 1.0))))


def _refine_step(value_at, alpha, value, shrink, limit=30):
    """Keep shrinking an accepted step while the value still drops.

    For ``p < 2`` the full Newton step on ``|d|^p`` reflects across the
    minimum and passes a weak Armijo test; this finds the better point inside.
    """
    for _ in range(limit):
        trial = alpha * shrink
        v = value_at(trial)
        if not (np.isfinite(v) and v < value):
            break
        alpha, value = trial, v
    return alpha, value


def _minimize_convex(energy, gradient, hessian, x0, tol, max_iter, shrink, extra=None,
                     what="minimizer", term_scale=0.0):
    """Damped Newton on a convex energy; stops when ``sup|gradient| <= tol``.

    ``extra`` is added to the Hessian when solving for the step (used to pin
    the constant mode of mean-zero problems). If the line search stalls with
    the gradient at the rounding floor, the iterate is accepted.
    """
    x = x0.copy()
    e = energy(x)
    g = gradient(x)
    gn = _sup(g)
    for it in range(max_iter + 1):
        if gn <= tol:
            return x, it
        h = hessian(x)
        if gn <= _roundoff_floor(term_scale, h, x):
            return x, it
        if it == max_iter:
            break
        d = _newton_direction(h, g, extra)
        slope = float(g @ d)
        if slope >= 0.0:
            d = -g
            slope = -float(g @ g)
        alpha = 1.0
        for _ in range(2 * MAX_BACKTRACKS):
            xn = x + alpha * d
            en = energy(xn)
            if np.isfinite(en):
                if en <= e + ARMIJO_C * alpha * slope:
                    break
                gnew = gradient(xn)
                # below roundoff in the energy, progress is judged on the gradient
                if en <= e + 1e-14 * (1.0 + abs(e)) and _sup(gnew) < gn:
                    break
            alpha *= shrink
        else:
            break
        alpha, en = _refine_step(lambda a: energy(x + a * d), alpha, en, shrink)
        xn = x + alpha * d
        x, e = xn, en
        g = gradient(x)
        gn = _sup(g)
    raise SolverError(f"{what} did not converge (sup gradient {gn:.3e})", best=x)


def solve_auxiliary(g: Graph, f, eps: float, e, cfg: SolverConfig | None = None) -> np.ndarray:
    """Mean-zero ``v`` with ``Delta_p v = eps (f - mean f)``."""
    cfg = cfg or SolverConfig()
    p = _p(e)
    f = vertex_function(g, f)
    r = eps * (f - f.mean())
    n = g.vertex_count
    if _sup(r) == 0.0:
        return np.zeros(n)
    ei, ej = g._ei, g._ej

    def energy(v):
        return _kernels.gradient_energy(v, ei, ej, p) / p + float(r @ v)

    def gradient(v):
        return -_energy_grad_lap(g, v, p) + r

    def hessian(v):
        return _kernels.neg_dlap(v, ei, ej, p, 0.0)

    pin = np.full((n, n), 1.0 / n)
    v, _ = _minimize_convex(energy, gradient, hessian, np.zeros(n), cfg.residual_tol,
                            cfg.max_outer_iters, cfg.line_search_shrink, extra=pin,
                            what="auxiliary solve", term_scale=_sup(r))
    return v - v.mean()


def solve_inner(g: Graph, k, rhs, e, cfg: SolverConfig | None = None, w0=None) -> np.ndarray:
    """Unique ``w`` with ``Delta_p w - k w = rhs`` for pointwise positive ``k``."""
    cfg = cfg or SolverConfig()
    p = _p(e)
    k = vertex_function(g, k)
    rhs = vertex_function(g, rhs)
    if np.any(k <= 0.0):
        raise ValueError("inner operator needs k > 0 pointwise")
    ei, ej = g._ei, g._ej

    def energy(w):
        return _kernels.gradient_energy(w, ei, ej, p) / p + 0.5 * float(k @ (w * w)) + float(rhs @ w)

    def gradient(w):
        return -_energy_grad_lap(g, w, p) + k * w + rhs

    def hessian(w):
        h = _kernels.neg_dlap(w, ei, ej, p, 0.0)
        h[np.diag_indices_from(h)] += k
        return h

    start = -rhs / k if w0 is None else vertex_function(g, w0).copy()
    w, _ = _minimize_convex(energy, gradient, hessian, start, cfg.inner_tol,
                            cfg.max_inner_iters, cfg.line_search_shrink, what="inner solve",
                            term_scale=_sup(rhs) + _sup(k * start))
    return w


# ----------------------------------------------------------- lam > 0 route


def construct_bracket(pd: ProblemData, eps: float, cfg: SolverConfig | None = None,
                      tighten: bool = False) -> Bracket:
    """Lower/upper solutions ``v_eps - A <= v_eps + b`` of the small-epsilon equation.

    ``A`` and ``b`` double from 1 until the pointwise sign conditions hold.
    With ``tighten`` the upper shift is then lowered to the smallest value
    that keeps ``v_eps + b`` an upper solution (never below ``-A``), which
    makes ``k`` and hence the monotone contraction factor much smaller.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    if not (pd.lam > 0 and pd.f_mean < 0 and eps > 0):
        raise ValueError("bracket construction needs lam > 0, mean(f) < 0, eps > 0")
    g = pd.graph
    v = solve_auxiliary(g, pd.f, eps, pd.exponent, cfg)
    base = _lap(g, v, pd.p) - eps * pd.f  # = -eps mean(f) up to solver tolerance
    tol = cfg.residual_tol

    A = 1.0
    while np.any(base - pd.lam * np.exp(2.0 * (v - A)) < -tol):
        A *= 2.0
        if A > BRACKET_DOUBLING_LIMIT:
            raise SolverError("bracket search diverged", best=v)
    b = 1.0
    while np.any(base - pd.lam * np.exp(2.0 * (v + b)) > tol):
        b *= 2.0
        if b > BRACKET_DOUBLING_LIMIT:
            raise SolverError("bracket search diverged", best=v)
    if tighten:
        b_min = float(np.max(0.5 * np.log(base / (pd.lam * np.exp(2.0 * v)))))
        b = max(min(b, b_min), -A)
    u_minus = v - A
    u_plus = v + b
    return Bracket(u_minus, u_plus, 2.0 * pd.lam * np.exp(2.0 * u_plus), v, A, b)


def monotone_iterate(pd: ProblemData, eps: float, br: Bracket, cfg: SolverConfig | None = None,
                     keep_iterates: bool = False) -> SolveReport:
    """Decreasing iteration from ``u_plus``; every iterate is checked against the ordering.

    With ``keep_iterates`` the whole sequence is returned in ``info["iterates"]``.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    if pd.lam <= 0:
        raise ValueError("monotone scheme needs lam > 0")
    g = pd.graph
    k = br.k
    u = br.u_plus.copy()
    res = _sup(eq33_residual(pd, eps, u))
    trace = [(0, res, None)]
    iterates = [u.copy()]
    extra = {"iterates": iterates} if keep_iterates else {}
    if res <= cfg.residual_tol:
        return SolveReport(u, res, 0, "monotone", True, trace, dict(extra))
    for n in range(1, cfg.max_outer_iters + 1):
        rhs = pd.lam * np.exp(2.0 * u) + eps * pd.f - k * u
        try:
            un = solve_inner(g, k, rhs, pd.exponent, cfg, w0=u)
        except SolverError as exc:
            raise SolverError(f"inner solve failed at iteration {n}: {exc}", best=u) from exc
        if np.any(un > u + ORDER_SLACK) or np.any(un < br.u_minus - ORDER_SLACK):
            raise SolverError("order-preservation failed", best=u)
        step = _sup(un - u)
        u = un
        if keep_iterates:
            iterates.append(u.copy())
        res = _sup(eq33_residual(pd, eps, u))
        trace.append((n, res, None))
        if step <= cfg.residual_tol and res <= cfg.residual_tol:
            return SolveReport(u, res, n, "monotone", True, trace, dict(extra))
    return SolveReport(u, res, cfg.max_outer_iters, "monotone", False, trace,
                       {"at_floor": _at_floor(g, u, pd.p, res, cfg.residual_tol), **extra})


# ----------------------------------------------------------- lam < 0 route


def _shift_onto_level(u, target):
    """Additive shift putting ``u`` on ``int e^{2u} = target``.

    One Newton step on ``s -> log int e^{2(u+s)} - log target``, which is
    affine in ``s`` and therefore solved exactly.
    """
    m = float(np.max(u))
    log_mass = 2.0 * m + math.log(float(np.sum(np.exp(2.0 * (u - m)))))
    s = -(log_mass - math.log(target)) / 2.0
    return u + s


def feasible_constant(pd: ProblemData, eps: float, cfg: SolverConfig | None = None) -> np.ndarray:
    """Constant on the constraint level set, found by bisection between ``-l`` and ``l``."""
    cfg = cfg or SolverConfig()
    n = pd.n
    target = eps * pd.f_mean * n

    def phi(t, l):
        return -pd.lam * n * math.exp(2.0 * (2.0 * t - 1.0) * l)

    l = 1.0
    while not (phi(0.0, l) < target < phi(1.0, l)):
        l *= 2.0
        if l > 700.0:
            raise SolverError("feasibility bisection failed")
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid, l) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    t0 = 0.5 * (lo + hi)
    return np.full(n, (2.0 * t0 - 1.0) * l)


def constraint_residual(pd: ProblemData, eps: float, u) -> float:
    return float(pd.lam * np.sum(np.exp(2.0 * u)) + eps * pd.f_mean * pd.n)


def multiplier_estimate(pd: ProblemData, eps: float, u) -> float:
    """``tau`` from integrating ``Delta_p u = 2 lam tau e^{2u} + eps f`` over V."""
    return float(np.sum(_lap(pd.graph, u, pd.p) - eps * pd.f) / (2.0 * pd.lam * np.sum(np.exp(2.0 * u))))


def constrained_minimize(pd: ProblemData, eps: float, cfg: SolverConfig | None = None,
                         start=None) -> SolveReport:
    """Minimise ``(1/p) int|grad u|^p + eps int f u`` on ``lam int e^{2u} + eps mean(f)|V| = 0``.

    Descent runs in the shift-reduced coordinates ``u = w + s(w)``: each trial
    point is projected back onto the level set by the exact additive shift.
    Directions are reduced Newton steps when the reduced Hessian is positive
    definite, otherwise projected gradients; an Armijo search keeps the
    objective nonincreasing.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    if not (pd.lam < 0 and pd.f_mean > 0 and eps > 0):
        raise ValueError("constrained minimisation needs lam < 0, mean(f) > 0, eps > 0")
    g = pd.graph
    p = pd.p
    n = pd.n
    ef = eps * pd.f
    target = -eps * pd.f_mean * n / pd.lam
    ei, ej = g._ei, g._ej

    def objective(u):
        return _kernels.gradient_energy(u, ei, ej, p) / p + float(ef @ u)

    u0 = feasible_constant(pd, eps, cfg) if start is None else vertex_function(g, start)
    u = _shift_onto_level(u0, target)
    obj = objective(u)
    pin = np.full((n, n), 1.0 / n)
    trace = []
    best = best_at_reset = np.inf
    obj_prev = np.inf
    stalled = 0
    for it in range(cfg.max_outer_iters + 1):
        r = -_energy_grad_lap(g, u, p) + ef
        e2u = np.exp(2.0 * u)
        pi = e2u / np.sum(e2u)
        rsum = float(np.sum(r))
        grad = r - pi * rsum  # equals minus the equation residual on the level set
        res = max(_sup(grad), abs(constraint_residual(pd, eps, u)))
        trace.append((it, res, obj))
        if res <= cfg.residual_tol:
            break
        if it == cfg.max_outer_iters:
            break
        best = min(best, res)
        # slow descent far from the solution is progress; only a flat objective is a stall
        flat = obj_prev - obj <= 1e-12 * (1.0 + abs(obj))
        stalled = stalled + 1 if res > 0.5 * best_at_reset and flat else 0
        if stalled == 0:
            best_at_reset = best
        if stalled >= STALL_ITERS:
            break
        obj_prev = obj
        h = _kernels.neg_dlap(u, ei, ej, p, 0.0)
        mproj = np.eye(n) - np.outer(np.ones(n), pi)
        hpsd = mproj.T @ h @ mproj
        hred = hpsd - 2.0 * rsum * (np.diag(pi) - np.outer(pi, pi))
        try:
            np.linalg.cholesky(hred + pin)
        except np.linalg.LinAlgError:
            # flip the indefinite level-set curvature rather than shifting past the small weights
            hred = hpsd + abs(2.0 * rsum) * (np.diag(pi) - np.outer(pi, pi))
        d = _newton_direction(hred, grad, pin)
        slope = float(grad @ d)
        if slope >= 0.0:
            d = -grad
            slope = -float(grad @ grad)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            un = _shift_onto_level(u + alpha * d, target)
            on = objective(un)
            if np.isfinite(on):
                if on <= obj + ARMIJO_C * alpha * slope:
                    accepted = True
                    break
                if on <= obj + 1e-14 * (1.0 + abs(obj)):
                    rn = -_energy_grad_lap(g, un, p) + ef
                    e2 = np.exp(2.0 * un)
                    gn = rn - e2 / np.sum(e2) * float(np.sum(rn))
                    if _sup(gn) < _sup(grad):
                        accepted = True
                        break
            alpha *= cfg.line_search_shrink
        if not accepted:
            break
        alpha, on = _refine_step(lambda a: objective(_shift_onto_level(u + a * d, target)),
                                 alpha, on, cfg.line_search_shrink)
        u, obj = _shift_onto_level(u + alpha * d, target), on

    residual = max(_sup(eq33_residual(pd, eps, u)), abs(constraint_residual(pd, eps, u)))
    tau_hat = multiplier_estimate(pd, eps, u)
    if abs(tau_hat - 0.5) > TAU_TOL:
        raise SolverError(f"multiplier check failed: tau = {tau_hat!r}", best=u)
    converged = residual <= cfg.residual_tol
    return SolveReport(u, residual, len(trace) - 1, "constrained_min", converged, trace,
                       {"tau_hat": tau_hat, "at_floor": _at_floor(g, u, p, residual, cfg.residual_tol)})


# --------------------------------------------------------------- Newton


def _balanced(pd, family, param, u):
    s = family.balance_shift(pd, u, param)
    return u if s is None or not np.isfinite(s) else u + s


def newton_solve(pd: ProblemData, family, param: float, u0, cfg: SolverConfig | None = None,
                 max_iter: int | None = None, balance: bool = True) -> SolveReport:
    """Damped Newton on ``family(u, param) = 0`` with Armijo backtracking on ``|F|^2``.

    With ``balance`` every iterate is shifted by the constant that makes the
    summed residual vanish. Every zero satisfies that scalar equation, so the
    shift only removes the slowest (constant) error mode; it is what lets
    starts far from the solution set converge.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    max_iter = cfg.max_outer_iters if max_iter is None else max_iter
    u = vertex_function(pd.graph, u0).copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if balance:
            u = _balanced(pd, family, param, u)
        F = family.residual(pd, u, param)
        fn2 = float(F @ F)
        res = _sup(F)
        trace = [(0, res, None)]
        for it in range(1, max_iter + 1):
            if res <= cfg.residual_tol:
                return SolveReport(u, res, it - 1, "newton", True, trace)
            if not np.isfinite(fn2):
                return SolveReport(u, res, it, "newton", False, trace, {"at_floor": False})
            J = family.jacobian(pd, u, param)
            if reciprocal_condition(J) < RCOND_MIN:
                raise SolverError("non-regular point", best=u)
            d = np.linalg.solve(J, -F)
            alpha = 1.0
            for _ in range(MAX_BACKTRACKS):
                un = u + alpha * d
                if balance:
                    un = _balanced(pd, family, param, un)
                Fn = family.residual(pd, un, param)
                fn2n = float(Fn @ Fn)
                if np.isfinite(fn2n) and fn2n <= (1.0 - 2.0 * ARMIJO_C * alpha) * fn2:
                    break
                alpha *= cfg.line_search_shrink
            else:
                return SolveReport(u, res, it, "newton", False, trace,
                                   {"at_floor": _at_floor(pd.graph, u, pd.p, res, cfg.residual_tol)})
            u, F, fn2 = un, Fn, fn2n
            res = _sup(F)
            trace.append((it, res, None))
    return SolveReport(u, res, max_iter, "newton", res <= cfg.residual_tol, trace,
                       {"at_floor": _at_floor(pd.graph, u, pd.p, res, cfg.residual_tol)})


# ------------------------------------------------------------ continuation


def homotopy_track(pd: ProblemData, family, steps: int, cfg: SolverConfig | None = None,
                   u_start=None, start: float = 0.0, end: float = 1.0,
                   max_halvings: int = 3) -> list[SolveReport]:
    """Follow a zero of ``family(., s)`` from ``s=start`` to ``s=end``.

    Each step uses an Euler tangent predictor and a Newton corrector. A failed
    step is retried with half the parameter increment, at most
    ``max_halvings`` times in a row. Steps always land on the quarter values
    of the parameter so the chain can be inspected there.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    first = newton_solve(pd, family, start, u_start, cfg)
    if not first.usable:
        raise SolverError("no converged solution at the start parameter", best=first.solution, partial=[])
    first.info["param"] = start
    chain = [first]
    s = start
    u = first.solution
    h = (end - start) / steps
    halvings = 0
    while (end - s) * np.sign(h) > 1e-15:
        step = h / 2**halvings
        if abs(step) > abs(end - s):
            step = end - s
        # never step over a quarter value of the parameter; they are reported checkpoints
        for q in (0.25, 0.5, 0.75):
            if (q - s) * np.sign(step) > 1e-15 and abs(step) > abs(q - s):
                step = q - s
        s_new = s + step
        try:
            J = family.jacobian(pd, u, s)
            guess = u
            # at a (near-)singular point the tangent is rounding noise, e.g. on a symmetric
            # branch through a bifurcation; the zero-order predictor keeps the branch
            if reciprocal_condition(J) >= PREDICTOR_RCOND:
                guess = u + step * np.linalg.solve(J, -family.d_param(pd, u, s))
                if not np.all(np.isfinite(guess)):
                    guess = u
            rep = newton_solve(pd, family, s_new, guess, cfg, max_iter=50)
            ok = rep.converged
        except (SolverError, np.linalg.LinAlgError):
            ok = False
        if not ok:
            halvings += 1
            if halvings > max_halvings:
                raise SolverError(f"continuation failed near {family.name}-parameter {s_new:.6g}",
                                  best=u, partial=chain)
            continue
        rep.info["param"] = s_new
        chain.append(rep)
        s, u = s_new, rep.solution
        halvings = max(0, halvings - 1)
    return chain


@dataclass
class ArclengthResult:
    """Outcome of following a solution curve of the joined homotopy.

    ``end`` is ``"top"`` or ``"bottom"`` (the curve reached the corresponding
    end of the parameter range) and ``solution`` is the zero there.
    ``landmarks`` lists ``(tau, u)`` at every crossing of a quarter-step value.
    """

    end: str
    solution: np.ndarray
    landmarks: list
    steps: int


class JoinedHomotopy:
    """``G_eps(., tau)`` for ``tau in [0, 1]`` followed by ``F(., tau - 1)`` for ``tau in [1, 2]``.

    The two pieces agree at ``tau = 1``; the parameter derivative jumps there,
    so trackers stop on ``tau = 1`` and restart with the one-sided derivative.
    """

    def __init__(self, pd: ProblemData, eps: float):
        self.pd = pd
        self.g = GFamily(eps)
        self.f = FFamily()

    def piece(self, tau, upward=True):
        if tau < 1.0 or (tau == 1.0 and not upward):
            return self.g, tau
        return self.f, tau - 1.0

    def residual(self, u, tau):
        fam, s = self.piece(tau)
        return fam.residual(self.pd, u, s)

    def jacobian(self, u, tau):
        fam, s = self.piece(tau)
        return fam.jacobian(self.pd, u, s)

    def d_tau(self, u, tau, upward=True):
        fam, s = self.piece(tau, upward)
        return fam.d_param(self.pd, u, s)

    def solve_at(self, tau, u0, cfg, max_iter=30):
        fam, s = self.piece(tau)
        rep = newton_solve(self.pd, fam, s, u0, cfg, max_iter=max_iter, balance=False)
        return rep.solution if rep.usable else None


def _augmented(J, ht, row):
    n = J.shape[0]
    m = np.empty((n + 1, n + 1))
    m[:n, :n] = J
    m[:n, n] = ht
    m[n] = row
    return m


def _unit_tangent(J, ht, prev=None, upward=True):
    """Null direction of ``[J | ht]``, oriented along ``prev`` (or by the sign of d tau)."""
    try:
        if prev is None:
            t = np.append(np.linalg.solve(J, -ht), 1.0)
            t /= np.linalg.norm(t)
            return t if upward else -t
        rhs = np.zeros(J.shape[0] + 1)
        rhs[-1] = 1.0
        t = np.linalg.solve(_augmented(J, ht, prev), rhs)
    except np.linalg.LinAlgError:
        raise SolverError("singular point on the solution curve (bifurcation)") from None
    return t / np.linalg.norm(t)


def arclength_track(pd: ProblemData, eps: float, u_start, tau_start: float, upward: bool,
                    cfg: SolverConfig | None = None, top: float = 2.0, max_steps: int = 4000,
                    h0: float = 0.05, h_max: float = 0.2, h_min: float = 1e-10) -> ArclengthResult:
    """Pseudo-arclength continuation of a zero of the joined homotopy.

    Starts from a zero at ``tau_start`` heading up or down in ``tau`` and
    runs until the curve reaches ``tau = 0`` or ``tau = top``. Folds are
    passed naturally because the curve is parametrised by arclength. Steps
    that would pass a quarter-step value of ``tau`` are shortened to land on
    it exactly (this is also how the kink at ``tau = 1`` is crossed). A step
    that flips the sign of the augmented Jacobian determinant has jumped to
    another curve and is retried with half the length.
    """
    cfg = cfg or SolverConfig()
    hom = JoinedHomotopy(pd, eps)
    n = pd.n
    tol = cfg.residual_tol
    marks = sorted({0.25 * k for k in range(9) if 0.25 * k <= top} | {top})
    u = vertex_function(pd.graph, u_start).copy()
    tau = float(tau_start)
    landmarks = []

    def next_mark(s, up):
        ahead = [L for L in marks if (L > s if up else L < s)]
        if not ahead:
            return None
        return min(ahead) if up else max(ahead)

    def tangent_at(v, s, prev, up):
        fam, par = hom.piece(s, up)
        J, ht = fam.jacobian(pd, v, par), fam.d_param(pd, v, par)
        t = _unit_tangent(J, ht, prev=prev, upward=up)
        return t, np.linalg.slogdet(_augmented(J, ht, t))[0]

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        t, orient = tangent_at(u, tau, None, upward)
        h = h0
        for step in range(1, max_steps + 1):
            if h < h_min:
                raise SolverError(f"arclength continuation stalled near tau={tau:.6g}", best=u)
            up = t[n] > 0.0
            L = next_mark(tau, up)
            if L is None:
                raise SolverError("solution curve left the parameter range", best=u)
            fam, _ = hom.piece(tau, up)
            shift = 0.0 if fam is hom.g else 1.0
            reach = (L - tau) / t[n]
            if h >= reach:
                # land on the mark and correct at fixed tau
                fam_L, par_L = hom.piece(L, not up)
                guess = u + reach * t[:n]
                rep = newton_solve(pd, fam_L, par_L, guess, cfg, max_iter=30, balance=False)
                if not rep.usable or _sup(rep.solution - guess) > 0.5 * max(reach, 1e-3):
                    h = 0.5 * min(h, reach)
                    continue
                un, taun = rep.solution, L
            else:
                pred = np.append(u, tau) + h * t
                y = pred.copy()
                ok = False
                last = None
                for _ in range(12):
                    par = float(y[n]) - shift
                    H = fam.residual(pd, y[:n], par)
                    cons = float(t @ (y - pred))
                    if not np.all(np.isfinite(H)):
                        break
                    if abs(cons) <= 1e-12 and (_sup(H) <= tol or _at_floor(pd.graph, y[:n], pd.p, _sup(H), tol)):
                        ok = True
                        break
                    m = _augmented(fam.jacobian(pd, y[:n], par), fam.d_param(pd, y[:n], par), t)
                    try:
                        dy = np.linalg.solve(m, -np.append(H, cons))
                    except np.linalg.LinAlgError:
                        break
                    step_size = _sup(dy)
                    if not np.all(np.isfinite(dy)) or step_size > 0.5 * max(h, 1e-3):
                        break
                    # a corrector that does not contract is converging onto some other curve
                    if last is not None and step_size > 0.5 * last and step_size > 1e-10:
                        break
                    last = step_size
                    y = y + dy
                taun = float(y[n])
                if not ok or (L - taun) * (L - tau) <= 0.0:
                    h *= 0.5
                    continue
                un = y[:n]
            kink = taun == 1.0 and 0.0 < top and top != 1.0
            try:
                # on the kink the tangent comes from the piece being entered, keeping the tau direction
                tn, on = tangent_at(un, taun, None if kink else t, up)
            except np.linalg.LinAlgError:
                h *= 0.5
                continue
            if on != orient or (not kink and float(t @ tn) < 0.9):
                h *= 0.5
                continue
            u, tau, t = un, taun, tn
            if tau == L:
                landmarks.append((L, u.copy()))
                if L == 0.0 or L == top:
                    return ArclengthResult("bottom" if L == 0.0 else "top", u, landmarks, step)
            h = min(h * 1.5, h_max)
    raise SolverError("arclength continuation exceeded its step budget", best=u)


# -------------------------------------------------------------- pipeline


def solve_small_eps(pd: ProblemData, eps: float, cfg: SolverConfig | None = None) -> SolveReport:
    """Constructive solve of ``Delta_p u = lam e^{2u} + eps f``, Newton-polished if needed."""
    cfg = cfg or SolverConfig()
    if pd.lam > 0:
        br = construct_bracket(pd, eps, cfg, tighten=True)
        rep = monotone_iterate(pd, eps, br, cfg)
        rep.info["bracket"] = br
    else:
        rep = constrained_minimize(pd, eps, cfg)
    if not rep.converged:
        polished = newton_solve(pd, GFamily(eps), 0.0, rep.solution, cfg)
        if polished.converged or (polished.usable and not rep.usable):
            polished.info.update(rep.info)
            polished.info["polished_from"] = rep.method
            polished.trace = rep.trace + [(len(rep.trace) + i, r, o) for i, r, o in polished.trace]
            rep = polished
    return _mass_balanced(pd, eps, rep, cfg)


def _mass_balanced(pd, eps, rep, cfg):
    """Apply the exact constant shift that zeroes the summed residual to an unconverged result.

    At the rounding floor the constant mode is the least determined one
    (its curvature is ``2 lam e^{2u}``), and a floor-sized residual can
    leave it off by far more than the residual itself.
    """
    if rep.converged:
        return rep
    s = GFamily(eps).balance_shift(pd, rep.solution, 0.0)
    if s is None or not np.isfinite(s) or s == 0.0:
        return rep
    u = rep.solution + s
    res = _sup(eq33_residual(pd, eps, u))
    converged = res <= cfg.residual_tol
    if not (converged or _at_floor(pd.graph, u, pd.p, res, cfg.residual_tol)):
        return rep
    info = dict(rep.info, at_floor=not converged, balance_shift=float(s))
    return replace(rep, solution=u, residual_sup=res, converged=converged, info=info)


@dataclass
class BranchPath:
    """The solution curve from the small-epsilon solution to ``tau = top``.

    ``landmarks`` holds ``(tau, u)`` pairs on the joined homotopy scale
    (``tau = t`` on the G piece, ``tau = 1 + sigma`` on the F piece).
    """

    solution: np.ndarray
    landmarks: list
    method: str
    chains: dict = field(default_factory=dict)
    natural_failure: str | None = None


def follow_main_branch(pd: ProblemData, eps: float, u_small, cfg: SolverConfig | None = None,
                       top: float = 2.0) -> BranchPath:
    """Carry the small-epsilon solution to ``tau = top`` on the joined homotopy.

    Natural-parameter continuation runs first (G in ``t``, then F in
    ``sigma``). If it stalls at a fold, pseudo-arclength continuation takes
    over from the last point it reached, with shorter steps on each retry.
    """
    cfg = cfg or SolverConfig()
    g_chain, f_chain = [], []
    try:
        g_chain = homotopy_track(pd, GFamily(eps), cfg.homotopy_steps, cfg, u_small,
                                 end=min(top, 1.0))
        if top > 1.0:
            f_chain = homotopy_track(pd, FFamily(), cfg.homotopy_steps, cfg, g_chain[-1].solution,
                                     end=top - 1.0)
        marks = [(r.info["param"], r.solution) for r in g_chain]
        marks += [(1.0 + r.info["param"], r.solution) for r in f_chain[1:]]
        end = f_chain[-1] if f_chain else g_chain[-1]
        return BranchPath(end.solution, marks, "homotopy", {"g_chain": g_chain, "f_chain": f_chain})
    except SolverError as exc:
        failure = str(exc)
        if not g_chain:
            g_chain = exc.partial or []
            offset = 0.0
        else:
            f_chain = exc.partial or []
            offset = 1.0
    known = [(r.info["param"], r.solution) for r in g_chain]
    if offset == 1.0:
        known += [(1.0 + r.info["param"], r.solution) for r in f_chain[1:]]
    tau0, u0 = known[-1] if known else (0.0, u_small)
    if offset == 1.0 and f_chain:
        tau0 = 1.0 + f_chain[-1].info["param"]
    last = None
    for h_max in (0.2, 0.05, 0.0125):
        try:
            path = arclength_track(pd, eps, u0, tau0, True, cfg, top=top, h_max=h_max)
        except SolverError as exc:
            last = exc
            continue
        if path.end == "top":
            marks = [m for m in known if m[0] < tau0 or m[0] == 0.0] + path.landmarks
            return BranchPath(path.solution, marks, "arclength", {}, failure)
        last = SolverError("solution curve returned to the small-epsilon end", best=path.solution)
    raise SolverError(str(last), best=last.best)


def solve_csh(pd: ProblemData, cfg: SolverConfig | None = None,
              bounds: AprioriBounds | None = None) -> SolveReport:
    """Solve ``Delta_p u = lam e^u (e^u - 1) + f`` by the degree-theoretic route.

    bounds -> small-eps solve -> G-continuation t: 0 -> 1 -> F-continuation
    sigma: 0 -> 1. If natural-parameter continuation hits a fold, the rest
    of the path is followed by pseudo-arclength continuation. Stage failures
    are re-raised with a stage tag.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    bounds = bounds or compute_bounds(pd)
    eps = cfg.epsilon if cfg.epsilon is not None else bounds.eps0 / 2.0

    try:
        small = solve_small_eps(pd, eps, cfg)
    except SolverError as exc:
        raise SolverError(str(exc), best=exc.best, stage="small_eps") from exc
    if not small.usable:
        raise SolverError("small-epsilon solve did not converge", best=small.solution, stage="small_eps")
    try:
        path = follow_main_branch(pd, eps, small.solution, cfg)
    except SolverError as exc:
        raise SolverError(str(exc), best=exc.best, stage="continuation") from exc
    final = newton_solve(pd, FFamily(), 1.0, path.solution, cfg)
    residual = _sup(csh_residual(pd, final.solution))

    trace = []
    phases = [small.trace]
    if path.method == "homotopy":
        phases += [r.trace for r in path.chains["g_chain"] + path.chains["f_chain"]]
    else:
        hom = JoinedHomotopy(pd, eps)
        phases.append([(0, _sup(hom.residual(u, s)), None) for s, u in path.landmarks])
    phases.append(final.trace)
    for phase in phases:
        for _, r, o in phase:
            trace.append((len(trace), r, o))
    info = {
        "eps": eps,
        "bounds": bounds,
        "small_eps": small,
        "landmarks": path.landmarks,
        "in_bounds": check_bound(pd, bounds, final.solution),
        **path.chains,
    }
    if path.natural_failure:
        info["natural_failure"] = path.natural_failure
    return SolveReport(final.solution, residual, len(trace) - 1, path.method,
                       residual <= cfg.residual_tol, trace, info)


def multistart_solutions(pd: ProblemData, family, param: float, box: tuple[float, float],
                         cfg: SolverConfig | None = None, count: int | None = None,
                         seeds=(), dedup_tol: float = 1e-6, max_iter: int = 200) -> list[np.ndarray]:
    """Distinct zeros of ``family(., param)`` from Newton runs started uniformly in ``box^n``.

    Extra starting points in ``seeds`` are tried first. Results are ordered by
    residual, then lexicographically, so the output is seed-deterministic.
    """
    cfg = cfg or SolverConfig()
    count = cfg.multistart_count if count is None else count
    rng = np.random.default_rng(cfg.seed)
    starts = [vertex_function(pd.graph, s) for s in seeds]
    lo, hi = box
    starts += [rng.uniform(lo, hi, pd.n) for _ in range(count)]
    found: list[tuple[float, np.ndarray]] = []
    for s in starts:
        try:
            rep = newton_solve(pd, family, param, s, cfg, max_iter=max_iter)
        except SolverError:
            continue
        if rep.converged:
            found.append((rep.residual_sup, rep.solution))
    found.sort(key=lambda t: (t[0], tuple(t[1])))
    distinct: list[np.ndarray] = []
    for _, u in found:
        if all(_sup(u - v) >= dedup_tol for v in distinct):
            distinct.append(u)
    distinct.sort(key=tuple)
    return distinct


def minimize_small_eps_energy(pd: ProblemData, eps: float, start, cfg: SolverConfig | None = None) -> SolveReport:
    """For ``lam > 0``: minimise the strictly convex energy whose critical points solve the small-eps equation.

    The energy is ``(1/p) int|grad u|^p + (lam/2) int e^{2u} + eps int f u``.
    """
    cfg = cfg or SolverConfig()
    if pd.lam <= 0:
        raise ValueError("the small-epsilon energy is convex only for lam > 0")
    g = pd.graph
    p = pd.p
    ef = eps * pd.f
    ei, ej = g._ei, g._ej

    def energy(u):
        with np.errstate(over="ignore"):
            return _kernels.gradient_energy(u, ei, ej, p) / p + 0.5 * pd.lam * float(np.sum(np.exp(2.0 * u))) + float(ef @ u)

    def gradient(u):
        with np.errstate(over="ignore"):
            return -_energy_grad_lap(g, u, p) + pd.lam * np.exp(2.0 * u) + ef

    def hessian(u):
        h = _kernels.neg_dlap(u, ei, ej, p, 0.0)
        with np.errstate(over="ignore"):
            h[np.diag_indices_from(h)] += 2.0 * pd.lam * np.exp(2.0 * u)
        return h

    u = vertex_function(g, start).copy()
    try:
        u, its = _minimize_convex(energy, gradient, hessian, u, cfg.residual_tol, cfg.max_outer_iters,
                                  cfg.line_search_shrink, what="energy minimisation",
                                  term_scale=_sup(ef) + pd.lam)
    except SolverError as exc:
        u, its = exc.best, cfg.max_outer_iters
    res = _sup(eq33_residual(pd, eps, u))
    return SolveReport(u, res, its, "convex_min", res <= cfg.residual_tol, [(its, res, energy(u))],
                       {"at_floor": _at_floor(g, u, p, res, cfg.residual_tol)})


def small_eps_multistart(pd: ProblemData, eps: float, cfg: SolverConfig | None = None,
                         count: int | None = None) -> list[SolveReport]:
    """Independent small-epsilon solves from random points of the a priori box.

    For ``lam > 0`` each start is fed to the convex energy minimisation, for
    ``lam < 0`` to the level-set minimisation (after projection onto the
    level set). Returns every run that ended converged or at the rounding
    floor; used to observe uniqueness of the small-epsilon solution.
    """
    cfg = cfg or SolverConfig()
    pd.require_strict()
    count = cfg.multistart_count if count is None else count
    box = small_eps_bounds(pd, eps)
    rng = np.random.default_rng(cfg.seed)
    # starts far out in the box descend slowly through the non-smooth region
    cfg = replace(cfg, max_outer_iters=max(cfg.max_outer_iters, 4000))
    out = []
    for _ in range(count):
        start = rng.uniform(box.lower, box.upper, pd.n)
        try:
            if pd.lam > 0:
                rep = minimize_small_eps_energy(pd, eps, start, cfg)
            else:
                rep = constrained_minimize(pd, eps, cfg, start=start)
        except SolverError:
            continue
        if not rep.converged:
            polished = newton_solve(pd, GFamily(eps), 0.0, rep.solution, cfg, max_iter=50)
            if polished.converged or (polished.usable and not rep.usable):
                rep = polished
        rep = _mass_balanced(pd, eps, rep, cfg)
        if rep.usable:
            out.append(rep)
    return out
