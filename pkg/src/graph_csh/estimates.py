"""Explicit a priori constants for solutions of the Chern-Simons Higgs family.

For ``Delta_p u = lam e^u (e^u - sigma) + f`` with ``lam * sum(f) < 0`` every
solution, uniformly in ``sigma in [0, 1]``, lies in the box ``[lower, upper]``
computed by :func:`compute_bounds`. The same record carries the constants of
the small-epsilon uniqueness argument (``eta``, ``C3``, ``eps0``) and the
degree-ball radius ``R0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .graph import Exponent, Graph, diameter_path_length, poincare_constant, vertex_function


class HypothesisError(ValueError):
    """The sign condition ``lam * int f < 0`` (or a solver-specific one) fails."""


@dataclass(frozen=True, eq=False)
class ProblemData:
    graph: Graph
    lam: float
    f: np.ndarray = field(repr=False)
    exponent: Exponent
    relaxed: bool = False

    @classmethod
    def create(cls, graph: Graph, lam: float, f, p) -> "ProblemData":
        pd = cls._build(graph, lam, f, p, relaxed=False)
        if not pd.sign_condition():
            raise HypothesisError("hypothesis lambda * int f < 0 fails")
        return pd

    @classmethod
    def relaxed_data(cls, graph: Graph, lam: float, f, p) -> "ProblemData":
        """Skip the sign check; for exploration only, solvers refuse these."""
        return cls._build(graph, lam, f, p, relaxed=True)

    @classmethod
    def _build(cls, graph, lam, f, p, relaxed):
        lam = float(lam)
        if lam == 0.0 or not math.isfinite(lam):
            raise ValueError("lambda must be finite and nonzero")
        e = p if isinstance(p, Exponent) else Exponent(p)
        f = vertex_function(graph, f)
        f.setflags(write=False)
        return cls(graph, lam, f, e, relaxed)

    @property
    def p(self) -> float:
        return self.exponent.p

    @property
    def n(self) -> int:
        return self.graph.vertex_count

    @property
    def f_mean(self) -> float:
        return float(np.sum(self.f)) / self.n

    def sign_condition(self) -> bool:
        return self.lam * float(np.sum(self.f)) < 0.0

    def require_sign_condition(self) -> None:
        if not self.sign_condition():
            raise HypothesisError("hypothesis lambda * int f < 0 fails")

    def require_strict(self) -> None:
        if self.relaxed:
            raise HypothesisError("solvers refuse relaxed problem data")
        self.require_sign_condition()

    def with_source(self, f) -> "ProblemData":
        f = vertex_function(self.graph, f)
        f.setflags(write=False)
        return replace(self, f=f)


@dataclass(frozen=True)
class AprioriBounds:
    a: float
    upper: float
    b: float
    c0: float
    zeta: float
    A: float
    lower: float
    eta: float
    C3: float
    eps0: float
    R0: float
    poincare_c: float
    energy_c: float
    path_l: int

    def to_dict(self) -> dict:
        return asdict(self)


def compute_bounds(pd: ProblemData, poincare_c: float | None = None) -> AprioriBounds:
    pd.require_sign_condition()
    n = pd.n
    p = pd.p
    q = pd.exponent.q
    lam = pd.lam
    fbar = pd.f_mean

    a = n * (1.0 + abs(fbar) / abs(lam))
    root = 1.0 + math.sqrt(1.0 + 4.0 * a)
    upper = math.log(root / 2.0)
    b = abs(lam) * (root**2 / 4.0 + root / 2.0) + float(np.max(np.abs(pd.f)))

    if poincare_c is None:
        poincare_c = poincare_constant(pd.graph, p)
    # int|grad u|^p <= C^{q/p} int|Delta_p u|^q follows from Poincare + Hoelder
    energy_c = poincare_c ** (q / p)
    l = diameter_path_length(pd.graph)
    chain = (2.0 * (l - 1) ** (p - 1.0) * n * energy_c) ** (1.0 / p)
    c0 = b ** (q / p) * chain

    zeta = -fbar * n / lam
    A = -math.log(min(1.0, zeta / (4.0 * n)))
    lower = -A - c0

    eta = -fbar * n / lam
    C3 = 4.0 * eta * abs(lam) * chain
    eps0 = 1.0 / (2.0 * C3)
    R0 = max(abs(upper), abs(lower)) + 1.0
    return AprioriBounds(
        a=a, upper=upper, b=b, c0=c0, zeta=zeta, A=A, lower=lower, eta=eta,
        C3=C3, eps0=eps0, R0=R0, poincare_c=poincare_c, energy_c=energy_c, path_l=l,
    )


def small_eps_bounds(pd: ProblemData, eps: float, poincare_c: float | None = None) -> AprioriBounds:
    """Bounds for ``Delta_p u = lam e^{2u} + eps f``: the sigma=0 member with source ``eps f``."""
    return compute_bounds(pd.with_source(eps * pd.f), poincare_c)


def check_bound(pd: ProblemData, bounds: AprioriBounds, u) -> bool:
    u = vertex_function(pd.graph, u)
    return bool(np.all(u >= bounds.lower) and np.all(u <= bounds.upper))
