"""Connected finite graphs, the discrete p-Laplacian and the integrals on V.

Vertex functions are plain ``float64`` numpy arrays of length ``n``; edge
weights and the vertex measure are both identically one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels

POINCARE_SAFETY = 1.25


class GraphError(ValueError):
    """Raised for malformed or disconnected graphs."""


class DegenerateWeightError(ValueError):
    """Raised when a weighted mean is taken against a weight with zero integral."""


class PoincareEstimateError(RuntimeError):
    def __init__(self, message: str, best: float):
        super().__init__(f"{message} (best ratio found: {best!r})")
        self.best = best


@dataclass(frozen=True)
class Graph:
    """Connected, simple, undirected graph on vertices ``0..n-1``."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        n = int(n)
        if n < 2:
            raise GraphError("a graph needs at least 2 vertices")
        seen = set()
        for e in edges:
            if len(e) != 2:
                raise GraphError(f"edge {e!r} must have two endpoints")
            i, j = int(e[0]), int(e[1])
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add(key)
        canon = tuple(sorted(seen))
        adj: list[list[int]] = [[] for _ in range(n)]
        for i, j in canon:
            adj[i].append(j)
            adj[j].append(i)
        g = cls(n, canon, tuple(tuple(sorted(a)) for a in adj))
        if not g.is_connected():
            raise GraphError("graph not connected")
        return g

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def _ei(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=np.int64)

    @cached_property
    def _ej(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=np.int64)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    def bfs_distances(self, source: int) -> np.ndarray:
        dist = np.full(self.vertex_count, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            x = queue.popleft()
            for y in self.adjacency[x]:
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.bfs_distances(0) >= 0))

    def laplacian_matrix(self) -> np.ndarray:
        """Degree minus adjacency, i.e. the matrix of ``-Delta`` at p=2."""
        n = self.vertex_count
        m = np.diag(self.degrees.astype(float))
        for i, j in self.edges:
            m[i, j] = m[j, i] = -1.0
        return m


@dataclass(frozen=True)
class Exponent:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not np.isfinite(p) or p <= 1.0:
            raise ValueError(f"exponent p must be > 1, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


def _p(e) -> float:
    return e.p if isinstance(e, Exponent) else Exponent(e).p


def vertex_function(g: Graph, u) -> np.ndarray:
    """Validate ``u`` as a function on the vertices of ``g``."""
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(g.vertex_count, float(arr))
    if arr.shape != (g.vertex_count,):
        raise ValueError(
            f"vertex function has shape {arr.shape}, graph has {g.vertex_count} vertices"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("vertex function has non-finite entries")
    return np.ascontiguousarray(arr)


# ------------------------------------------------------------------ operators


def p_laplacian(g: Graph, u, e) -> np.ndarray:
    u = vertex_function(g, u)
    p = _p(e)
    tau = _kernels.equal_value_threshold(u)
    return _kernels.p_laplacian(u, g._ei, g._ej, p, tau)


def gradient_p_energy(g: Graph, u, e) -> float:
    """``int |grad u|^p`` = half the double sum over ordered neighbour pairs."""
    u = vertex_function(g, u)
    return float(_kernels.gradient_energy(u, g._ei, g._ej, _p(e)))


def integral(g: Graph, u) -> float:
    return float(np.sum(vertex_function(g, u)))


def mean(g: Graph, u) -> float:
    return integral(g, u) / g.vertex_count


def f_weighted_mean(g: Graph, u, f) -> float:
    u = vertex_function(g, u)
    f = vertex_function(g, f)
    total = float(np.sum(f))
    if total == 0.0:
        raise DegenerateWeightError("degenerate weight: integral of f is zero")
    return float(np.dot(f, u)) / total


def integration_by_parts_check(g: Graph, u, v, e) -> float:
    """Residual of ``int v Delta_p u + 1/2 sum sum |du|^{p-2} du dv`` (zero in exact arithmetic)."""
    u = vertex_function(g, u)
    v = vertex_function(g, v)
    p = _p(e)
    lap = p_laplacian(g, u, p)
    tau = _kernels.equal_value_threshold(u)
    du = u[g._ej] - u[g._ei]
    dv = v[g._ej] - v[g._ei]
    ad = np.abs(du)
    keep = ad > tau if p < 2.0 else np.ones_like(ad, dtype=bool)
    flux = np.zeros_like(du)
    flux[keep] = ad[keep] ** (p - 2.0) * du[keep]
    # each undirected edge appears twice in the ordered double sum
    return float(np.dot(v, lap) + np.sum(flux * dv))


def diameter_path_length(g: Graph) -> int:
    """Number of vertices on a longest shortest path (diameter + 1)."""
    diam = max(int(g.bfs_distances(s).max()) for s in range(g.vertex_count))
    return diam + 1


# ----------------------------------------------------------------- Poincare


def _constraint_basis(n: int, direction: np.ndarray) -> np.ndarray:
    """Orthonormal basis (n x n-1) of the hyperplane orthogonal to ``direction``."""
    d = direction / np.linalg.norm(direction)
    q, _ = np.linalg.qr(np.column_stack([d, np.eye(n)[:, : n - 1]]))
    basis = q[:, 1:n]
    # re-orthogonalise against d for safety
    basis -= np.outer(d, d @ basis)
    basis, _ = np.linalg.qr(basis)
    return basis


def _neg_log_ratio(z, basis, ei, ej, p):
    u = basis @ z
    au = np.abs(u)
    num = float(np.sum(au**p))
    den = float(_kernels.gradient_energy(u, ei, ej, p))
    if num <= 0.0 or den <= 0.0:
        return np.inf, np.zeros_like(z)
    gnum = p * au ** (p - 1.0) * np.sign(u)
    # d/du sum_edges |du|^p = -p Delta_p u (no exclusion needed: zero flux at du=0)
    gden = -p * _kernels.p_laplacian(u, ei, ej, p, 0.0)
    grad_u = -(gnum / num - gden / den)
    return -(np.log(num) - np.log(den)), basis.T @ grad_u


def poincare_ratio(g: Graph, u, e) -> float:
    u = vertex_function(g, u)
    p = _p(e)
    return float(np.sum(np.abs(u) ** p)) / gradient_p_energy(g, u, p)


@lru_cache(maxsize=256)
def _poincare_cached(g: Graph, p: float, weight: tuple | None, starts: int, seed: int) -> float:
    n = g.vertex_count
    direction = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
    basis = _constraint_basis(n, direction)
    rng = np.random.default_rng(seed)
    best = -np.inf
    converged = 0
    for k in range(starts):
        if k == 0:
            # low-frequency start: the p=2 Fiedler-like vector of the constraint space
            lap = basis.T @ g.laplacian_matrix() @ basis
            _, vecs = np.linalg.eigh(lap)
            z0 = vecs[:, 0]
        else:
            z0 = rng.standard_normal(n - 1)
        res = minimize(
            _neg_log_ratio, z0, args=(basis, g._ei, g._ej, p), jac=True,
            method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-14},
        )
        if np.isfinite(res.fun):
            converged += int(res.success)
            best = max(best, float(np.exp(-res.fun)))
    if converged == 0:
        raise PoincareEstimateError("Poincare constant estimation did not converge", best)
    return best


def poincare_constant(g: Graph, e, f=None, *, starts: int = 24, seed: int = 0,
                      safety: float = POINCARE_SAFETY) -> float:
    """Upper estimate of the best constant in ``int |u|^p <= C int |grad u|^p``.

    With ``f=None`` the constraint is ``mean(u) = 0``; otherwise it is the
    f-weighted mean ``sum f u / sum f = 0``. The largest ratio found by
    multistart ascent over the constraint hyperplane is inflated by ``safety``.
    """
    p = _p(e)
    weight = None
    if f is not None:
        f = vertex_function(g, f)
        if float(np.sum(f)) == 0.0:
            raise DegenerateWeightError("degenerate weight: integral of f is zero")
        weight = tuple(float(x) for x in f)
    return safety * _poincare_cached(g, p, weight, starts, seed)


# ------------------------------------------------------------- constructors


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def random_connected_graph(n: int, seed: int, extra_edge_prob: float = 0.3) -> Graph:
    """Random spanning tree plus independent extra edges; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return Graph.from_edges(n, sorted(edges))
