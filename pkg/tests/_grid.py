"""The acceptance grid: seven small graphs, four couplings, three exponents.

``f = -sgn(lam) * (0.5 + jitter)`` with a per-vertex jitter uniform in
``[-0.1, 0.1]``, seeded per case so every run sees the same data.
"""

from dataclasses import dataclass

import numpy as np

from graph_csh import ProblemData, complete_graph, cycle_graph, path_graph, random_connected_graph

GRAPHS = {
    "K2": complete_graph(2),
    "P3": path_graph(3),
    "K3": complete_graph(3),
    "C4": cycle_graph(4),
    "R5": random_connected_graph(5, 1),
    "R8a": random_connected_graph(8, 2),
    "R8b": random_connected_graph(8, 3),
}
LAMBDAS = (1.0, -1.0, 2.0, -2.0)
EXPONENTS = (1.5, 2.0, 3.0)


@dataclass(frozen=True)
class Case:
    graph_name: str
    lam: float
    p: float
    pd: ProblemData

    @property
    def label(self):
        return f"{self.graph_name} lam={self.lam:+g} p={self.p:g}"


def case_seed(graph_index, lam, p):
    return graph_index * 100 + (int(lam) + 2) * 10 + int(2 * p)


def grid_cases():
    cases = []
    for gi, (name, g) in enumerate(GRAPHS.items()):
        for lam in LAMBDAS:
            for p in EXPONENTS:
                rng = np.random.default_rng(case_seed(gi, lam, p))
                f = -np.sign(lam) * (0.5 + rng.uniform(-0.1, 0.1, g.vertex_count))
                cases.append(Case(name, lam, p, ProblemData.create(g, lam, f, p)))
    return cases
