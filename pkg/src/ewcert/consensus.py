"""Nonlinear consensus on digraphs as a Krasnoselskij iteration.

Agent ``i`` updates ``x_i <- x_i - theta * sum_j a_ij f_ij(x_i - x_j)`` where
``a_ij = 1`` means agent ``i`` listens to agent ``j``.  The update is the
Krasnoselskij iteration on ``T = Id - g o f o L`` with
``T(x)_i = x_i - sum_j a_ij f_ij(x_i - x_j)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .iterate import IterationConfig, IterationTrace, _run
from .operators import (
    ENTRY_INTERVAL,
    JacobianEnvelope,
    LeakyReLU,
    activation_from_json,
    row_box_vertices,
)

GAP_TOL = 1e-8
# rows with more neighbours than this fall back to an entrywise interval
MAX_ROW_CORNERS = 4096


@dataclass(frozen=True)
class Digraph:
    adjacency: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError("adjacency must be a non-empty square matrix")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        object.__setattr__(self, "adjacency", A.astype(int))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    @property
    def max_degree(self) -> int:
        return int(self.adjacency.sum(axis=1).max())

    # common graphs
    @classmethod
    def from_edges(cls, n, edges):
        A = np.zeros((n, n), dtype=int)
        for i, j in edges:
            A[i, j] = 1
        return cls(A)

    @classmethod
    def ring(cls, n):
        """Undirected ring: every agent listens to both neighbours."""
        return cls.from_edges(n, [(i, (i + d) % n) for i in range(n) for d in (1, -1)])

    @classmethod
    def directed_cycle(cls, n):
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def star(cls, n):
        """Hub 0 listens to the ``n - 1`` leaves and every leaf listens to the hub."""
        return cls.from_edges(n, [(0, j) for j in range(1, n)] + [(j, 0) for j in range(1, n)])

    @classmethod
    def complete(cls, n):
        return cls(np.ones((n, n), dtype=int) - np.eye(n, dtype=int))

    @classmethod
    def random_strongly_connected(cls, n, rng, p=0.2):
        """A random Hamiltonian cycle plus independent extra edges with probability ``p``."""
        perm = rng.permutation(n)
        A = (rng.random((n, n)) < p).astype(int)
        np.fill_diagonal(A, 0)
        for k in range(n):
            A[perm[k], perm[(k + 1) % n]] = 1
        return cls(A)

    @classmethod
    def disjoint_cycles(cls, sizes):
        edges, start = [], 0
        for m in sizes:
            edges += [(start + k, start + (k + 1) % m) for k in range(m)]
            start += m
        return cls.from_edges(start, edges)


def reachability(graph: Digraph) -> np.ndarray:
    """``R[i, k]`` is true iff ``k`` can be reached from ``i`` following edges ``i -> j`` (``a_ij = 1``)."""
    R = (graph.adjacency + np.eye(graph.n, dtype=int)) > 0
    while True:
        R2 = (R.astype(int) @ R.astype(int)) > 0
        if np.array_equal(R2, R):
            return R
        R = R2


def globally_reachable_nodes(graph: Digraph) -> list[int]:
    R = reachability(graph)
    return [int(k) for k in np.flatnonzero(R.all(axis=0))]


def has_globally_reachable_node(graph: Digraph) -> bool:
    return bool(globally_reachable_nodes(graph))


def consensus_step_bound(graph: Digraph, L: float) -> float:
    """Upper end of the admissible step interval ``(0, 1/(L max_i |N_i|))``."""
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    if graph.max_degree == 0:
        raise ValueError("graph has no edges")
    return 1.0 / (L * graph.max_degree)


@dataclass(frozen=True)
class EdgeRule:
    """Interaction function ``f_ij`` with its range of a.e. slopes."""

    fn: object

    def __post_init__(self):
        lo, hi = self.slope_range
        if lo < 0:
            raise ValueError("edge rules must be nondecreasing (slopes >= 0)")
        if isinstance(self.fn, LeakyReLU) and self.fn.alpha == 0:
            raise ValueError(
                "alpha = 0 gives unilateral interactions, which need bicolored graphs; not supported"
            )

    @classmethod
    def lrelu(cls, alpha, mode="max"):
        return cls(LeakyReLU(float(alpha), mode))

    @property
    def slope_range(self) -> tuple[float, float]:
        s = self.fn.sector
        return s.d1, s.d2

    @property
    def lipschitz(self) -> float:
        return max(abs(v) for v in self.slope_range)

    def __call__(self, x):
        return self.fn(x)

    def slope(self, x):
        return self.fn.slope(x)

    def fixes_zero(self) -> bool:
        """``f(0) = 0`` and strictly positive slopes on both sides of 0."""
        eps = 1e-9
        return bool(
            abs(float(self.fn(0.0))) <= 1e-12
            and float(self.fn.slope(-eps)) > 0
            and float(self.fn.slope(eps)) > 0
        )

    def to_json(self):
        return self.fn.to_json()


@dataclass(frozen=True)
class MasModel:
    graph: Digraph
    rules: dict
    theta: float

    @property
    def lipschitz(self) -> float:
        return max(r.lipschitz for r in self.rules.values())

    @property
    def step_bound(self) -> float:
        return consensus_step_bound(self.graph, self.lipschitz)


def uniform_rules(graph: Digraph, rule: EdgeRule) -> dict:
    return {e: rule for e in graph.edges}


def random_lrelu_rules(graph: Digraph, rng, alpha_range=(0.1, 1.0), mix_modes=True) -> dict:
    """Independent ``max``/``min`` leaky-ReLU rules with ``alpha`` uniform in ``alpha_range``."""
    rules = {}
    for e in graph.edges:
        alpha = rng.uniform(*alpha_range)
        mode = "min" if (mix_modes and rng.random() < 0.5) else "max"
        rules[e] = EdgeRule.lrelu(alpha, mode)
    return rules


class NonlinearLaplacianOp:
    """``T(x)_i = x_i - sum_j a_ij f_ij(x_i - x_j)``."""

    def __init__(self, model: MasModel):
        self.model = model
        g = model.graph
        self.n = g.n
        edges = g.edges
        self._src = np.array([i for i, _ in edges], dtype=int)
        self._dst = np.array([j for _, j in edges], dtype=int)
        rules = [model.rules[e] for e in edges]
        lrelu = [isinstance(r.fn, LeakyReLU) for r in rules]
        self._fast = all(lrelu)
        if self._fast:
            self._alpha = np.array([r.fn.alpha for r in rules])
            self._is_max = np.array([r.fn.mode == "max" for r in rules])
        self._rules = rules

    def _edge_values(self, d):
        if self._fast:
            ad = self._alpha * d
            return np.where(self._is_max, np.maximum(ad, d), np.minimum(ad, d))
        return np.array([float(r(v)) for r, v in zip(self._rules, d)])

    def _edge_slopes(self, d):
        return np.array([float(r.slope(v)) for r, v in zip(self._rules, d)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}")
        d = x[self._src] - x[self._dst]
        flow = np.bincount(self._src, weights=self._edge_values(d), minlength=self.n)
        return x - flow

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        s = self._edge_slopes(x[self._src] - x[self._dst])
        J = np.eye(self.n)
        np.add.at(J, (self._src, self._src), -s)
        np.add.at(J, (self._src, self._dst), s)
        return J

    def envelope(self) -> JacobianEnvelope:
        """Row ``i`` is ``e_i + sum_j s_ij (e_j - e_i)`` with ``s_ij`` in its slope range.

        Row conditions are convex in the slopes, so the box corners are exact.
        Rows with too many neighbours use the entrywise interval instead.
        """
        n = self.n
        I = np.eye(n)
        rows, too_big = [], False
        for i in range(n):
            nb = self.model.graph.neighbors(i)
            if 2 ** len(nb) > MAX_ROW_CORNERS:
                too_big = True
                break
            ranges = [self.model.rules[(i, j)].slope_range for j in nb]
            coeffs = [I[j] - I[i] for j in nb]
            rows.append(row_box_vertices(I[i], coeffs, [r[0] for r in ranges], [r[1] for r in ranges]))
        if not too_big:
            return JacobianEnvelope.from_row_candidates(rows)
        lo, hi = I.copy(), I.copy()
        for (i, j), rule in self.model.rules.items():
            a, b = rule.slope_range
            lo[i, j] += a
            hi[i, j] += b
            lo[i, i] -= b
            hi[i, i] -= a
        return JacobianEnvelope(ENTRY_INTERVAL, lower=lo, upper=hi)


def build_mas_operator(model: MasModel) -> NonlinearLaplacianOp:
    edges = set(model.graph.edges)
    missing = edges - set(model.rules)
    if missing:
        raise ValueError(f"no interaction rule for edges {sorted(missing)}")
    extra = set(model.rules) - edges
    if extra:
        raise ValueError(f"rules given for absent edges {sorted(extra)}")
    return NonlinearLaplacianOp(model)


def consensus_gap(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.max() - x.min())


def simulate_consensus(model: MasModel, x0, cfg: IterationConfig | None = None,
                       gap_tol: float = GAP_TOL) -> tuple[IterationTrace, float | None]:
    """Run the agent dynamics until consensus (gap <= ``gap_tol``) or a stationary state.

    ``cfg.theta`` is the step; when ``cfg`` is omitted the model's ``theta``
    is used with 10^5 steps.
    """
    if cfg is None:
        cfg = IterationConfig(theta=model.theta, max_iters=100_000, stop_tol=1e-13)
    op = build_mas_operator(model)
    th = cfg.theta
    trace = _run(lambda x: (1 - th) * x + th * op(x), cfg, x0,
                 until=lambda x: consensus_gap(x) <= gap_tol)
    final = trace.final
    value = float(np.mean(final)) if consensus_gap(final) <= gap_tol else None
    return trace, value


def hypothesis_report(model: MasModel) -> dict:
    """Which sufficient conditions for guaranteed consensus hold."""
    bound = model.step_bound
    return {
        "nondecreasing_rules": all(r.slope_range[0] >= 0 for r in model.rules.values()),
        "rules_fix_zero": all(r.fixes_zero() for r in model.rules.values()),
        "globally_reachable_node": has_globally_reachable_node(model.graph),
        "step_bound": bound,
        "theta_within_bound": 0 < model.theta < bound,
    }


# -- scenario files ----------------------------------------------------------

def model_from_json(obj) -> MasModel:
    """Scenario / operator JSON: ``adjacency``, ``rules`` and ``theta``.

    ``rules`` is either one rule spec applied to every edge, or
    ``{"default": spec, "edges": [{"i": 0, "j": 1, "rule": spec}, ...]}``.
    """
    graph = Digraph(np.asarray(obj["adjacency"], dtype=int))
    spec = obj.get("rules", {"name": "lrelu", "alpha": 1.0})
    rules = {}
    if "edges" in spec or "default" in spec:
        default = spec.get("default")
        if default is not None:
            rules = {e: EdgeRule(activation_from_json(default)) for e in graph.edges}
        for item in spec.get("edges", []):
            rules[(int(item["i"]), int(item["j"]))] = EdgeRule(activation_from_json(item["rule"]))
    else:
        rules = uniform_rules(graph, EdgeRule(activation_from_json(spec)))
    theta = float(obj.get("theta", 0.0)) or 0.9 * consensus_step_bound(
        graph, max(r.lipschitz for r in rules.values())
    )
    return MasModel(graph, rules, theta)


def model_to_json(model: MasModel, **extra) -> dict:
    return {
        "type": "mas",
        "adjacency": model.graph.adjacency.tolist(),
        "rules": {
            "edges": [{"i": i, "j": j, "rule": r.to_json()} for (i, j), r in sorted(model.rules.items())]
        },
        "theta": model.theta,
        **extra,
    }


def load_scenario(path):
    obj = json.loads(Path(path).read_text())
    return model_from_json(obj), obj
