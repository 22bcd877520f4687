"""Operator models, their evaluation, and finite descriptions of their Jacobians.

Every operator exposes ``n``, ``__call__(x)`` and ``envelope()``.  The
envelope is an exact finite description of the set of Jacobians ``DT(x)``
(for almost every ``x``) on which every row-wise matrix inequality used by
the certificates can be decided.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .matnorm import as_matrix, matrix_from_json, matrix_to_json

VERTEX_LIST = "VertexList"
ENTRY_INTERVAL = "EntryInterval"
ROW_VERTICES = "RowVertices"


# -- activations --------------------------------------------------------------

def leaky_relu(x, alpha: float):
    """``max(alpha*x, x)``; works on scalars and arrays."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    out = np.maximum(alpha * np.asarray(x, dtype=float), x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SectorBounds:
    d1: float
    d2: float

    def __post_init__(self):
        if self.d1 > self.d2:
            raise ValueError(f"sector requires d1 <= d2, got ({self.d1}, {self.d2})")


@dataclass(frozen=True)
class LeakyReLU:
    """``max(alpha*x, x)``, or ``min(alpha*x, x)`` with ``mode="min"``.

    ``alpha`` in (0, 1] is the usual leaky ReLU.  Any ``alpha >= 0`` is accepted
    so asymmetric edge rules can be built; slopes are then ``{alpha, 1}``.
    """

    alpha: float
    mode: str = "max"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.mode not in ("max", "min"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        f = np.maximum if self.mode == "max" else np.minimum
        return f(self.alpha * x, x)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        # which branch is active for x > 0
        pos = max(self.alpha, 1.0) if self.mode == "max" else min(self.alpha, 1.0)
        neg = min(self.alpha, 1.0) if self.mode == "max" else max(self.alpha, 1.0)
        return np.where(x > 0, pos, neg)

    @property
    def sector(self) -> SectorBounds:
        return SectorBounds(min(self.alpha, 1.0), max(self.alpha, 1.0))

    def to_json(self):
        name = "lrelu" if self.mode == "max" else "lrelu_min"
        return {"name": name, "alpha": self.alpha}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear map through the knots ``(xs[k], ys[k])``.

    Outside the knot range the first/last segment is extended linearly.
    """

    xs: tuple
    ys: tuple

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ValueError("need at least two knots with matching x and y")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("knot abscissae must be strictly increasing")
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.ys) / np.diff(self.xs)

    def _segment(self, x):
        idx = np.searchsorted(self.xs, x, side="right") - 1
        return np.clip(idx, 0, len(self.xs) - 2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self._segment(x)
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        return ys[k] + self.slopes[k] * (x - xs[k])

    def slope(self, x):
        return self.slopes[self._segment(np.asarray(x, dtype=float))]

    @property
    def sector(self) -> SectorBounds:
        s = self.slopes
        return SectorBounds(float(s.min()), float(s.max()))

    def to_json(self):
        return {"name": "pwl", "x": list(self.xs), "y": list(self.ys)}


def linear(slope: float = 1.0) -> PiecewiseLinear:
    return PiecewiseLinear((0.0, 1.0), (0.0, float(slope)))


def activation_from_json(obj):
    name = obj["name"].lower()
    if name in ("lrelu", "leaky_relu"):
        return LeakyReLU(float(obj["alpha"]))
    if name == "lrelu_min":
        return LeakyReLU(float(obj["alpha"]), mode="min")
    if name in ("linear", "identity"):
        return linear(float(obj.get("slope", 1.0)))
    if name == "pwl":
        return PiecewiseLinear(tuple(obj["x"]), tuple(obj["y"]))
    raise ValueError(f"unknown activation {obj['name']!r}")


# -- Jacobian envelopes ------------------------------------------------------

@dataclass(frozen=True)
class JacobianEnvelope:
    """Finite description of a set of Jacobian matrices.

    ``VertexList``
        ``vertices`` has shape ``(K, n, n)``.  Conditions are row-wise, so the
        set is read with independent rows: row ``i`` of a Jacobian may be row
        ``i`` of any vertex.
    ``EntryInterval``
        ``lower <= J <= upper`` entrywise, all entries independent.
    ``RowVertices``
        ``vertices`` has shape ``(K, n, n)`` but only row ``i`` of each slice
        matters for row ``i``; rows with fewer candidates are padded by
        repetition.  Used when a row's entries are coupled (e.g. a row sum
        that is fixed).
    """

    kind: str
    vertices: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        if self.kind in (VERTEX_LIST, ROW_VERTICES):
            V = np.asarray(self.vertices, dtype=float)
            if V.ndim == 2:
                V = V[None]
            if V.ndim != 3 or V.shape[0] == 0 or V.shape[1] != V.shape[2]:
                raise ValueError("vertex list must be a non-empty stack of square matrices")
            object.__setattr__(self, "vertices", V)
        elif self.kind == ENTRY_INTERVAL:
            lo = as_matrix(self.lower, square=True)
            hi = as_matrix(self.upper, square=True)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("entry interval needs lower <= upper of equal shape")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        else:
            raise ValueError(f"unknown envelope kind {self.kind!r}")

    @classmethod
    def from_vertices(cls, *mats):
        return cls(VERTEX_LIST, vertices=np.stack([as_matrix(M, square=True) for M in mats]))

    @classmethod
    def from_interval(cls, lower, upper):
        return cls(ENTRY_INTERVAL, lower=lower, upper=upper)

    @classmethod
    def from_row_candidates(cls, rows):
        """``rows[i]`` is a ``(m_i, n)`` array of admissible values of row ``i``."""
        n = len(rows)
        m = max(len(r) for r in rows)
        V = np.empty((m, n, n))
        for i, r in enumerate(rows):
            r = np.asarray(r, dtype=float).reshape(-1, n)
            V[:, i, :] = r[np.arange(m) % len(r)]
        return cls(ROW_VERTICES, vertices=V)

    @property
    def n(self) -> int:
        return self.vertices.shape[1] if self.vertices is not None else self.lower.shape[0]

    @property
    def is_vertex_based(self) -> bool:
        return self.kind != ENTRY_INTERVAL

    def entry_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Entrywise lower/upper bounds over the set."""
        if self.is_vertex_based:
            return self.vertices.min(axis=0), self.vertices.max(axis=0)
        return self.lower, self.upper

    def affine(self, alpha: float, beta: float) -> "JacobianEnvelope":
        """Envelope of ``alpha*I + beta*J``."""
        I = np.eye(self.n)
        if self.is_vertex_based:
            return JacobianEnvelope(self.kind, vertices=alpha * I + beta * self.vertices)
        lo, hi = alpha * I + beta * self.lower, alpha * I + beta * self.upper
        if beta < 0:
            lo, hi = hi, lo
        return JacobianEnvelope(ENTRY_INTERVAL, lower=lo, upper=hi)

    def identity_minus(self) -> "JacobianEnvelope":
        """Envelope of ``I - J`` (Jacobians of ``Id - T``)."""
        return self.affine(1.0, -1.0)

    def averaged(self, theta: float) -> "JacobianEnvelope":
        """Envelope of the Krasnoselskij map ``(1-theta) I + theta J``."""
        return self.affine(1.0 - theta, theta)

    def contains(self, J, atol: float = 1e-7) -> bool:
        """Whether ``J`` lies in the row-wise hull described by the envelope.

        Exact for ``EntryInterval``; for vertex kinds the check is that every
        row of ``J`` lies between the entrywise extremes of its candidates,
        which is necessary for membership.
        """
        lo, hi = self.entry_bounds()
        J = np.asarray(J, dtype=float)
        return bool(np.all(J >= lo - atol) and np.all(J <= hi + atol))


def diag_lower(env: JacobianEnvelope) -> float:
    """``sup`` over the envelope of ``max_i (-J)_ii``."""
    lo, _ = env.entry_bounds()
    return float(np.max(-np.diag(lo)))


# -- operator models -----------------------------------------------------------

def _vec(x, n):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AffineOp:
    """``T(x) = A x + offset``."""

    A: np.ndarray
    offset: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, square=True)
        object.__setattr__(self, "A", A)
        off = np.zeros(A.shape[0]) if self.offset is None else self.offset
        object.__setattr__(self, "offset", _vec(off, A.shape[0]))

    @property
    def n(self):
        return self.A.shape[0]

    def __call__(self, x):
        return self.A @ _vec(x, self.n) + self.offset

    def jacobian(self, x=None):
        return self.A.copy()

    def envelope(self):
        return JacobianEnvelope.from_vertices(self.A)

    def fixed_point(self):
        return np.linalg.solve(np.eye(self.n) - self.A, self.offset)

    def residual_op(self) -> "AffineOp":
        """``F = Id - T`` as an affine operator."""
        return AffineOp(np.eye(self.n) - self.A, -self.offset)

    def to_json(self):
        return {"type": "affine", "A": matrix_to_json(self.A), "offset": self.offset.tolist()}


@dataclass(frozen=True)
class DiagNonlinAffineOp:
    """``T(x) = Phi(A x + offset)`` with the same scalar activation on every coordinate."""

    A: np.ndarray
    offset: np.ndarray
    activation: object

    def __post_init__(self):
        A = as_matrix(self.A, square=True)
        object.__setattr__(self, "A", A)
        off = np.zeros(A.shape[0]) if self.offset is None else self.offset
        object.__setattr__(self, "offset", _vec(off, A.shape[0]))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def sector(self) -> SectorBounds:
        return self.activation.sector

    def __call__(self, x):
        return self.activation(self.A @ _vec(x, self.n) + self.offset)

    def jacobian(self, x):
        z = self.A @ _vec(x, self.n) + self.offset
        return self.activation.slope(z)[:, None] * self.A

    def envelope(self):
        s = self.sector
        # each row is d * A[i] with d in [d1, d2]; row conditions are convex in d
        return JacobianEnvelope.from_vertices(s.d1 * self.A, s.d2 * self.A)

    def to_json(self):
        return {
            "type": "diag_nonlin_affine",
            "A": matrix_to_json(self.A),
            "offset": self.offset.tolist(),
            "activation": self.activation.to_json(),
        }


def evaluate(op, x) -> np.ndarray:
    return np.asarray(op(x), dtype=float)


def jacobian_envelope(op) -> JacobianEnvelope:
    try:
        return op.envelope()
    except AttributeError:
        raise TypeError(f"unsupported operator model {type(op).__name__}") from None


def operator_from_json(obj):
    """Build an operator from its JSON description."""
    kind = obj["type"]
    if kind == "affine":
        A = matrix_from_json(obj["A"])
        return AffineOp(A, obj.get("offset"))
    if kind == "diag_nonlin_affine":
        A = matrix_from_json(obj["A"])
        return DiagNonlinAffineOp(A, obj.get("offset"), activation_from_json(obj["activation"]))
    if kind == "mas":
        from .consensus import model_from_json, build_mas_operator

        return build_mas_operator(model_from_json(obj))
    raise ValueError(f"unknown operator type {kind!r}")


def sample_sector(activation, rng, n_samples: int = 1000, spread: float = 10.0) -> bool:
    """Spot-check that difference quotients of ``activation`` stay in its sector."""
    s = activation.sector
    x = rng.uniform(-spread, spread, n_samples)
    y = rng.uniform(-spread, spread, n_samples)
    keep = np.abs(x - y) > 1e-9
    q = (activation(x[keep]) - activation(y[keep])) / (x[keep] - y[keep])
    return bool(np.all(q >= s.d1 - 1e-9) and np.all(q <= s.d2 + 1e-9))


def row_box_vertices(base, coeffs, lows, highs):
    """All rows ``base + sum_k s_k * coeffs[k]`` with ``s_k`` at a box corner."""
    base = np.asarray(base, dtype=float)
    if len(coeffs) == 0:
        return base[None]
    out = []
    for corner in itertools.product(*zip(lows, highs)):
        out.append(base + np.tensordot(np.asarray(corner), np.asarray(coeffs), axes=1))
    return np.unique(np.asarray(out), axis=0)
