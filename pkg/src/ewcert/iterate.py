"""Krasnoselskij iteration and forward-step zero finding with full traces."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matnorm import as_weight

DIVERGENCE_LIMIT = 1e12
RATE_SLACK = 1e-9


@dataclass(frozen=True)
class IterationConfig:
    theta: float
    max_iters: int = 10_000
    stop_tol: float = 1e-10
    weight: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class IterationTrace:
    points: list = field(default_factory=list)
    step_residuals: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    @property
    def iterations(self) -> int:
        """Index of the accepted iterate (the step leaving it was below tolerance)."""
        n = len(self.step_residuals)
        return n - 1 if self.converged else n

    @property
    def empirical_rate(self) -> float:
        """Geometric mean of successive residual ratios over the tail half."""
        r = np.asarray(self.step_residuals, dtype=float)
        r = r[len(r) // 2:]
        r = r[r > 0]
        if len(r) < 2:
            return math.nan
        return float((r[-1] / r[0]) ** (1.0 / (len(r) - 1)))

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "diverged": self.diverged,
            "iterations": self.iterations,
            "final_residual": self.step_residuals[-1] if self.step_residuals else 0.0,
            "empirical_rate": self.empirical_rate,
            "final_point": np.asarray(self.final).tolist(),
        }

    def write_csv(self, path) -> None:
        """``k, x_1..x_n, residual``; the residual of row ``k`` is ``||x(k+1) - x(k)||``."""
        path = Path(path)
        n = len(self.points[0])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k"] + [f"x_{i + 1}" for i in range(n)] + ["residual"])
            for k, x in enumerate(self.points):
                res = self.step_residuals[k] if k < len(self.step_residuals) else ""
                w.writerow([k] + [repr(float(v)) for v in x] + [res])

    def write_summary(self, path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.summary(), **extra}, indent=2))


def _run(step, cfg: IterationConfig, x0, until=None) -> IterationTrace:
    x = np.array(x0, dtype=float)
    w = np.ones_like(x) if cfg.weight is None else as_weight(cfg.weight, len(x))
    trace = IterationTrace(points=[x.copy()])
    for _ in range(cfg.max_iters):
        x_new = step(x)
        r = float(np.max(np.abs(x_new - x) / w))
        trace.points.append(x_new)
        trace.step_residuals.append(r)
        x = x_new
        if not math.isfinite(r) or r > DIVERGENCE_LIMIT:
            trace.diverged = True
            break
        if r <= cfg.stop_tol:
            trace.converged = True
            break
        if until is not None and until(x):
            break
    return trace


def krasnoselskij(op, cfg: IterationConfig, x0) -> IterationTrace:
    """Iterate ``x <- (1 - theta) x + theta T(x)``."""
    th = cfg.theta
    return _run(lambda x: (1 - th) * x + th * np.asarray(op(x)), cfg, x0)


def forward_step(opF, cfg: IterationConfig, x0) -> IterationTrace:
    """Iterate ``x <- x - theta F(x)``, looking for a zero of ``F``."""
    th = cfg.theta
    return _run(lambda x: x - th * np.asarray(opF(x)), cfg, x0)


def verify_contraction_rate(trace: IterationTrace, x_star, rate_bound: float, weight=None,
                            slack: float = RATE_SLACK) -> bool:
    """Check ``||x(k+1) - x*|| <= rate * ||x(k) - x*||`` at every recorded step."""
    X = np.asarray(trace.points, dtype=float)
    w = np.ones(X.shape[1]) if weight is None else as_weight(weight, X.shape[1])
    d = np.max(np.abs(X - np.asarray(x_star, dtype=float)) / w, axis=1)
    return bool(np.all(d[1:] <= rate_bound * d[:-1] + slack))


def distances(trace: IterationTrace, x_star, weight=None) -> np.ndarray:
    X = np.asarray(trace.points, dtype=float)
    w = np.ones(X.shape[1]) if weight is None else as_weight(weight, X.shape[1])
    return np.max(np.abs(X - np.asarray(x_star, dtype=float)) / w, axis=1)
