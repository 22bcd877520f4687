"""Dense kernel: majorants, weighted infinity norms and Perron roots.

Matrices are plain 2-D ``numpy`` float arrays; weights are 1-D arrays with
strictly positive entries.  The weighted norm used throughout the package is

    ||x||_{inf, [eta]^-1} = max_i |x_i| / eta_i
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Regularization added to the diagonal before power iteration.
PERRON_EPS = 1e-12
PERRON_TOL = 1e-12
PERRON_MAX_ITER = 10_000


def as_matrix(M, square: bool = False) -> np.ndarray:
    """Validate and return ``M`` as a finite 2-D float array."""
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def as_weight(eta, n: int | None = None) -> np.ndarray:
    """Validate a positive weight vector, optionally of length ``n``."""
    w = np.atleast_1d(np.array(eta, dtype=float))
    if w.ndim != 1:
        raise ValueError("weight must be a vector")
    if n is not None and w.shape[0] != n:
        raise ValueError(f"weight has length {w.shape[0]}, expected {n}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weight entries must be finite and strictly positive")
    return w


def nonneg_majorant(M) -> np.ndarray:
    """Entrywise absolute value ``|M|``."""
    return np.abs(as_matrix(M))


def metzler_majorant(M) -> np.ndarray:
    """Keep the diagonal of ``M`` and take absolute values off the diagonal."""
    A = as_matrix(M, square=True)
    out = np.abs(A)
    np.fill_diagonal(out, np.diag(A))
    return out


def weighted_inf_norm_vec(x, eta) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = as_weight(eta, x.shape[0])
    return float(np.max(np.abs(x) / w))


def weighted_inf_norm_mat(M, eta) -> float:
    """Induced norm of ``M`` for ``||.||_{inf,[eta]^-1}``: ``max_i (|M| eta)_i / eta_i``."""
    A = as_matrix(M, square=True)
    w = as_weight(eta, A.shape[0])
    return float(np.max(np.abs(A) @ w / w))


@dataclass(frozen=True)
class PerronResult:
    rho: float
    vector: np.ndarray
    residual: float
    converged: bool
    iterations: int


def collatz_wielandt(N, v) -> tuple[float, float]:
    """Lower and upper Collatz-Wielandt bounds ``min/max (Nv)_i / v_i`` over ``v_i > 0``."""
    v = np.asarray(v, dtype=float)
    Nv = np.asarray(N, dtype=float) @ v
    pos = v > 0
    ratios = Nv[pos] / v[pos]
    return float(ratios.min()), float(ratios.max())


def _normalize(v):
    m = np.max(v)
    return v / m if m > 0 else v


def perron(N, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER) -> PerronResult:
    """Perron root and vector of a nonnegative square matrix.

    Power iteration on ``N + s I`` with ``s = eps + 0.01 * max row sum``: ``eps``
    regularizes reducible inputs, the extra shift breaks periodicity (it moves
    every eigenvalue by the same amount, so the Perron vector is unchanged).
    The iteration is warm-started by repeated squaring, then continued with
    plain power steps until successive root estimates differ by less than
    ``tol`` or ``max_iter`` steps were taken.  The root is reported as the
    Collatz-Wielandt upper bound ``max_i (N v)_i / v_i`` over ``v_i > 0``.
    """
    N = as_matrix(N, square=True)
    if np.any(N < 0):
        raise ValueError("perron requires an entrywise nonnegative matrix")
    n = N.shape[0]
    if n == 1:
        return PerronResult(float(N[0, 0]), np.ones(1), 0.0, True, 0)

    scale = float(np.max(N.sum(axis=1)))
    if scale == 0.0:
        return PerronResult(0.0, np.ones(n), 0.0, True, 0)
    M = N + (PERRON_EPS + 0.01 * scale) * np.eye(n)

    v = np.ones(n)
    P = M / np.max(M)
    for _ in range(64):
        w = _normalize(P @ v)
        done = np.max(np.abs(w - v)) < 1e-15
        v = w
        if done:
            break
        P = P @ P
        P /= np.max(P)

    rho = collatz_wielandt(N, v)[1]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        v = _normalize(M @ v)
        new = collatz_wielandt(N, v)[1]
        if abs(new - rho) < tol * max(1.0, abs(new)):
            rho = new
            converged = True
            break
        rho = new
    residual = float(np.max(np.abs(N @ v - rho * v)))
    return PerronResult(float(rho), v, residual, converged, it)


# -- file formats -----------------------------------------------------------

def matrix_from_json(obj) -> np.ndarray:
    """Parse ``{"rows": n, "cols": m, "data": [...]}`` (row-major) or a nested list."""
    if isinstance(obj, dict):
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = np.asarray(obj["data"], dtype=float).ravel()
        if data.size != rows * cols:
            raise ValueError(f"matrix data has {data.size} entries, expected {rows * cols}")
        return as_matrix(data.reshape(rows, cols))
    return as_matrix(obj)


def matrix_to_json(M) -> dict:
    A = as_matrix(M)
    return {"rows": A.shape[0], "cols": A.shape[1], "data": A.ravel().tolist()}


def load_matrix(path) -> np.ndarray:
    """Read a matrix from a ``.json`` file or a CSV file (one row per line)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return matrix_from_json(json.loads(path.read_text()))
    with path.open(newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return as_matrix(rows)


def load_vector(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".json":
        obj = json.loads(path.read_text())
        return np.asarray(obj["data"] if isinstance(obj, dict) else obj, dtype=float).ravel()
    return load_matrix(path).ravel()
