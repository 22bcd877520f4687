"""Certificates for enriched weak contractivity and related properties.

All checks reduce to row-wise inequalities ``(B eta)_i <= lam * eta_i`` where
``B`` ranges over nonnegative (or Metzler) matrices derived from the Jacobian
envelope.  Because each condition only looks at one row at a time, rows of
different envelope members can be combined freely; the best weight for such a
row-product family is the Perron vector of its worst row selection, found
here by policy iteration over selections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matnorm import as_weight, perron
from .operators import JacobianEnvelope, diag_lower

FEAS_TOL = 1e-9
STRICT_TOL = 1e-9
ORDER_TOL = 1e-12
ETA_FLOOR = 1e-9
OPEN_BOUND_SHRINK = 1e-6
GRID_POINTS = 1000


class InfeasibleError(ValueError):
    """No certificate exists within the searched range."""


@dataclass(frozen=True)
class EwcCertificate:
    b: float
    c: float
    eta: np.ndarray
    residual: float
    feasible: bool

    def to_json(self):
        return {
            "b": self.b,
            "c": self.c,
            "eta": np.asarray(self.eta).tolist(),
            "residual": self.residual,
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class PropertyCertificate:
    """Outcome of a monotonicity or subhomogeneity check."""

    kind: str
    c: float
    eta: np.ndarray
    residual: float
    feasible: bool


@dataclass(frozen=True)
class StepSizePlan:
    theta_max: float
    theta_max_closed: bool
    theta_star: float
    rate_bound: float
    source: str
    b: float = math.nan
    c: float = math.nan
    eta: np.ndarray = field(default=None, repr=False)
    feasible: bool = True

    def to_json(self):
        return {
            "theta_max": self.theta_max,
            "theta_max_closed": self.theta_max_closed,
            "theta_star": self.theta_star,
            "rate_bound": self.rate_bound,
            "source": self.source,
            "b": self.b,
            "c": self.c,
            "eta": None if self.eta is None else np.asarray(self.eta).tolist(),
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class RateOptimum:
    b: float
    c: float
    eta: np.ndarray
    rate: float
    certificate: EwcCertificate


# -- row families ----------------------------------------------------------------

def ewc_rows(env: JacobianEnvelope, b: float) -> np.ndarray:
    """Candidates for rows of ``|b I + J|``, shape ``(m, n, n)``."""
    I = np.eye(env.n)
    if env.is_vertex_based:
        return np.abs(b * I + env.vertices)
    return np.maximum(np.abs(b * I + env.lower), np.abs(b * I + env.upper))[None]


def metzler_rows(env: JacobianEnvelope) -> np.ndarray:
    """Candidates for rows of the Metzler majorant of ``J``."""
    if env.is_vertex_based:
        V = env.vertices
        out = np.abs(V)
        idx = np.arange(env.n)
        out[:, idx, idx] = V[:, idx, idx]
        return out
    out = np.maximum(np.abs(env.lower), np.abs(env.upper))
    np.fill_diagonal(out, np.diag(env.upper))
    return out[None]


def signed_rows(env: JacobianEnvelope) -> np.ndarray:
    """Candidates for rows of ``J`` itself (only used against positive weights)."""
    if env.is_vertex_based:
        return env.vertices
    return env.upper[None]


def row_ratio(C: np.ndarray, eta: np.ndarray) -> float:
    """``max_i max_k (C_k eta)_i / eta_i``."""
    return float(np.max((C @ eta).max(axis=0) / eta))


def _positive_perron_vector(B):
    v = perron(B).vector
    if v.min() < ETA_FLOOR * v.max():
        # reducible worst case: a small positive coupling gives a strictly
        # positive vector whose Collatz-Wielandt bound stays close to rho(B)
        delta = 1e-12 * (1.0 + B.max())
        v2 = perron(B + delta).vector
        if row_ratio(B[None], np.maximum(v2, ETA_FLOOR * v2.max())) <= row_ratio(
            B[None], np.maximum(v, ETA_FLOOR * v.max())
        ):
            v = v2
    return np.maximum(v, ETA_FLOOR * v.max())


def family_perron(C: np.ndarray, sigma=None, max_rounds: int = 100):
    """Smallest ``lam`` with ``(C_k eta)_i <= lam eta_i`` for all ``k, i`` and some ``eta > 0``.

    ``C`` may be Metzler; it is shifted to a nonnegative family first.
    Returns ``(lam, eta, sigma)`` where ``sigma`` is the worst row selection
    (reusable as a warm start).  ``lam`` is always the exact row ratio of the
    returned ``eta``, so it is a valid bound even if the search stopped early.
    """
    m, n, _ = C.shape
    idx = np.arange(n)
    shift = max(0.0, -float(C[:, idx, idx].min()))
    if shift > 0:
        C = C.copy()
        C[:, idx, idx] += shift
    if sigma is None:
        sigma = C.sum(axis=2).argmax(axis=0)
    sigma = np.asarray(sigma)
    best_eta, best_lam = None, math.inf
    for _ in range(max_rounds):
        eta = _positive_perron_vector(C[sigma, idx, :])
        vals = C @ eta
        lam = float(np.max(vals.max(axis=0) / eta))
        if lam < best_lam:
            best_lam, best_eta = lam, eta
        cur = vals[sigma, idx]
        top = vals.max(axis=0)
        improve = top > cur * (1 + 1e-13) + 1e-300
        if not improve.any():
            break
        sigma = np.where(improve, vals.argmax(axis=0), sigma)
    return best_lam - shift, best_eta / best_eta.max(), sigma


def _ewc_bound(env, b, eta=None, sigma=None):
    """Smallest admissible ``b - c + 1`` at this ``b`` (free or fixed weight)."""
    C = ewc_rows(env, b)
    if eta is not None:
        return row_ratio(C, eta), eta, sigma
    return family_perron(C, sigma)


# -- checks -------------------------------------------------------------------------

def check_ewc(env: JacobianEnvelope, b: float, c: float, eta, tol: float = FEAS_TOL) -> EwcCertificate:
    if b < 0:
        raise ValueError(f"b must be nonnegative, got {b}")
    if c < 0 or c > b + 1:
        raise ValueError(f"c must lie in [0, b+1] = [0, {b + 1}], got {c}")
    eta = as_weight(eta, env.n)
    residual = row_ratio(ewc_rows(env, b), eta) - (b - c + 1)
    return EwcCertificate(float(b), float(c), eta, float(residual), residual <= tol)


def check_weak_contractive(env, eta, tol: float = FEAS_TOL) -> EwcCertificate:
    return check_ewc(env, 0.0, 0.0, eta, tol)


def check_contractive(env, eta, tol: float = STRICT_TOL) -> EwcCertificate:
    cert = check_ewc(env, 0.0, 0.0, eta, tol)
    return EwcCertificate(cert.b, cert.c, cert.eta, cert.residual, cert.residual < -tol)


def check_strong_monotone(env_F: JacobianEnvelope, c: float, eta, tol: float = FEAS_TOL) -> PropertyCertificate:
    """Metzler majorant of ``-DF`` times eta stays below ``-c eta``."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    eta = as_weight(eta, env_F.n)
    residual = row_ratio(metzler_rows(env_F.affine(0.0, -1.0)), eta) + c
    return PropertyCertificate("strong_monotone", float(c), eta, float(residual), residual <= tol)


def check_order_preserving(env: JacobianEnvelope, tol: float = ORDER_TOL) -> bool:
    lo, _ = env.entry_bounds()
    return bool(np.all(lo >= -tol))


def check_subhomogeneous(env: JacobianEnvelope, c: float, eta, tol: float = FEAS_TOL) -> PropertyCertificate:
    """``J eta <= (1-c) eta`` over the envelope (signed, no absolute values)."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    eta = as_weight(eta, env.n)
    residual = row_ratio(signed_rows(env), eta) - (1 - c)
    return PropertyCertificate("subhomogeneous", float(c), eta, float(residual), residual <= tol)


# -- searches -------------------------------------------------------------------------

def find_weight(env: JacobianEnvelope, b: float, eta=None, sigma=None) -> EwcCertificate:
    """Best ``c`` at fixed ``b`` and the weight achieving it.

    With ``eta`` given, only ``c`` is optimized.  The result is re-checked
    with :func:`check_ewc`, so ``feasible`` is always backed by a direct
    residual computation.
    """
    if b < 0:
        raise ValueError("b must be nonnegative")
    if eta is not None:
        eta = as_weight(eta, env.n)
    lam, eta, _ = _ewc_bound(env, b, eta, sigma)
    c = min(max(b + 1 - lam, 0.0), b + 1)
    return check_ewc(env, b, c, eta)


def min_b(env: JacobianEnvelope, eta=None, tol: float = 1e-4) -> float:
    """Smallest ``b >= 0`` admitting a ``(b, 0)`` certificate.

    The margin ``b + 1 - lam(b)`` is nondecreasing in ``b`` (``lam`` grows by
    at most 1 per unit of ``b``), so the first feasible point of a
    1000-point grid is located by binary search and then refined by
    bisection to ``tol``.
    """
    if eta is not None:
        eta = as_weight(eta, env.n)
    hi = max(0.0, diag_lower(env)) + 1.0
    state = {"sigma": None}

    def margin(b):
        lam, _, state["sigma"] = _ewc_bound(env, b, eta, state["sigma"])
        return b + 1 - lam

    grid = np.linspace(0.0, hi, GRID_POINTS)
    if margin(grid[-1]) < -FEAS_TOL:
        raise InfeasibleError(f"no (b, 0) certificate for b <= {hi:.6g}")
    if margin(grid[0]) >= -FEAS_TOL:
        return 0.0
    bad, good = 0, len(grid) - 1
    while good - bad > 1:
        mid = (bad + good) // 2
        if margin(grid[mid]) >= -FEAS_TOL:
            good = mid
        else:
            bad = mid
    first = good
    lo, up = grid[first - 1], grid[first]
    while up - lo > tol / 10:
        mid = 0.5 * (lo + up)
        if margin(mid) >= -FEAS_TOL:
            up = mid
        else:
            lo = mid
    return float(up)


def golden_section(f, a: float, b: float, tol: float = 1e-6):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = c if fc <= fd else d
    return x, min(fc, fd)


def optimize_rate(env: JacobianEnvelope, eta=None, grid_points: int = GRID_POINTS, tol: float = 1e-6) -> RateOptimum:
    """Minimize the rate bound ``1 - c/(b+1) = lam(b)/(b+1)`` over ``b >= 0``.

    For fixed ``b`` the best ``eta`` is the Perron vector of the worst row
    selection and the best ``c`` is ``b + 1 - lam(b)``, which reduces the
    joint problem to a 1-D search in ``b``: a grid scan followed by
    golden-section refinement around the best grid point.  Pass ``eta`` to
    keep the weight fixed.
    """
    if eta is not None:
        eta = as_weight(eta, env.n)
    anchor = max(0.0, diag_lower(env))
    grid = np.union1d(np.linspace(0.0, anchor + 2.0, grid_points), [anchor])
    state = {"sigma": None}

    def rate(b):
        lam, _, state["sigma"] = _ewc_bound(env, b, eta, state["sigma"])
        return lam / (b + 1)

    rates = np.array([rate(b) for b in grid])
    k = int(np.argmin(rates))  # first index: smallest b among ties
    b_best, r_best = float(grid[k]), float(rates[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        b_gs, r_gs = golden_section(rate, lo, hi, tol)
        if r_gs < r_best - 1e-15:
            b_best, r_best = float(b_gs), float(r_gs)
    if r_best > 1 + FEAS_TOL:
        raise InfeasibleError(f"no (b, c) certificate with c >= 0 (best rate {r_best:.6g})")
    cert = find_weight(env, b_best, eta)
    return RateOptimum(cert.b, cert.c, cert.eta, 1 - cert.c / (cert.b + 1), cert)


# -- step-size plans -------------------------------------------------------------------

def krasnoselskij_plan(cert: EwcCertificate) -> StepSizePlan:
    if not cert.feasible:
        raise ValueError("cannot derive a step size from an infeasible certificate")
    theta_max = 1.0 / (cert.b + 1)
    if cert.c > 0:
        theta_star, closed = theta_max, True
    else:
        theta_star, closed = theta_max * (1 - OPEN_BOUND_SHRINK), False
    return StepSizePlan(
        theta_max, closed, theta_star, 1 - theta_star * cert.c, "EWC", cert.b, cert.c, cert.eta
    )


def monotone_baseline_plan(env: JacobianEnvelope, eta=None) -> StepSizePlan:
    """Step size and rate from strong monotonicity of ``F = Id - T`` alone.

    The step is ``1 / diagL(F)`` with ``diagL(F) = 1 + diagL(-T)``; for a
    diagonal nonlinearity in the sector ``[alpha, 1]`` this is
    ``1 / (1 - min_i min(alpha a_ii, a_ii))``.  The rate uses the largest
    ``c`` with ``M eta <= (1 - c) eta`` for every Metzler majorant ``M`` of the
    envelope, sharing one weight ``eta``.
    """
    diag_F = 1.0 + diag_lower(env)
    if diag_F <= 0:
        raise InfeasibleError("diagL(Id - T) <= 0: no monotone step size")
    theta = 1.0 / diag_F
    C = metzler_rows(env)
    if eta is not None:
        eta = as_weight(eta, env.n)
        mu = row_ratio(C, eta)
    else:
        mu, eta, _ = family_perron(C)
    c = min(1.0 - mu, 1.0 / theta)
    feasible = c >= -FEAS_TOL
    c = max(c, 0.0)
    return StepSizePlan(theta, True, theta, 1 - c * theta, "MonotoneBaseline", diag_F - 1, c, eta, feasible)
