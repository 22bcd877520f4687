"""Reference problems and reproducible experiment runners.

Every runner takes an :class:`ExperimentConfig`, writes its CSV/JSON files
into ``output_dir`` (when given) and returns a plain ``dict`` summary.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certify import (
    InfeasibleError,
    check_ewc,
    check_strong_monotone,
    check_weak_contractive,
    krasnoselskij_plan,
    min_b,
    monotone_baseline_plan,
    optimize_rate,
)
from .consensus import (
    Digraph,
    MasModel,
    consensus_gap,
    consensus_step_bound,
    has_globally_reachable_node,
    random_lrelu_rules,
    simulate_consensus,
)
from .iterate import IterationConfig, distances, forward_step, krasnoselskij, verify_contraction_rate
from .matnorm import perron
from .operators import AffineOp, DiagNonlinAffineOp, JacobianEnvelope, LeakyReLU, diag_lower

log = logging.getLogger(__name__)

# -- reference data ---------------------------------------------------------------

LARGE_RSS_A = 0.5 * np.array([
    [-3.0, 0.0, 1.0, -3.0],
    [3.0, -15.0, -12.0, -1.0],
    [2.0, -1.0, -5.0, -5.0],
    [-2.0, 0.0, -1.0, -6.0],
])
LARGE_RSS_ETA = np.array([0.09, 1.0, 0.22, 0.07])

AFFINE_A = np.array([
    [-1.07, -0.17, -0.53, -0.33],
    [0.07, 0.42, -0.07, 0.15],
    [-0.13, -0.10, -0.06, -0.30],
    [0.04, 0.05, -0.21, 0.40],
])
# The reference fixed point [0.04, -2.14, -0.25, -1.76] solves x = A x - 1.
AFFINE_OFFSET = -np.ones(4)
AFFINE_X_STAR = np.array([0.04, -2.14, -0.25, -1.76])

DNL_A = 0.5 * np.array([
    [0.278, 0.111, -0.280, -0.134, -0.098],
    [-0.189, -0.739, -0.207, -0.105, -0.066],
    [-0.408, -0.355, -0.203, 0.301, 0.039],
    [0.252, 0.246, -0.225, -0.537, -0.046],
    [0.144, 0.253, 0.288, 0.225, -0.395],
])
DNL_B, DNL_C = 0.537, 0.324
DNL_ETA = np.array([2.673, 1.181, 2.215, 1.261, 1.498])
DNL_ALPHA = 0.1

C_GRID = (0.2, 0.6, 1.0, 1.25, 1.5, 1.75, 2.0)
COUNTER_VALUES = (0.1, 0.5, 0.9)


def counter_matrix(a: float) -> np.ndarray:
    return np.array([[1.0, 1.0], [0.0, a]])


EXPERIMENTS = ("counter", "largerss", "affine", "dnl_single", "dnl_ratio", "consensus_demo")


@dataclass
class ExperimentConfig:
    name: str
    seed: int = 0
    sizes: tuple = (5, 10, 20, 50)
    trials: int = 10
    c_grid: tuple = C_GRID
    output_dir: Path | None = None
    tol: float = 1e-10
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(n < 2 for n in self.sizes):
            raise ValueError("sizes must be at least 2")
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)
            self.output_dir.mkdir(parents=True, exist_ok=True)


def _write_json(cfg, name, obj):
    if cfg.output_dir is not None:
        (cfg.output_dir / name).write_text(json.dumps(obj, indent=2, default=_jsonable))


def _write_csv(cfg, name, header, rows):
    if cfg.output_dir is None:
        return
    with (cfg.output_dir / name).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


# -- small linear examples -----------------------------------------------------------

def eigen_report(A, tol: float = 1e-8) -> dict:
    """Spectral radius and whether unit-modulus eigenvalues are semi-simple."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    lam = np.linalg.eigvals(A)
    semisimple = True
    for mu in np.unique(np.round(lam[np.abs(lam) >= 1 - tol], 8)):
        alg = int(np.sum(np.abs(lam - mu) < 1e-6))
        geo = n - np.linalg.matrix_rank(A - mu * np.eye(n), tol=1e-8)
        semisimple &= geo == alg
    return {"spectral_radius": float(np.max(np.abs(lam))), "boundary_semisimple": bool(semisimple)}


def run_counter(cfg: ExperimentConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    rows, out = [], {}
    for a in COUNTER_VALUES:
        A = counter_matrix(a)
        env = JacobianEnvelope.from_vertices(A)
        eta_p = perron(np.abs(A)).vector
        eta_p = np.maximum(eta_p, 1e-9)
        perron_feasible = check_weak_contractive(env, eta_p).feasible
        random_feasible = sum(
            check_weak_contractive(env, rng.uniform(0.01, 10.0, 2)).feasible for _ in range(1000)
        )
        eig = eigen_report(A)
        trace = krasnoselskij(lambda x, A=A: A @ x, IterationConfig(0.5, 100_000, cfg.tol), [1.0, 1.0])
        out[str(a)] = {
            "perron_eta_feasible": perron_feasible,
            "random_eta_feasible": int(random_feasible),
            **eig,
            "iteration_converged": trace.converged,
            "iterations": trace.iterations,
        }
        rows.append([a, perron_feasible, random_feasible, eig["spectral_radius"],
                     eig["boundary_semisimple"], trace.converged, trace.iterations])
    _write_csv(cfg, "counter.csv",
               ["a", "perron_eta_feasible", "random_eta_feasible", "spectral_radius",
                "boundary_semisimple", "iteration_converged", "iterations"], rows)
    _write_json(cfg, "counter.json", out)
    return out


def run_largerss(cfg: ExperimentConfig) -> dict:
    env = JacobianEnvelope.from_vertices(LARGE_RSS_A)
    cert = check_ewc(env, 4.0, 0.0, LARGE_RSS_ETA)
    plan = krasnoselskij_plan(cert)
    mono = monotone_baseline_plan(env, LARGE_RSS_ETA)
    fixed = optimize_rate(env, eta=LARGE_RSS_ETA)
    free = optimize_rate(env)
    out = {
        "certificate": cert.to_json(),
        "diag_lower": diag_lower(env),
        "ewc_plan": plan.to_json(),
        "monotone_plan": mono.to_json(),
        "strong_monotone_c0": check_strong_monotone(env.identity_minus(), 0.0, LARGE_RSS_ETA).feasible,
        "optimum_fixed_eta": {"b": fixed.b, "c": fixed.c, "rate": fixed.rate},
        "optimum_free_eta": {"b": free.b, "c": free.c, "rate": free.rate, "eta": free.eta},
    }
    _write_json(cfg, "largerss.json", out)
    return out


def run_affine(cfg: ExperimentConfig) -> dict:
    op = AffineOp(AFFINE_A, AFFINE_OFFSET)
    env = op.envelope()
    ones = np.ones(4)
    b_min = min_b(env, eta=ones)
    mono = monotone_baseline_plan(env, eta=ones)
    opt = optimize_rate(env, eta=ones)
    x_star = op.fixed_point()
    F = op.residual_op()
    x0 = np.zeros(4)
    runs = {}
    for label, theta, rate in (("ewc", 1 / (opt.b + 1), 1 - opt.c / (opt.b + 1)),
                               ("monotone", mono.theta_star, mono.rate_bound)):
        tr = forward_step(F, IterationConfig(theta, 10_000, 1e-8), x0)
        d = distances(tr, x_star)
        runs[label] = {
            "theta": theta,
            "rate_bound": rate,
            "iterations": tr.iterations,
            "converged": tr.converged,
            "final": tr.final,
            "rate_verified": verify_contraction_rate(tr, x_star, rate),
        }
        _write_csv(cfg, f"affine_{label}.csv", ["k", "distance", "residual"],
                   [[k, d[k], tr.step_residuals[k] if k < len(tr.step_residuals) else ""]
                    for k in range(len(d))])
    out = {
        "min_b": b_min,
        "theta_max_ewc": 1 / (b_min + 1),
        "monotone_theta": mono.theta_star,
        "optimum": {"b": opt.b, "c": opt.c, "rate": opt.rate},
        "x_star": x_star,
        "runs": runs,
    }
    _write_json(cfg, "affine.json", out)
    return out


# -- diagonal nonlinearity composed with an affine map ---------------------------------

def dnl_envelope(A, alpha: float = DNL_ALPHA) -> JacobianEnvelope:
    return DiagNonlinAffineOp(A, None, LeakyReLU(alpha)).envelope()


def run_dnl_single(cfg: ExperimentConfig) -> dict:
    env = dnl_envelope(DNL_A)
    cert = check_ewc(env, DNL_B, DNL_C, DNL_ETA)
    opt = optimize_rate(env)
    mono = monotone_baseline_plan(env)
    out = {
        "certificate": cert.to_json(),
        "optimum": {"b": opt.b, "c": opt.c, "rate": opt.rate, "eta": opt.eta},
        "monotone_plan": mono.to_json(),
        "ratio": opt.rate / mono.rate_bound,
    }
    _write_json(cfg, "dnl_single.json", out)
    return out


def generate_dnl_matrix(n: int, c: float, rng, alpha: float = DNL_ALPHA):
    """Random ``M`` (entries N(0, 1/n)) repaired into ``A`` with a ``(b, c)`` certificate at ``eta = 1``.

    Off-diagonal entries of ``M`` are kept.  Each diagonal entry is lowered
    just enough that ``d (a_ii + r_i) <= 1 - c`` for both sector endpoints
    ``d``, where ``r_i`` is the absolute off-diagonal row sum; any
    ``b >= max(0, c - 1, max_i(-a_ii))`` then certifies ``A``.  Returns
    ``(A, offset, b)``.
    """
    sd = 1.0 / np.sqrt(n)
    M = rng.normal(0.0, sd, (n, n))
    offset = rng.normal(0.0, sd, n)
    r = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    upper = np.minimum((1 - c) / alpha, 1 - c) - r
    A = M.copy()
    np.fill_diagonal(A, np.minimum(np.diag(M), upper))
    b = max(0.0, c - 1.0, float(np.max(-np.diag(A))))
    return A, offset, b


def dnl_rates(A, alpha: float = DNL_ALPHA):
    env = dnl_envelope(A, alpha)
    return optimize_rate(env), monotone_baseline_plan(env)


DNL_HEADER = ["n", "c", "trial", "b_ewc", "c_ewc", "rate_ewc", "theta_mon", "c_mon", "rate_mon", "ratio"]


def run_dnl_ratio(cfg: ExperimentConfig) -> dict:
    alpha = cfg.extra.get("alpha", DNL_ALPHA)
    rows, skipped = [], []
    t0 = time.perf_counter()
    for n in cfg.sizes:
        for ci, c in enumerate(cfg.c_grid):
            for trial in range(cfg.trials):
                rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, n, ci, trial]))
                A, _, _ = generate_dnl_matrix(n, c, rng, alpha)
                try:
                    ewc, mon = dnl_rates(A, alpha)
                except InfeasibleError as exc:
                    log.warning("skipping n=%d c=%g trial=%d: %s", n, c, trial, exc)
                    skipped.append((n, c, trial, str(exc)))
                    continue
                if not mon.feasible or mon.rate_bound <= 0:
                    log.warning("skipping n=%d c=%g trial=%d: monotone plan infeasible", n, c, trial)
                    skipped.append((n, c, trial, "monotone plan infeasible"))
                    continue
                rows.append([n, c, trial, ewc.b, ewc.c, ewc.rate, mon.theta_star, mon.c,
                             mon.rate_bound, ewc.rate / mon.rate_bound])
    _write_csv(cfg, "dnl_ratio.csv", DNL_HEADER, rows)
    ratios = np.array([r[-1] for r in rows])
    cs = np.array([r[1] for r in rows])
    means = {str(c): float(ratios[cs == c].mean()) for c in cfg.c_grid if np.any(cs == c)}
    out = {
        "rows": len(rows),
        "skipped": len(skipped),
        "max_ratio": float(ratios.max()) if len(rows) else None,
        "mean_ratio_by_c": means,
        "seconds": time.perf_counter() - t0,
    }
    _write_json(cfg, "dnl_ratio_summary.json", out)
    out["table"] = rows
    return out


# -- consensus ----------------------------------------------------------------------

def consensus_scenarios(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    graphs = {
        "ring5": Digraph.ring(5),
        "star6": Digraph.star(6),
        "random8": Digraph.random_strongly_connected(8, rng),
        "random10": Digraph.random_strongly_connected(10, rng),
        "two_cycles": Digraph.disjoint_cycles([3, 3]),
    }
    out = {}
    for name, g in graphs.items():
        rules = random_lrelu_rules(g, rng)
        L = max(r.lipschitz for r in rules.values())
        out[name] = (MasModel(g, rules, 0.9 * consensus_step_bound(g, L)), rng.normal(0, 1, g.n))
    return out


def run_consensus_demo(cfg: ExperimentConfig) -> dict:
    out = {}
    for name, (model, x0) in consensus_scenarios(cfg.seed).items():
        trace, value = simulate_consensus(model, x0)
        out[name] = {
            "theta": model.theta,
            "globally_reachable_node": has_globally_reachable_node(model.graph),
            "consensus": value is not None,
            "value": value,
            "gap": consensus_gap(trace.final),
            "steps": len(trace.step_residuals),
            "x0_range": [float(x0.min()), float(x0.max())],
        }
        if cfg.output_dir is not None:
            trace.write_csv(cfg.output_dir / f"consensus_{name}.csv")
    _write_json(cfg, "consensus_demo.json", out)
    return out


RUNNERS = {
    "counter": run_counter,
    "largerss": run_largerss,
    "affine": run_affine,
    "dnl_single": run_dnl_single,
    "dnl_ratio": run_dnl_ratio,
    "consensus_demo": run_consensus_demo,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    return RUNNERS[cfg.name](cfg)
