"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line.  Run on its own with

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import sys
import time

import numpy as np
import pytest

from ewcert.certify import (
    check_ewc,
    check_order_preserving,
    check_strong_monotone,
    check_subhomogeneous,
    check_weak_contractive,
    find_weight,
    krasnoselskij_plan,
    min_b,
    monotone_baseline_plan,
    optimize_rate,
)
from ewcert.consensus import (
    Digraph,
    MasModel,
    build_mas_operator,
    consensus_gap,
    consensus_step_bound,
    has_globally_reachable_node,
    random_lrelu_rules,
    simulate_consensus,
)
from ewcert.experiments import (
    AFFINE_A,
    AFFINE_OFFSET,
    AFFINE_X_STAR,
    C_GRID,
    COUNTER_VALUES,
    DNL_A,
    DNL_B,
    DNL_C,
    DNL_ETA,
    LARGE_RSS_A,
    LARGE_RSS_ETA,
    ExperimentConfig,
    counter_matrix,
    dnl_envelope,
    run_experiment,
)
from ewcert.iterate import IterationConfig, forward_step, krasnoselskij, verify_contraction_rate
from ewcert.matnorm import perron, weighted_inf_norm_mat, weighted_inf_norm_vec
from ewcert.operators import AffineOp, DiagNonlinAffineOp, JacobianEnvelope, LeakyReLU, diag_lower


@pytest.fixture
def report(capsys):
    def emit(number, checks):
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"{status} criterion {number}"
        if failed:
            line += ": " + ", ".join(failed)
        with capsys.disabled():
            print(f"\n{line}")
        assert not failed, line

    return emit


def _env(*mats):
    return JacobianEnvelope.from_vertices(*mats)


def test_criterion_1_large_rss(report):
    t0 = time.perf_counter()
    env = _env(LARGE_RSS_A)
    cert = check_ewc(env, 4.0, 0.0, LARGE_RSS_ETA)
    plan = krasnoselskij_plan(cert)
    mono = monotone_baseline_plan(env, LARGE_RSS_ETA)
    opt = optimize_rate(env, eta=LARGE_RSS_ETA)
    elapsed = time.perf_counter() - t0
    report(1, {
        "check_ewc(b=4, c=0) feasible": cert.feasible,
        "diag_lower == 7.5": diag_lower(env) == 7.5,
        "theta_max == 0.2": plan.theta_max == pytest.approx(0.2, abs=1e-12),
        "monotone theta 0.117 +- 0.001": abs(mono.theta_max - 0.117) <= 0.001,
        "optimize b 4.006 +- 0.05": abs(opt.b - 4.006) <= 0.05,
        "optimize c 0.0227 +- 0.01": abs(opt.c - 0.0227) <= 0.01,
        "runtime < 1 s": elapsed < 1.0,
    })


def test_criterion_2_affine(report):
    t0 = time.perf_counter()
    op = AffineOp(AFFINE_A, AFFINE_OFFSET)
    env = op.envelope()
    ones = np.ones(4)
    b_min = min_b(env, eta=ones)
    mono = monotone_baseline_plan(env, ones)
    opt = optimize_rate(env, eta=ones)
    x_star = op.fixed_point()
    F = op.residual_op()
    run_fast = forward_step(F, IterationConfig(0.59, stop_tol=1e-8), np.zeros(4))
    run_slow = forward_step(F, IterationConfig(0.48, stop_tol=1e-8), np.zeros(4))
    elapsed = time.perf_counter() - t0
    report(2, {
        "min_b 0.55 +- 0.01": abs(b_min - 0.55) <= 0.01,
        "theta_max 0.645 +- 0.005": abs(1 / (b_min + 1) - 0.645) <= 0.005,
        "monotone theta 0.48 +- 0.01": abs(mono.theta_star - 0.48) <= 0.01,
        "optimum b 0.695 +- 0.02": abs(opt.b - 0.695) <= 0.02,
        "optimum c 0.29 +- 0.02": abs(opt.c - 0.29) <= 0.02,
        "rate <= 0.84": opt.rate <= 0.83 + 0.01,
        "forward step converges to x*": run_fast.converged
        and np.max(np.abs(run_fast.final - AFFINE_X_STAR)) <= 0.01,
        "rate 0.83 at theta 0.59": verify_contraction_rate(run_fast, x_star, 0.83),
        "rate 0.86 at theta 0.48": verify_contraction_rate(run_slow, x_star, 0.86),
        "theta 0.59 needs fewer iterations": run_slow.converged
        and run_fast.iterations < run_slow.iterations,
        "runtime < 5 s": elapsed < 5.0,
    })


def _semisimple_boundary(A):
    lam = np.linalg.eigvals(A)
    n = len(lam)
    for mu in lam[np.abs(lam) >= 1 - 1e-8]:
        alg = int(np.sum(np.abs(lam - mu) < 1e-6))
        geo = n - np.linalg.matrix_rank(A - mu * np.eye(n), tol=1e-8)
        if geo != alg:
            return False
    return True


def test_criterion_3_counterexample(report):
    rng = np.random.default_rng(0)
    checks = {}
    for a in COUNTER_VALUES:
        A = counter_matrix(a)
        env = _env(A)
        eta = np.maximum(perron(np.abs(A)).vector, 1e-9)
        checks[f"a={a}: Perron weight infeasible"] = not check_weak_contractive(env, eta).feasible
        checks[f"a={a}: 1000 random weights infeasible"] = not any(
            check_weak_contractive(env, rng.uniform(1e-3, 1e3, 2)).feasible for _ in range(1000)
        )
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        checks[f"a={a}: rho(A) = 1"] = abs(rho - 1) <= 1e-12
        checks[f"a={a}: boundary eigenvalue semi-simple"] = _semisimple_boundary(A)
        tr = krasnoselskij(lambda x, A=A: A @ x, IterationConfig(0.5, max_iters=100_000), rng.normal(size=2))
        checks[f"a={a}: iteration converges"] = tr.converged
    report(3, checks)


def test_criterion_4_printed_dnl_matrix(report):
    cert = check_ewc(dnl_envelope(DNL_A), DNL_B, DNL_C, DNL_ETA)
    report(4, {"feasible within 2e-2": cert.residual <= 2e-2})


# -- criterion 5 -----------------------------------------------------------------------

CASES = 200


def _random_env(r, n):
    if r.random() < 0.5:
        return _env(*[r.normal(size=(n, n)) for _ in range(int(r.integers(1, 4)))])
    lo = r.normal(size=(n, n))
    return JacobianEnvelope.from_interval(lo, lo + r.uniform(0, 1, (n, n)))


def _suite_mono_ene(r):
    for _ in range(CASES):
        n = int(r.integers(1, 9))
        env = _random_env(r, n)
        b = max(0.0, diag_lower(env))
        c = float(r.uniform(0, b + 1))
        eta = find_weight(env, b).eta if r.random() < 0.5 else r.uniform(0.1, 3, n)
        ewc = check_ewc(env, b, c, eta)
        mono = check_strong_monotone(env.identity_minus(), c, eta)
        if abs(ewc.residual - mono.residual) > 1e-9 or ewc.feasible != mono.feasible:
            return False
    return True


def _suite_lipschitz(r):
    done = 0
    while done < CASES:
        n = int(r.integers(1, 9))
        env = _env(*[r.normal(size=(n, n)) / n for _ in range(2)])
        b = max(0.0, diag_lower(env)) * float(r.uniform(0.5, 1.5))
        cert = find_weight(env, b)
        if not cert.feasible:
            continue
        done += 1
        bound = 1 - cert.c / (b + 1)
        for _ in range(3):
            J = env.vertices[r.integers(0, 2, n), np.arange(n), :]
            if weighted_inf_norm_mat((b * np.eye(n) + J) / (b + 1), cert.eta) > bound + 1e-9:
                return False
    return True


def _suite_metzler(r):
    for _ in range(CASES):
        n = int(r.integers(1, 9))
        mats = []
        for _ in range(int(r.integers(1, 3))):
            M = r.uniform(0, 1, (n, n))
            np.fill_diagonal(M, r.normal(size=n))
            mats.append(M)
        env = _env(*mats)
        b = max(0.0, diag_lower(env))
        c = float(r.uniform(0, min(b + 1, 2)))
        eta = r.uniform(0.1, 3, n)
        ewc, sub = check_ewc(env, b, c, eta), check_subhomogeneous(env, c, eta)
        if abs(ewc.residual - sub.residual) > 1e-9 or ewc.feasible != sub.feasible:
            return False
    return True


def _suite_sampled_inequality(r):
    done = 0
    while done < CASES:
        n = int(r.integers(1, 9))
        op = DiagNonlinAffineOp(r.normal(size=(n, n)), r.normal(size=n), LeakyReLU(float(r.uniform(0, 1))))
        env = op.envelope()
        cert = find_weight(env, max(0.0, diag_lower(env)) * float(r.uniform(0, 1.5)))
        if not cert.feasible:
            continue
        done += 1
        b, c, eta = cert.b, cert.c, cert.eta
        for _ in range(10):
            x, y = r.normal(size=n) * 3, r.normal(size=n) * 3
            lhs = weighted_inf_norm_vec(b * (x - y) + op(x) - op(y), eta)
            if lhs > (b - c + 1) * weighted_inf_norm_vec(x - y, eta) + 1e-9:
                return False
    return True


def _suite_trace_identity(r):
    for _ in range(CASES):
        n = int(r.integers(1, 9))
        A = r.normal(size=(n, n))
        A /= np.abs(A).sum(axis=1).max()
        T = DiagNonlinAffineOp(A, r.normal(size=n), LeakyReLU(0.1))
        cfg = IterationConfig(float(r.uniform(0.01, 1.0)), max_iters=100)
        x0 = r.normal(size=n)
        a = krasnoselskij(T, cfg, x0)
        b = forward_step(lambda x: x - T(x), cfg, x0)
        if len(a.points) != len(b.points) or np.max(np.abs(np.array(a.points) - np.array(b.points))) > 1e-12:
            return False
    return True


def _suite_matnorm(r):
    import itertools

    for _ in range(CASES):
        n = int(r.integers(1, 5))
        M = r.normal(size=(n, n))
        eta = r.uniform(0.1, 3, n)
        sampled = max(np.max(np.abs(M @ (np.array(s) * eta)) / eta)
                      for s in itertools.product((-1.0, 1.0), repeat=n))
        if abs(weighted_inf_norm_mat(M, eta) - sampled) > 1e-6:
            return False
        N = r.uniform(0, 1, (n + 1, n + 1))
        if abs(perron(N).rho - np.max(np.abs(np.linalg.eigvals(N)))) > 1e-8:
            return False
    return True


def test_criterion_5_property_suites(report):
    r = np.random.default_rng(2024)
    t0 = time.perf_counter()
    checks = {
        "(a) EWC <=> strong monotonicity at diagL": _suite_mono_ene(r),
        "(b) averaged-map Lipschitz bound": _suite_lipschitz(r),
        "(c) EWC <=> subhomogeneity on Metzler envelopes": _suite_metzler(r),
        "(d) sampled enriched inequality": _suite_sampled_inequality(r),
        "(e) Krasnoselskij / forward-step identity": _suite_trace_identity(r),
        "(f) weighted-norm and Perron oracles": _suite_matnorm(r),
    }
    checks["runtime < 30 s"] = time.perf_counter() - t0 < 30.0
    report(5, checks)


# -- criterion 6 -----------------------------------------------------------------------

def _model(g, r):
    rules = random_lrelu_rules(g, r)
    L = max(rule.lipschitz for rule in rules.values())
    return MasModel(g, rules, 0.9 * consensus_step_bound(g, L))


def _orbit(model, x0, steps):
    op, th = build_mas_operator(model), model.theta
    xs = [np.asarray(x0, dtype=float)]
    for _ in range(steps):
        xs.append((1 - th) * xs[-1] + th * op(xs[-1]))
    return np.array(xs)


def test_criterion_6_consensus(report):
    r = np.random.default_rng(11)
    graphs = {"ring(5)": Digraph.ring(5), "star(6)": Digraph.star(6)}
    for k, n in enumerate((3, 5, 7, 8, 10)):
        graphs[f"random({n})#{k}"] = Digraph.random_strongly_connected(n, r)
    checks = {}
    for name, g in graphs.items():
        model = _model(g, r)
        x0 = r.normal(size=g.n) * 2
        trace, value = simulate_consensus(model, x0, IterationConfig(model.theta, 100_000, 1e-300))
        checks[f"{name}: gap <= 1e-8 within 1e5 steps"] = (
            value is not None and consensus_gap(trace.final) <= 1e-8 and len(trace.step_residuals) <= 100_000
        )
        s = float(r.uniform(-5, 5))
        a = _orbit(model, x0, 300)
        b = _orbit(model, x0 + s, 300)
        checks[f"{name}: translation invariance 1e-12"] = np.max(np.abs(b - a - s)) <= 1e-12
        c = _orbit(model, x0 + r.uniform(0, 1, g.n), 300)
        checks[f"{name}: order preserved"] = bool(np.all(a <= c + 1e-12))
        checks[f"{name}: averaged map order-preserving"] = check_order_preserving(
            build_mas_operator(model).envelope().averaged(model.theta)
        )
    g = Digraph.disjoint_cycles([3, 4])
    model = _model(g, r)
    x0 = np.concatenate([np.zeros(3), np.ones(4) * 2]) + 0.1 * r.normal(size=7)
    trace, value = simulate_consensus(model, x0)
    fin = trace.final
    checks["disjoint cycles: no globally reachable node"] = not has_globally_reachable_node(g)
    checks["disjoint cycles: non-consensus equilibrium"] = (
        value is None and trace.converged and consensus_gap(fin) > 1e-3
        and np.max(np.abs(build_mas_operator(model)(fin) - fin)) <= 1e-9
    )
    report(6, checks)


def test_criterion_7_ratio_sweep(report):
    cfg = ExperimentConfig("dnl_ratio", seed=0, sizes=(5, 10, 20), trials=10, c_grid=C_GRID)
    t0 = time.perf_counter()
    out = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    ratios = np.array([row[-1] for row in out["table"]])
    means = out["mean_ratio_by_c"]
    with_skips = out["rows"] + out["skipped"] == 3 * 10 * len(C_GRID)
    report(7, {
        "row accounting": with_skips and out["rows"] > 0,
        "every ratio <= 1 + 1e-6": bool(np.all(ratios <= 1 + 1e-6)),
        "mean ratio at c=0.2 >= mean at c=1.0": means["0.2"] >= means["1.0"],
        "runtime < 5 min": elapsed < 300,
    })


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
