"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible, 3 diverged or not converged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import certify as C
from .consensus import load_scenario, simulate_consensus
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .iterate import IterationConfig, forward_step, krasnoselskij
from .matnorm import load_vector
from .operators import operator_from_json

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Report usage errors with exit code 1; 2 is reserved for infeasibility."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    def conv(x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, np.generic):
            return x.item()
        raise TypeError(type(x).__name__)

    return json.dumps(obj, indent=2, default=conv)


def _emit(args, obj, filename=None):
    text = _dump(obj)
    print(text)
    if args.out and filename:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text + "\n")


def _parse_vector(text):
    if text is None:
        return None
    p = Path(text)
    if p.exists():
        return load_vector(p)
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot read vector from {text!r}") from None


def _load_spec(path):
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    try:
        return operator_from_json(obj), obj
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{path}: invalid operator spec ({exc})") from None


def _plan_payload(cert, plan):
    out = cert.to_json()
    out.update(
        theta_max=plan.theta_max,
        theta_max_closed=plan.theta_max_closed,
        theta_star=plan.theta_star,
        rate_bound=plan.rate_bound,
        source=plan.source,
    )
    return out


def _best_certificate(env, eta=None):
    opt = C.optimize_rate(env, eta=eta)
    return opt.certificate


# -- subcommands ---------------------------------------------------------------------

def cmd_certify(args) -> int:
    op, _ = _load_spec(args.operator)
    env = op.envelope()
    eta = np.ones(env.n) if args.eta_ones else _parse_vector(args.eta)
    try:
        if args.optimize:
            cert = _best_certificate(env, eta)
        elif args.b is not None:
            if eta is None:
                cert = C.find_weight(env, args.b)
                if args.c is not None:
                    cert = C.check_ewc(env, args.b, args.c, cert.eta, args.tol)
            else:
                cert = C.check_ewc(env, args.b, args.c or 0.0, eta, args.tol)
        else:
            b = C.min_b(env, eta=eta)
            cert = C.find_weight(env, b, eta)
    except C.InfeasibleError as exc:
        _emit(args, {"feasible": False, "reason": str(exc)}, "certificate.json")
        return EXIT_INFEASIBLE
    if not cert.feasible:
        _emit(args, {**cert.to_json(), "reason": "residual above tolerance"}, "certificate.json")
        return EXIT_INFEASIBLE
    payload = _plan_payload(cert, C.krasnoselskij_plan(cert))
    if args.monotone:
        try:
            payload["monotone"] = C.monotone_baseline_plan(env, eta).to_json()
        except C.InfeasibleError as exc:
            payload["monotone"] = {"feasible": False, "reason": str(exc)}
    _emit(args, payload, "certificate.json")
    return EXIT_OK


def _default_theta(env):
    cert = _best_certificate(env)
    return C.krasnoselskij_plan(cert).theta_star


def _run_engine(args, engine, op, env, obj):
    x0 = _parse_vector(args.x0)
    if x0 is None:
        x0 = np.asarray(obj.get("x0", np.zeros(env.n)), dtype=float)
    try:
        theta = args.theta if args.theta is not None else _default_theta(env)
        cfg = IterationConfig(theta, args.max_iters, args.tol)
    except C.InfeasibleError as exc:
        raise UsageError(f"no certified step size; pass --theta ({exc})") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace = engine(op, cfg, x0)
    summary = {**trace.summary(), "theta": theta}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out / "trace.csv")
    _emit(args, summary, "summary.json")
    return EXIT_OK if trace.converged else EXIT_DIVERGED


def cmd_iterate(args) -> int:
    op, obj = _load_spec(args.operator)
    return _run_engine(args, krasnoselskij, op, op.envelope(), obj)


def cmd_zero(args) -> int:
    opF, obj = _load_spec(args.operator)
    # the forward step on F is the Krasnoselskij iteration on Id - F
    return _run_engine(args, forward_step, opF, opF.envelope().identity_minus(), obj)


def cmd_consensus(args) -> int:
    try:
        model, obj = load_scenario(args.scenario)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"{args.scenario}: invalid scenario ({exc})") from None
    x0 = _parse_vector(args.x0)
    if x0 is None:
        x0 = np.asarray(obj.get("x0", np.random.default_rng(args.seed).normal(size=model.graph.n)))
    cfg = IterationConfig(
        args.theta or model.theta,
        int(obj.get("max_iters", args.max_iters)),
        float(obj.get("stop_tol", 1e-13)),
    )
    trace, value = simulate_consensus(model, x0, cfg, float(obj.get("gap_tol", 1e-8)))
    summary = {
        "consensus": value is not None,
        "value": value,
        "iterations": len(trace.step_residuals),
        "diverged": trace.diverged,
        "theta": cfg.theta,
        "final_point": trace.final,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out / "trace.csv")
    _emit(args, summary, "summary.json")
    return EXIT_OK if value is not None else EXIT_DIVERGED


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def cmd_experiment(args) -> int:
    kw = {}
    if args.sizes:
        kw["sizes"] = tuple(int(v) for v in args.sizes.split(","))
    elif args.full:
        kw["sizes"] = (5, 10, 20, 50, 100, 200)
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.c_grid:
        kw["c_grid"] = _floats(args.c_grid)
    try:
        cfg = ExperimentConfig(args.name, seed=args.seed, output_dir=args.out, tol=args.tol, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_experiment(cfg)
    result.pop("table", None)
    print(_dump(result))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="feasibility / stopping tolerance (default 1e-9 / 1e-10)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = _Parser(prog="ewcert", parents=[common],
                                description="Certificates and step sizes for averaged fixed-point iterations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("certify", parents=[common], help="certify an operator spec")
    s.add_argument("operator")
    s.add_argument("--b", type=float)
    s.add_argument("--c", type=float)
    s.add_argument("--eta", help="weight vector: comma list or file")
    s.add_argument("--eta-ones", action="store_true", help="fix the weight to all ones")
    s.add_argument("--optimize", action="store_true", help="minimize the rate bound over (b, c, eta)")
    s.add_argument("--monotone", action="store_true", help="also report the monotone baseline plan")
    s.set_defaults(func=cmd_certify)

    for name, func, helptext in (("iterate", cmd_iterate, "Krasnoselskij iteration on T"),
                                 ("zero", cmd_zero, "forward-step zero finding for F")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("operator")
        s.add_argument("--theta", type=float, help="step size (default: certified optimum)")
        s.add_argument("--x0", help="initial point: comma list or file (default zeros)")
        s.add_argument("--max-iters", type=int, default=10_000)
        s.set_defaults(func=func)

    s = sub.add_parser("consensus", parents=[common], help="simulate a consensus scenario")
    s.add_argument("scenario")
    s.add_argument("--theta", type=float)
    s.add_argument("--x0")
    s.add_argument("--max-iters", type=int, default=100_000)
    s.set_defaults(func=cmd_consensus)

    s = sub.add_parser("experiment", parents=[common], help="run a reference experiment")
    s.add_argument("name", choices=EXPERIMENTS)
    s.add_argument("--sizes", help="comma list of dimensions")
    s.add_argument("--trials", type=int)
    s.add_argument("--c-grid", help="comma list of target c values")
    s.add_argument("--full", action="store_true", help="dimensions up to 200 (slow)")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("seed", 0), ("tol", None), ("out", None)):
        if not hasattr(args, key):
            setattr(args, key, default)
    if args.tol is None:
        args.tol = C.FEAS_TOL if args.command == "certify" else 1e-10
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
