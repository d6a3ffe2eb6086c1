"""Command-line entry point.

Subcommands: run, sweep, equilibrium, verify, cancellation-check.
"""
from __future__ import annotations

import argparse
import json
import sys


def _add_common(p):
    p.add_argument("--config", required=False, help="YAML or JSON run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")
    p.add_argument("--seed", type=int, default=None, help="seed override")


def _load(args):
    from .config import RunConfig, parse_config

    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = int(args.seed)
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _set_threads(n: int):
    if n and n > 0:
        import numba

        numba.set_num_threads(n)


def cmd_run(args) -> int:
    from .runner import run

    cfg = _load(args)
    _set_threads(args.threads)
    summary = run(cfg)
    summary.pop("_series", None)
    failed = [k for k, ok in summary["checks"].items() if not ok]
    print(json.dumps({"checks": summary["checks"], "output_dir": cfg.output_dir}, indent=2))
    if failed:
        print(f"invariant violations during the run: {failed}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    from .config import datum_moments, resolve_epsilon
    from .equilibria import epsilon_sat
    from .runner import run_sweep

    cfg = _load(args)
    _set_threads(args.threads)
    if args.epsilons:
        eps = [float(x) for x in args.epsilons.split(",")]
    elif cfg.sweep.epsilons:
        eps = [float(x) for x in cfg.sweep.epsilons]
    elif cfg.sweep.epsilon_fractions:
        rho, _, theta = datum_moments(cfg.initial)
        e_sat = epsilon_sat(rho, theta)
        eps = [float(x) * e_sat for x in cfg.sweep.epsilon_fractions]
    else:
        eps = [resolve_epsilon(cfg)]
    if any(e < 0 for e in eps):
        print("sweep rejected: negative quantum parameter in the list", file=sys.stderr)
        return 2
    report = run_sweep(cfg, eps)
    view = {k: v for k, v in report.items() if k != "rows"}
    view["rows"] = [
        {k: v for k, v in row.items() if k != "series"} for row in report["rows"]
    ]
    print(json.dumps(view, indent=2, default=float))
    ok = report["uniform_bound_ok"] and all(r["pauli_ok"] for r in report["rows"])
    return 0 if ok else 1


def cmd_equilibrium(args) -> int:
    from .config import datum_moments, resolve_epsilon
    from .equilibria import epsilon_sat, solve_fd_params

    cfg = _load(args)
    rho, u, theta = datum_moments(cfg.initial)
    eps = resolve_epsilon(cfg)
    params = solve_fd_params(rho, u, theta, eps)
    print(json.dumps({
        "a_eps": params.a_eps,
        "b_eps": params.b_eps,
        "eps": eps,
        "eps_sat": epsilon_sat(rho, theta),
        "mass_residual": params.mass_residual,
        "energy_residual": params.energy_residual,
    }, indent=2))
    return 0


def cmd_cancellation(args) -> int:
    from .collision import cancellation_oracle
    from .config import build_initial_state

    cfg = _load(args)
    _set_threads(args.threads)
    grid = cfg.build_grid()
    sphere = cfg.build_sphere()
    spec = cfg.kernel_spec()
    state = build_initial_state(cfg, grid)
    report = {}
    for variant in ("gain", "star"):
        direct = cancellation_oracle(state, spec, sphere, args.lam, "direct", variant)
        reduced = cancellation_oracle(state, spec, sphere, args.lam, "reduced", variant)
        gap = abs(direct - reduced) / max(abs(reduced), 1e-300)
        report[variant] = {"direct": direct, "reduced": reduced, "relative_gap": gap}
    print(json.dumps(report, indent=2))
    worst = max(r["relative_gap"] for r in report.values())
    return 0 if worst <= args.tol else 1


def cmd_verify(args) -> int:
    from .verify import run_verification

    _set_threads(args.threads)
    results = run_verification(quick=args.quick, only=args.only)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  ({r.elapsed:.1f}s)  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bfdlab",
        description="numerical laboratory for the quantum Boltzmann dynamics "
                    "of Fermi-Dirac particles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configured problem")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the pipeline over a list of quantum parameters")
    _add_common(p_sweep)
    p_sweep.add_argument("--epsilons", default=None,
                         help="comma-separated absolute quantum parameters")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eq = sub.add_parser("equilibrium", help="fit equilibrium coefficients and print them")
    _add_common(p_eq)
    p_eq.set_defaults(func=cmd_equilibrium)

    p_cc = sub.add_parser("cancellation-check", help="compare the two sides of the cancellation identity")
    _add_common(p_cc)
    p_cc.add_argument("--lam", type=float, default=1.0, help="lower speed cutoff")
    p_cc.add_argument("--tol", type=float, default=0.01, help="relative agreement tolerance")
    p_cc.set_defaults(func=cmd_cancellation)

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    _add_common(p_ver)
    p_ver.add_argument("--quick", action="store_true",
                       help="reduced problem sizes (minutes instead of hours)")
    p_ver.add_argument("--only", default=None,
                       help="comma-separated subset of check names")
    p_ver.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
