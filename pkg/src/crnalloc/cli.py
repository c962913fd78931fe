"""Command-line interface.

    crnalloc run --config cfg.json [--set key=value ...] [--out DIR]
                 [--seed N] [--realizations N] [--parallel N]
    crnalloc verify
    crnalloc plotdata --in results.csv --out DIR

Exit codes: 0 success, 1 configuration error, 2 I/O error.
Any config key can also be overridden through the environment with the
CRNALLOC_ prefix (dots become double underscores), e.g.
CRNALLOC_SCENARIO__NUM_SUBCARRIERS=32.
"""

from __future__ import annotations

import argparse
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crnalloc",
        description="Cooperative spectrum-sharing resource allocation "
                    "experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo sweep experiment")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                     dest="overrides", help="dotted-path config override")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--realizations", type=int, default=None)
    run.add_argument("--parallel", type=int, default=None)

    sub.add_parser("verify",
                   help="cross-check the closed-form solvers against "
                        "brute-force oracles on small random inputs")

    plot = sub.add_parser("plotdata", help="emit per-figure series files")
    plot.add_argument("--in", dest="input", required=True,
                      help="results CSV produced by `run`")
    plot.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_run(args) -> int:
    import dataclasses

    from .harness import ConfigError, load_config, run_experiment

    overrides = list(args.overrides)
    try:
        config = load_config(args.config, overrides=overrides)
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.realizations is not None:
            updates["realizations"] = args.realizations
        if args.parallel is not None:
            updates["parallel"] = args.parallel
        if updates:
            config = dataclasses.replace(config, **updates)
            config.validate()
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        csv_path = run_experiment(config, args.out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {csv_path}")
    return 0


def _cmd_verify(args) -> int:
    import numpy as np

    from .model import Mode
    from .oracle import GridSpec, oracle_subproblem
    from .persub import (ModeInputs, solve_direct_pu, solve_direct_su,
                         solve_oneway_df, solve_twoway)

    rng = np.random.default_rng(2024)
    grid = GridSpec()
    failures = 0
    for i in range(20):
        def g():
            return float(10.0 ** rng.uniform(-2, 2))

        def m():
            return float(10.0 ** rng.uniform(-2, 1))

        mi = ModeInputs(gamma=g(), gamma1=g(), gamma2=g(), gamma_s=g(),
                        lam_p1=m(), lam_p2=m(), lam_s=m(),
                        beta_p1=m(), beta_p2=m(), su_weight=1.0)
        checks = [
            (Mode.DIRECT_PU,
             solve_direct_pu(mi.gamma, mi.lam_p1, mi.beta_p2).dual_value),
            (Mode.DIRECT_SU,
             solve_direct_su(mi.gamma_s, mi.lam_s, mi.su_weight).dual_value),
            (Mode.ONEWAY_DF,
             solve_oneway_df(mi.gamma, mi.gamma1, mi.gamma2, mi.gamma_s,
                             mi.lam_p1, mi.lam_s, mi.beta_p2,
                             mi.su_weight).dual_value),
            (Mode.TWOWAY_DF,
             solve_twoway(mi.gamma1, mi.gamma2, mi.lam_p1, mi.lam_p2,
                          mi.lam_s, mi.beta_p1, mi.beta_p2).dual_value),
        ]
        for mode, closed in checks:
            oracle = oracle_subproblem(mi, mode, grid).value
            ok = closed >= oracle - max(0.01 * abs(oracle), 1e-6)
            status = "ok" if ok else "FAIL"
            failures += 0 if ok else 1
            print(f"[{status}] input {i} {mode.name}: closed={closed:.6f} "
                  f"oracle={oracle:.6f}")
    print(f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def _cmd_plotdata(args) -> int:
    from .harness import emit_plot_data

    try:
        paths = emit_plot_data(args.input, args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    return _cmd_plotdata(args)


if __name__ == "__main__":
    sys.exit(main())
