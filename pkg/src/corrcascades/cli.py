"""Command-line entry points: simulate, fit, evaluate, replicate-synthetic.

Exit codes: 0 success, 1 usage or parse error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import EventLog
from .fitting import FitConfig, cross_validate_beta, default_worker_count, fit_all
from .io import FileFormatError, read_event_log, read_params, write_curves_csv, write_event_log, write_params
from .likelihood import InfeasibleLikelihoodError
from .metrics import avg_pred_loglik, compare_models
from .replicate import run_incentivization, run_recovery
from .simulate import SimConfig, simulate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="corrcascades")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="sample an event log from a parameter file")
    p_sim.add_argument("--params", required=True)
    p_sim.add_argument("--horizon", type=float, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--max-events", type=int, default=10_000_000)
    p_sim.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="fit parameters to an event log")
    p_fit.add_argument("--events", required=True)
    group = p_fit.add_mutually_exclusive_group()
    group.add_argument("--beta", type=float)
    group.add_argument("--beta-grid", type=str, help="comma-separated betas for cross-validation")
    p_fit.add_argument("--holdout", type=float, default=0.2)
    p_fit.add_argument("--init-value", type=float, default=0.01)
    p_fit.add_argument("--inner-max-iter", type=int, default=500)
    p_fit.add_argument("--out-params", required=True)
    p_fit.add_argument("--out-report", required=True)

    p_eval = sub.add_parser("evaluate", help="score a fitted model on a held-out window")
    p_eval.add_argument("--train", required=True)
    p_eval.add_argument("--test", required=True)
    p_eval.add_argument("--params", required=True)
    p_eval.add_argument("--bins", type=int, default=100)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)

    p_rep = sub.add_parser("replicate-synthetic", help="run a synthetic experiment pipeline")
    p_rep.add_argument("figure", choices=["recovery", "incentivization"])
    p_rep.add_argument("--seed", type=int, default=0)
    p_rep.add_argument("--outdir", required=True)
    p_rep.add_argument("--n-users", type=int, default=50)
    p_rep.add_argument("--n-products", type=int, default=None)
    p_rep.add_argument("--train-events", type=int, default=20_000)
    p_rep.add_argument("--test-events", type=int, default=2_000)
    p_rep.add_argument("--horizon", type=float, default=200.0)
    p_rep.add_argument("--switch-time", type=float, default=100.0)
    p_rep.add_argument("--bins", type=float, default=2.0, help="bin width for scenario curves")
    return parser


def _cmd_simulate(args) -> int:
    params = read_params(args.params)
    log = simulate(
        params,
        SimConfig(horizon=args.horizon, seed=args.seed, max_events=args.max_events),
    )
    write_event_log(log, args.out)
    print(f"wrote {len(log)} events to {args.out}")
    for p in range(log.n_products):
        print(f"product {p}: {int((log.products == p).sum())} events")
    return EXIT_OK


def _default_beta_grid() -> list[float]:
    return [0.01, 0.1, 1.0, 10.0, 100.0]


def _cmd_fit(args) -> int:
    log = read_event_log(args.events)
    config = FitConfig(
        beta=1.0,
        init_value=args.init_value,
        inner_max_iter=args.inner_max_iter,
        n_workers=default_worker_count(),
    )
    if args.beta is not None:
        beta = args.beta
        scores = None
    else:
        grid = (
            [float(x) for x in args.beta_grid.split(",")]
            if args.beta_grid
            else _default_beta_grid()
        )
        beta, scores = cross_validate_beta(log, grid, args.holdout, config)
        print(f"cross-validation selected beta={beta:g}")
    from dataclasses import replace

    params, report = fit_all(log, replace(config, beta=beta))
    write_params(params, args.out_params)
    with Path(args.out_report).open("w", newline="") as fh:
        fh.write("user,nll,outer_iterations,inner_iterations,converged,grad_norm,wall_time\n")
        for e in report.entries:
            fh.write(
                f"{e.user},{e.nll!r},{e.outer_iterations},{e.inner_iterations},"
                f"{e.converged},{e.grad_norm!r},{e.wall_time:.3f}\n"
            )
        if scores is not None:
            for b, s in scores:
                fh.write(f"# beta={b!r} score={s!r}\n")
        fh.write(f"# chosen_beta={beta!r}\n")
    n_bad = sum(not e.converged for e in report.entries)
    if n_bad:
        print(f"warning: {n_bad} of {len(report.entries)} users did not converge", file=sys.stderr)
    print(f"wrote parameters to {args.out_params}")
    return EXIT_OK


def _shift_to_window(log: EventLog, t_start: float) -> EventLog:
    mask = log.times >= t_start
    return EventLog(
        zip(log.times[mask] - t_start, log.users[mask], log.products[mask]),
        log.horizon - t_start,
        log.n_users,
        log.n_products,
    )


def _cmd_evaluate(args) -> int:
    train = read_event_log(args.train)
    test = read_event_log(args.test)
    params = read_params(args.params)
    if test.times.size and test.times[0] < train.horizon:
        raise UsageError("test window must start at the train horizon")
    score = avg_pred_loglik(train, test, params)
    generated = simulate(
        params,
        SimConfig(horizon=test.horizon, seed=args.seed, initial_history=train),
    )
    window = test.horizon - train.horizon
    bin_width = window / args.bins
    real_w = _shift_to_window(test, train.horizon)
    gen_w = _shift_to_window(generated, train.horizon)
    rows = compare_models(real_w, [("model", gen_w)], bin_width)
    with Path(args.out).open("w", newline="") as fh:
        fh.write("metric,product,value\n")
        fh.write(f"avg_pred_loglik,all,{score!r}\n")
        for r in rows:
            tag = "all" if r.product is None else str(r.product)
            fh.write(f"pearson,{tag},{r.pearson!r}\n")
            fh.write(f"inv_l1,{tag},{r.inv_l1!r}\n")
            fh.write(f"n_events_real,{tag},{r.n_events_real}\n")
            fh.write(f"n_events_generated,{tag},{r.n_events_generated}\n")
    print(f"avg_pred_loglik={score:.6f}; wrote metrics to {args.out}")
    return EXIT_OK


def _cmd_replicate(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.figure == "recovery":
        n_products = args.n_products if args.n_products is not None else 5
        result = run_recovery(
            seed=args.seed,
            n_users=args.n_users,
            n_products=n_products,
            train_events=args.train_events,
            test_events=args.test_events,
            fit_config=FitConfig(n_workers=default_worker_count()),
        )
        path = outdir / "recovery.csv"
        with path.open("w", newline="") as fh:
            fh.write(
                "fraction,events_per_user,n_train_events,mse,mae,mse_alpha,mae_alpha,avg_pred_loglik\n"
            )
            for r in result.rows:
                fh.write(
                    f"{r.fraction!r},{r.events_per_user!r},{r.n_train_events},"
                    f"{r.mse!r},{r.mae!r},{r.mse_alpha!r},{r.mae_alpha!r},{r.avg_pred_loglik!r}\n"
                )
        print(f"wrote {path}")
    else:
        n_products = args.n_products if args.n_products is not None else 3
        result = run_incentivization(
            seed=args.seed,
            n_users=args.n_users,
            n_products=n_products,
            horizon=args.horizon,
            switch_time=args.switch_time,
            bin_width=args.bins,
        )
        for run in result.runs:
            write_curves_csv({run.label: run.intensity}, outdir / f"intensity_{run.label}.csv")
            write_curves_csv({run.label: run.share}, outdir / f"market_share_{run.label}.csv")
            write_event_log(run.result.log, outdir / f"events_{run.label}.csv")
        print(f"wrote {2 * len(result.runs)} curve files to {outdir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        return _cmd_replicate(args)
    except (InfeasibleLikelihoodError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileFormatError, FileNotFoundError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
