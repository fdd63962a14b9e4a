"""Command-line interface.

Subcommands
-----------
optimize     fit an allocation to a gain dataset (JSON on stdout)
meta-train   learn an initialization from per-deployment datasets
evaluate     report mean / outage / tail-average rates of an allocation
bound        finite-sample guarantee values for a dataset size
baseline     known-distribution infinite-layer reference rate
experiment   seeded scenario sweep writing CSV (and a PNG figure)

Exit codes: 0 on success, 2 on configuration or usage errors, 3 on
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import NumericalError, ParameterError
from .fading import GainDataset, Rayleigh, model_from_json
from .harness import ExperimentSpec, evaluate, rows_to_json, run_experiment
from .ldm import LayerAllocation, RiskSpec
from .meta import MetaConfig, TaskSet, maml_train
from .optim import OptimConfig, optimize
from .risk import RiskReport
from .theory import (
    BoundReport,
    ccdf_deviation_bound,
    cvar_gap_bound,
    expected_rate_gap_bound,
    infinite_layer_rate,
    rayleigh_closed_form,
)

__all__ = ["main", "entry"]


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.exists():
        if path.lstrip().startswith(("{", "[")):
            return path  # inline JSON instead of a file
        raise ParameterError(f"{what} file not found: {path}")
    return p.read_text()


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _risk_spec(args) -> RiskSpec:
    return RiskSpec(
        beta=args.beta,
        power=float(10.0 ** (args.power_db / 10.0)),
        c=args.c,
    )


def _cmd_optimize(args) -> int:
    config = OptimConfig.from_json(_read_text(args.config, "config")) if args.config else OptimConfig()
    if args.m is not None:
        config.m = args.m
    if args.seed is not None:
        config.seed = args.seed
    data = GainDataset.from_csv(args.data)
    alloc, trace = optimize(data, _risk_spec(args), config)
    if args.trace:
        trace.to_csv(args.trace)
    _write_or_print(alloc.to_json(), args.out)
    return 0


def _cmd_meta_train(args) -> int:
    config = MetaConfig.from_json(_read_text(args.config, "config")) if args.config else MetaConfig()
    if args.m is not None:
        config.m = args.m
    if args.seed is not None:
        config.seed = args.seed
    source = Path(args.tasks)
    if source.is_dir():
        tasks = TaskSet.from_dir(source)
    else:
        tasks = TaskSet.from_json(_read_text(args.tasks, "tasks"))
    u, lam, trace = maml_train(tasks, _risk_spec(args), config)
    if args.trace:
        trace.to_csv(args.trace)
    payload = json.dumps(
        {
            "u": [float(v) for v in u],
            "lambda": [float(v) for v in lam],
            "objective": float(trace.objectives[-1]),
        },
        indent=2,
    )
    _write_or_print(payload, args.out)
    return 0


def _cmd_evaluate(args) -> int:
    alloc = LayerAllocation.from_json(_read_text(args.alloc, "allocation"))
    if (args.data is None) == (args.model is None):
        raise ParameterError("evaluate needs exactly one of --data or --model")
    population = (
        GainDataset.from_csv(args.data)
        if args.data
        else model_from_json(_read_text(args.model, "model"))
    )
    report = evaluate(alloc, population, _risk_spec(args))
    if args.format == "csv":
        text = RiskReport.csv_header() + "\n" + report.to_csv_row()
    else:
        text = report.to_json()
    _write_or_print(text, args.out)
    return 0


def _cmd_bound(args) -> int:
    power = float(10.0 ** (args.power_db / 10.0))
    kind = args.kind
    if kind == "cvar-gap":
        value = cvar_gap_bound(args.n, args.delta, args.beta, args.s, power)
    elif kind == "expected-gap":
        value = expected_rate_gap_bound(args.n, args.delta, args.s, power)
    else:
        value = ccdf_deviation_bound(args.n, args.delta)
    report = BoundReport(
        n=args.n,
        delta=args.delta,
        beta=args.beta,
        s_bound=args.s,
        power=power,
        bound_value=value,
        kind=kind.replace("-", "_"),
    )
    _write_or_print(report.to_json(), args.out)
    return 0


def _cmd_baseline(args) -> int:
    power = float(10.0 ** (args.power_db / 10.0))
    if args.model:
        model = model_from_json(_read_text(args.model, "model"))
        solution = infinite_layer_rate(model, power)
        payload = solution.to_dict()
        payload["method"] = "quadrature"
    else:
        payload = {
            "expected_rate": rayleigh_closed_form(power, args.var),
            "method": "closed-form",
        }
    payload["power_db"] = args.power_db
    _write_or_print(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec.from_json(_read_text(args.config, "config"))
    if args.seed is not None:
        spec.seed = args.seed
    rows = run_experiment(spec, out=args.out, plot=bool(args.out) and not args.no_plot)
    if args.format == "json":
        print(rows_to_json(rows))
    else:
        print("arm,sweep,mean,stderr,reps")
        for r in rows:
            print(f"{r.arm},{r.sweep},{r.mean!r},{r.stderr!r},{r.reps}")
    return 0


def _add_common(p: argparse.ArgumentParser, beta: float = 0.1) -> None:
    p.add_argument("--beta", type=float, default=beta, help="tail fraction in (0, 1]")
    p.add_argument("--power-db", type=float, default=20.0, help="transmit power in dB")
    p.add_argument("--c", type=float, default=10.0, help="sigmoid smoothing slope")
    p.add_argument("--out", default=None, help="also write the output to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvar-ldm",
        description="Layered-broadcast rate/power allocation from channel-gain data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="fit an allocation to a gain dataset")
    p.add_argument("--data", required=True, help="gain CSV (header 'gain')")
    p.add_argument("--m", type=int, default=None, help="number of layers")
    p.add_argument("--config", default=None, help="optimizer config JSON")
    p.add_argument("--seed", type=int, default=None, help="seed for random init")
    p.add_argument("--trace", default=None, help="write objective trace CSV here")
    _add_common(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("meta-train", help="learn an initialization across deployments")
    p.add_argument("--tasks", required=True, help="directory of gain CSVs or task JSON")
    p.add_argument("--m", type=int, default=None, help="number of layers")
    p.add_argument("--config", default=None, help="meta config JSON")
    p.add_argument("--seed", type=int, default=None, help="seed for the meta start point")
    p.add_argument("--trace", default=None, help="write outer objective CSV here")
    _add_common(p)
    p.set_defaults(func=_cmd_meta_train)

    p = sub.add_parser("evaluate", help="mean/outage/tail-average report for an allocation")
    p.add_argument("--alloc", required=True, help="allocation JSON file")
    p.add_argument("--data", default=None, help="gain CSV to evaluate on")
    p.add_argument("--model", default=None, help="fading model JSON to evaluate on")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("bound", help="finite-sample guarantee value")
    p.add_argument("--n", type=int, required=True, help="dataset size")
    p.add_argument("--delta", type=float, required=True, help="confidence level")
    p.add_argument("--s", type=float, required=True, help="norm bound on the increments")
    p.add_argument(
        "--kind",
        choices=("cvar-gap", "expected-gap", "ccdf-deviation"),
        default="cvar-gap",
    )
    _add_common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("baseline", help="known-distribution infinite-layer rate")
    p.add_argument("--var", type=float, default=1.0, help="Rayleigh scale (mean gain)")
    p.add_argument("--model", default=None, help="fading model JSON (quadrature path)")
    _add_common(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("experiment", help="run a scenario sweep to CSV")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--seed", type=int, default=None, help="override the base seed")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except (ParameterError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
