"""Command-line entry point.

Subcommands: simulate, table1, train-toy, extrapolate, validate. All
behavior is flag-driven and deterministic given (config, seed); re-runs
produce identical artifacts.

Exit codes: 0 success, 2 configuration error, 3 timeline validation
failure, 4 verification mismatch, 5 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import costs as costs_mod
from .comm import scheduled_timeline
from .costs import (
    Table1Params,
    builtin_heterogeneous_profile,
    extrapolate_series,
    extrapolation_report,
    measure_costs,
    pass_series,
    triangular_series,
)
from .export import (
    cost_report_to_csv,
    extrapolation_to_csv,
    series_to_svg,
    table1_to_csv,
    timeline_to_svg,
    timeline_to_text,
    trajectories_to_csv,
)
from .profiles import (
    CostWeights,
    ModelProfile,
    ParallelismConfig,
    ProfileError,
    Scheme,
    load_profile,
    make_homogeneous_profile,
)
from .schedule import validate_timeline
from .training import make_mlp_task, make_quadratic_task, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_MISMATCH = 4
EXIT_DIVERGENCE = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        self.code = code
        super().__init__(message)


@dataclass
class RunConfig:
    scenario: str
    cfg: ParallelismConfig
    profile: ModelProfile
    out_dir: Path
    formats: tuple[str, ...]
    rule: str
    seed: int = 0


def _parse_formats(text: str) -> tuple[str, ...]:
    formats = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = set(formats) - {"csv", "svg", "text"}
    if bad:
        raise CliError(f"unknown output formats: {sorted(bad)}")
    if not formats:
        raise CliError("at least one output format is required")
    return formats


def _load_profile_args(args, n: int) -> ModelProfile:
    if args.profile:
        try:
            profile = load_profile(args.profile)
        except ProfileError as exc:
            raise CliError(f"profile error at {exc.path}: {exc}") from exc
        if profile.n_stages != n:
            raise CliError(
                f"profile has {profile.n_stages} stages but n={n} was requested"
            )
        return profile
    try:
        return make_homogeneous_profile(
            n, args.total_params, args.total_acts, args.boundary_acts
        )
    except ProfileError as exc:
        raise CliError(str(exc)) from exc


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def cmd_simulate(args) -> int:
    try:
        scheme = Scheme(args.scheme)
        cfg = ParallelismConfig(
            scheme=scheme,
            n=args.n,
            micro_batch_size=args.batch,
            training_steps=args.training_steps,
            cost_weights=CostWeights(args.forward_cost, args.backward_cost),
        )
        profile = _load_profile_args(args, args.n)
        run = RunConfig(
            scenario=f"{scheme.value}-n{args.n}",
            cfg=cfg,
            profile=profile,
            out_dir=Path(args.out),
            formats=_parse_formats(args.formats),
            rule=args.rule,
        )
    except (CliError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    tl = scheduled_timeline(run.cfg, run.profile, run.rule)
    report = validate_timeline(tl)
    if not report.ok:
        for v in report.violations:
            print(f"violation[{v.kind}]: {v.message}", file=sys.stderr)
        return EXIT_VALIDATION
    if "text" in run.formats:
        print(_write(run.out_dir, "timeline.txt", timeline_to_text(tl)))
    if "svg" in run.formats:
        print(_write(run.out_dir, "timeline.svg", timeline_to_svg(tl)))
    if "csv" in run.formats:
        measured = measure_costs(tl, run.profile)
        print(
            _write(
                run.out_dir,
                "costs.csv",
                cost_report_to_csv(measured, run.cfg.scheme.value, run.cfg.n),
            )
        )
    return EXIT_OK


def cmd_table1(args) -> int:
    try:
        n_values = [int(v) for v in args.n_values.split(",") if v.strip()]
        params = Table1Params(
            total_params=args.total_params,
            total_acts=args.total_acts,
            boundary_acts=args.boundary_acts,
            batch=args.batch,
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = costs_mod.verify_table1(n_values, params)
    except (ProfileError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write(Path(args.out), "table1.csv", table1_to_csv(rows))
    failures = [r for r in rows if not r.equal]
    for row in rows:
        status = "ok" if row.equal else f"MISMATCH {','.join(row.mismatches)}"
        degenerate = " degenerate" if row.degenerate_fields else ""
        print(f"{row.scheme.value:>14} n={row.n:<3} {status}{degenerate}")
    if failures:
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_train_toy(args) -> int:
    try:
        if args.config:
            doc = json.loads(Path(args.config).read_text())
            task_kind = doc.get("task", "quadratic")
            n = int(doc.get("n", 4))
            batch = int(doc.get("micro_batch_size", 2))
            steps = int(doc.get("steps", 200))
            lr = float(doc.get("lr", 0.1))
            seed = int(doc.get("seed", 0))
            rules = tuple(doc.get("rules", ["dp", "cdp-v1", "cdp-v2"]))
            momentum = float(doc.get("momentum", 0.0))
        else:
            task_kind, n, batch = args.task, args.n, args.batch
            steps, lr, seed = args.steps, args.lr, args.seed
            rules = tuple(r.strip() for r in args.rules.split(",") if r.strip())
            momentum = args.momentum
        if task_kind in ("quadratic", "quad"):
            task = make_quadratic_task(n, batch, seed)
        elif task_kind == "mlp":
            task = make_mlp_task(n, batch, seed)
        else:
            raise CliError(f"unknown task {task_kind!r}")
    except (CliError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    result = run_experiment(task, rules, steps=steps, lr=lr, momentum=momentum)
    out_dir = Path(args.out)
    _write(out_dir, "trajectories.csv", trajectories_to_csv(result))
    summary = {
        "task": task_kind,
        "n": n,
        "micro_batch_size": batch,
        "steps": steps,
        "lr": lr,
        "seed": seed,
        "momentum": momentum,
        "final_losses": result.final_losses(),
        "max_pairwise_trajectory_divergence": result.max_pairwise_divergence(),
        "diverged": {
            name: run.diverged_at for name, run in result.runs.items()
        },
    }
    _write(out_dir, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    diverged = {n_: d for n_, d in summary["diverged"].items() if d is not None}
    if diverged:
        for name, step in diverged.items():
            print(f"divergence: rule {name} at step {step}", file=sys.stderr)
        return EXIT_DIVERGENCE
    for name, loss in result.final_losses().items():
        print(f"{name:>8} final loss {loss:.6e}")
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    try:
        n_values = [int(v) for v in args.n_values.split(",") if v.strip()]
        if args.series:
            doc = json.loads(Path(args.series).read_text())
            if not isinstance(doc, list) or not doc:
                raise CliError("series file must hold a non-empty JSON array")
            series = [int(v) for v in doc]
            label = Path(args.series).stem
        elif args.triangular:
            series = triangular_series(args.triangular)
            label = f"triangular-{args.triangular}"
        else:
            series = pass_series(builtin_heterogeneous_profile())
            label = "heterogeneous"
        for n in n_values:
            if len(series) % n:
                raise CliError(
                    f"series length {len(series)} is not divisible by n={n}"
                )
    except (CliError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows = extrapolation_report(series, n_values)
    series_by_n = {}
    for n in n_values:
        dp_series, _ = extrapolate_series(series, n, "dp")
        cdp_series, _ = extrapolate_series(series, n, "cdp")
        series_by_n[n] = (dp_series, cdp_series)
    out_dir = Path(args.out)
    _write(out_dir, "extrapolation.csv", extrapolation_to_csv(rows, series_by_n))
    plot = {"input": series}
    for n in n_values:
        plot[f"cdp-n{n}"] = series_by_n[n][1]
    _write(out_dir, "extrapolation.svg", series_to_svg(plot))
    for row in rows:
        print(
            f"{label} n={row.n}: dp_peak={row.dp_peak} cdp_peak={row.cdp_peak} "
            f"ratio={row.ratio} (~{float(row.ratio):.4f})"
        )
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scheme = Scheme(args.scheme)
        cfg = ParallelismConfig(
            scheme=scheme,
            n=args.n,
            micro_batch_size=args.batch,
            training_steps=args.training_steps,
        )
        profile = _load_profile_args(args, args.n)
    except (CliError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tl = scheduled_timeline(cfg, profile, args.rule)
    report = validate_timeline(tl)
    if report.ok:
        print(f"{scheme.value} n={args.n}: ok ({len(tl.tasks)} tasks)")
        return EXIT_OK
    for v in report.violations:
        print(f"violation[{v.kind}]: {v.message}", file=sys.stderr)
    return EXIT_VALIDATION


def _add_profile_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", help="path to a profile JSON file")
    p.add_argument("--total-params", type=int, default=480)
    p.add_argument("--total-acts", type=int, default=4800)
    p.add_argument("--boundary-acts", type=int, default=240)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclicdp",
        description="Deterministic simulator for cyclic data-parallel schedules",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="build, validate and export one timeline")
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--training-steps", type=int, default=4)
    p.add_argument("--rule", default="cdp-v2")
    p.add_argument("--forward-cost", type=int, default=1)
    p.add_argument("--backward-cost", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--formats", default="csv,svg,text")
    _add_profile_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table1", help="closed-form versus measured cost table")
    p.add_argument("--n-values", default="2,3,4,8")
    p.add_argument("--total-params", type=int, default=480)
    p.add_argument("--total-acts", type=int, default=4800)
    p.add_argument("--boundary-acts", type=int, default=240)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("train-toy", help="run the update rules on a toy task")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--task", default="quadratic", choices=["quadratic", "quad", "mlp"])
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--rules", default="dp,cdp-v1,cdp-v2")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("extrapolate", help="per-worker activation memory for n workers")
    p.add_argument("--series", help="JSON array of memory samples for one pass")
    p.add_argument("--triangular", type=int, help="use the n-stage homogeneous series")
    p.add_argument("--n-values", default="4,8,32")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("validate", help="build one timeline and report violations")
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--training-steps", type=int, default=4)
    p.add_argument("--rule", default="cdp-v2")
    _add_profile_args(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
