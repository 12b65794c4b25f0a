"""Experiment driver: analytic sweeps, Monte Carlo sweeps, optimizer reports,
analytic-vs-simulated comparison and the distributional validation suite.

Exit codes: 0 success, 1 config/schema error, 2 simulation aborted (too many
discarded trials), 3 validation check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

from .analytic import activity_probs, coverage_hetnet_sir, coverage_homnet_sir, coverage_random, hetnet_activity
from .config import ConfigError, ExperimentConfig, load_config
from .model import OccupancyModel, derive_ratios
from .optimize import (
    SmallGammaWarning,
    grid_search_hetnet,
    optimal_threshold_homnet,
    optimal_threshold_search,
    optimal_thresholds_hetnet,
)
from .sim import RandomPolicy, SimulationAborted, ThresholdPolicy, analytic_active_fraction, estimate_sweep

log = logging.getLogger("onoffcov")

COLUMNS = ["sweep_var", "analytic_exact", "analytic_approx", "simulated_mean", "simulated_stderr",
           "p_a", "p_1", "trials"]

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_CHECK = 0, 1, 2, 3

DEFAULT_VALIDATE_TRIALS = 200


def _version() -> str:
    try:
        return metadata.version("onoffcov")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# Table construction
# ---------------------------------------------------------------------------

def _plan(cfg: ExperimentConfig) -> list[dict[str, Any]]:
    """One entry per output row: its keys and the policy to simulate."""
    rows = []
    if cfg.sweep == "threshold":
        for (th,) in cfg.thresholds:
            rows.append({"key": (th,), "sweep_var": th, "policy": ThresholdPolicy((th,))})
    elif cfg.sweep == "threshold_grid":
        for th in cfg.thresholds:
            row = {"key": th, "sweep_var": ",".join(str(t) for t in th), "policy": ThresholdPolicy(th)}
            row.update({f"theta_{i + 1}": t for i, t in enumerate(th)})
            rows.append(row)
    else:  # random_vs_threshold, keyed by the off-probability of each threshold
        gamma = derive_ratios(cfg.spec).gamma
        for (th,) in cfg.thresholds:
            p_a = activity_probs(th, gamma).p_active
            off = 1.0 - p_a
            rows.append({"key": (off, 1), "sweep_var": off, "policy_kind": "threshold", "parameter": th,
                         "policy": ThresholdPolicy((th,))})
            rows.append({"key": (off, 0), "sweep_var": off, "policy_kind": "random", "parameter": p_a,
                         "policy": RandomPolicy(p_a)})
    rows.sort(key=lambda r: r["key"])
    return rows


def _analytic_columns(cfg: ExperimentConfig, row: dict) -> dict:
    spec, T, alpha = cfg.spec, cfg.spec.target_sinr, cfg.spec.pathloss_exponent
    policy = row["policy"]
    out: dict[str, Any] = {}
    if isinstance(policy, RandomPolicy):
        gamma = derive_ratios(spec).gamma
        if cfg.sinr is None:
            out["analytic_exact"] = coverage_random(T, gamma, policy.q, alpha, OccupancyModel.EXACT_GAMMA)
            out["analytic_approx"] = coverage_random(T, gamma, policy.q, alpha, OccupancyModel.POISSON)
        out["p_a"] = analytic_active_fraction(spec, policy)
        return out
    th = policy.thresholds
    het_spec = spec.with_thresholds(th)
    if cfg.sinr is None:
        if spec.num_tiers == 1:
            gamma = derive_ratios(spec).gamma
            out["analytic_exact"] = coverage_homnet_sir(T, gamma, th[0], alpha, OccupancyModel.EXACT_GAMMA)
            out["analytic_approx"] = coverage_homnet_sir(T, gamma, th[0], alpha, OccupancyModel.POISSON)
        else:
            out["analytic_exact"] = coverage_hetnet_sir(het_spec, OccupancyModel.EXACT_GAMMA)
            out["analytic_approx"] = coverage_hetnet_sir(het_spec, OccupancyModel.POISSON)
    avg = hetnet_activity(het_spec).average
    out["p_a"] = avg.p_active
    out["p_1"] = avg.p_nearest
    return out


def build_table(cfg: ExperimentConfig, analytic: bool, simulate: bool, workers: int = 1) -> tuple[list[str], list[dict]]:
    plan = _plan(cfg)
    columns = list(COLUMNS)
    if cfg.sweep == "threshold_grid":
        columns[1:1] = [f"theta_{i + 1}" for i in range(cfg.spec.num_tiers)]
    elif cfg.sweep == "random_vs_threshold":
        columns[1:1] = ["policy", "parameter"]
    rows = []
    for entry in plan:
        row = {c: entry.get(c) for c in columns}
        if "policy_kind" in entry:
            row["policy"] = entry["policy_kind"]
        if analytic:
            row.update(_analytic_columns(cfg, entry))
        rows.append(row)
    if simulate:
        if cfg.trials is None:
            raise ConfigError("trials", "required for simulation")
        ests = estimate_sweep(cfg.spec, cfg.region, [e["policy"] for e in plan], cfg.trials,
                              cfg.master_seed, cfg.sinr, workers)
        for row, est in zip(rows, ests):
            row["simulated_mean"] = est.mean
            row["simulated_stderr"] = est.std_error
            row["trials"] = est.trials
    return columns, rows


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("nan" if math.isnan(value) else str(value))
    return str(value)


def render_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _json_value(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render_json(cfg: ExperimentConfig, columns: list[str], rows: list[dict]) -> str:
    doc: dict[str, Any] = {"columns": columns,
                           "rows": [[_json_value(r.get(c)) for c in columns] for r in rows]}
    if cfg.sweep == "threshold_grid" and cfg.spec.num_tiers == 2:
        axes = [sorted({r["theta_1"] for r in rows}), sorted({r["theta_2"] for r in rows})]
        lookup = {(r["theta_1"], r["theta_2"]): r for r in rows}
        grid = {}
        for col in ("analytic_exact", "analytic_approx", "simulated_mean", "simulated_stderr", "p_a", "p_1"):
            grid[col] = [[_json_value(lookup[(a, b)].get(col)) for b in axes[1]] for a in axes[0]]
        doc["grid"] = {"theta_1": axes[0], "theta_2": axes[1], "values": grid}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _write_outputs(args, cfg: ExperimentConfig, columns, rows, command: str) -> None:
    text = render_json(cfg, columns, rows) if args.format == "json" else render_csv(columns, rows)
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    manifest = {
        "command": command,
        "package_version": _version(),
        "config_file": str(args.config),
        "format": args.format,
        "resolved_config": cfg.resolved(),
    }
    out.with_name(out.name + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.seed, args.trials)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def cmd_analytic(args) -> int:
    cfg = _load(args)
    if cfg.trials is not None:
        print("warning: trials given but the analytic command uses no simulation; ignoring", file=sys.stderr)
    if cfg.sinr is not None:
        print("warning: closed-form coverage columns are SIR-only; left blank in SINR mode", file=sys.stderr)
    columns, rows = build_table(cfg, analytic=True, simulate=False)
    _write_outputs(args, cfg, columns, rows, "analytic")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    columns, rows = build_table(cfg, analytic=False, simulate=True, workers=args.threads)
    _write_outputs(args, cfg, columns, rows, "simulate")
    return EXIT_OK


def _max_gap(rows: Sequence[dict]) -> tuple[float, Any]:
    worst, where = -1.0, None
    for r in rows:
        a, s = r.get("analytic_exact"), r.get("simulated_mean")
        if a is None or s is None:
            continue
        if abs(s - a) > worst:
            worst, where = abs(s - a), r["sweep_var"]
    return worst, where


def _argmax(rows: Sequence[dict], col: str) -> Any:
    best = None
    for r in rows:
        if r.get(col) is not None and (best is None or r[col] > best[col]):
            best = r
    return None if best is None else best["sweep_var"]


def _read_table(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            row: dict[str, Any] = {}
            for k, v in rec.items():
                if v == "":
                    row[k] = None
                    continue
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            out.append(row)
        return out


def _report(rows: Sequence[dict]) -> None:
    gap, where = _max_gap(rows)
    print(f"max |simulated - analytic_exact| = {gap:.4f} at sweep_var={where}")
    thresholds = [r for r in rows if r.get("policy") in (None, "threshold")]
    for col in ("analytic_exact", "analytic_approx", "simulated_mean"):
        print(f"argmax {col}: sweep_var={_argmax(thresholds, col)}")


def cmd_run(args) -> int:
    cfg = _load(args)
    columns, rows = build_table(cfg, analytic=True, simulate=True, workers=args.threads)
    _write_outputs(args, cfg, columns, rows, "run")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.analytic_table and args.simulated_table:
        analytic = _read_table(args.analytic_table)
        simulated = _read_table(args.simulated_table)
        key = [c for c in ("sweep_var", "policy", "parameter", "theta_1", "theta_2") if c in analytic[0]]
        sim_index = {tuple(r[k] for k in key): r for r in simulated}
        rows = []
        for r in analytic:
            match = sim_index.get(tuple(r[k] for k in key))
            if match is None:
                raise ConfigError("simulated_table", f"no row for {dict((k, r[k]) for k in key)}")
            merged = dict(r)
            merged["simulated_mean"] = match.get("simulated_mean")
            merged["simulated_stderr"] = match.get("simulated_stderr")
            merged["trials"] = match.get("trials")
            rows.append(merged)
        _report(rows)
        return EXIT_OK
    if args.config is None:
        raise ConfigError("--config", "required unless both --analytic-table and --simulated-table are given")
    cfg = _load(args)
    columns, rows = build_table(cfg, analytic=True, simulate=True, workers=args.threads)
    _write_outputs(args, cfg, columns, rows, "compare")
    _report(rows)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    spec = cfg.spec
    ratios = derive_ratios(spec)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SmallGammaWarning)
        if spec.num_tiers == 1:
            closed = optimal_threshold_homnet(spec.target_sinr, ratios.gamma, spec.pathloss_exponent, cfg.occupancy)
            exhaustive = optimal_threshold_search(spec.target_sinr, ratios.gamma, spec.pathloss_exponent,
                                                  cfg.theta_max, cfg.occupancy, with_trace=args.trace)
            report = {"closed_form": closed.as_dict(), "exhaustive": exhaustive.as_dict()}
        else:
            closed = optimal_thresholds_hetnet(spec, cfg.occupancy, "closed_form")
            exhaustive = optimal_thresholds_hetnet(spec, cfg.occupancy, "exhaustive", cfg.theta_max)
            report = {"closed_form": closed.as_dict(), "exhaustive": exhaustive.as_dict()}
            if spec.num_tiers == 2 and args.grid:
                report["grid"] = grid_search_hetnet(spec, cfg.theta_max, cfg.occupancy).as_dict()
    report["weighted_gammas"] = list(ratios.weighted_gammas)
    report["occupancy"] = cfg.occupancy.value
    if cfg.sinr is not None:
        report["note"] = "thresholds optimize the interference-limited coverage"
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_suite

    cfg = _load(args)
    trials = cfg.trials or DEFAULT_VALIDATE_TRIALS
    checks = run_suite(cfg.spec, cfg.region, cfg.thresholds, trials, cfg.master_seed,
                       samples=args.samples, workers=args.threads)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onoffcov",
                                     description="Coverage of cellular networks with load-based BS on/off control.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log discarded trials and progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML or JSON experiment config")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--trials", type=int, help="override the configured trial count")
        p.add_argument("--seed", type=int, help="override the configured master seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")

    for name, fn, helptext in (
        ("analytic", cmd_analytic, "closed-form sweep, no random numbers"),
        ("simulate", cmd_simulate, "Monte Carlo sweep only"),
        ("run", cmd_run, "analytic and Monte Carlo sweep in one table"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("compare", help="analytic vs simulated table with max |difference|")
    common(p, config_required=False)
    p.add_argument("--analytic-table", help="join an existing analytic CSV ...")
    p.add_argument("--simulated-table", help="... with an existing simulated CSV instead of recomputing")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("optimize", help="closed-form and exhaustive optimal thresholds")
    common(p)
    p.add_argument("--trace", action="store_true", help="include the derivative trace (single tier)")
    p.add_argument("--grid", action="store_true", help="also run the full two-tier grid search")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", help="distributional checks of the simulator")
    common(p)
    p.add_argument("--samples", type=int, default=10_000, help="samples for the distance tests")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.trials is not None and args.trials < 1:
        parser.error("--trials must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
