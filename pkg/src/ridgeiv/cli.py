"""Command-line surface: estimate on user CSVs, simulate from a config file,
and replicate the shipped simulation panels.

Exit codes: 0 success, 2 argument/configuration errors, 3 data errors,
4 estimation errors. Output files are written atomically (temp file plus
rename), and every result document embeds the fully resolved configuration
so it can be re-run from its own provenance block.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from importlib import resources

from . import __version__
from .data import load_dataset_csv, split_indices
from .dgp import SimConfig
from .errors import ConfigError, DataError, EstimationError
from .mc import ESTIMATORS, panel_csv, panel_text, run_panel
from .ridge import RidgeSpec, tune_eta
from .rjive import RjiveConfig, rjive
from .tsrr import EstimateResult, tsrr

SCHEMA_VERSION = 1

PANELS = (
    "nonsparse-A",
    "nonsparse-B",
    "nonsparse-C",
    "sparse-A",
    "sparse-B",
    "sparse-C",
)

EXIT_ARGS = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ridgeiv-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _result_dict(result: EstimateResult) -> dict:
    raw = dataclasses.asdict(result)
    raw["eta_used"] = dataclasses.asdict(result.eta_used)
    return raw


def _split_cols(arg: str | None) -> list[str]:
    if not arg:
        return []
    return [c.strip() for c in arg.split(",") if c.strip()]


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridgeiv",
        description="Two-step ridge IV estimation, simulation, and panel replication.",
    )
    parser.add_argument("--version", action="version", version=f"ridgeiv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a treatment effect from a CSV file")
    est.add_argument("--data", required=True, help="path to the CSV file")
    est.add_argument("--y", required=True, help="outcome column")
    est.add_argument("--d", required=True, help="endogenous treatment column")
    est.add_argument("--x", default="", help="comma-separated control columns")
    est.add_argument("--z", required=True, help="comma-separated excluded-instrument columns")
    est.add_argument("--split-fraction", type=float, default=0.5)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--cx", type=float, default=0.1, help="control-penalty tuning constant")
    est.add_argument("--cz", type=float, default=0.1, help="instrument-penalty tuning constant")
    est.add_argument("--null", type=float, default=0.0, help="Wald null value r")
    est.add_argument("--level", type=float, default=0.95, help="confidence level")
    est.add_argument("--estimator", choices=("tsrr", "rjive"), default="tsrr")
    est.add_argument("--out", default=None, help="write the JSON result document here")

    sim = sub.add_parser("simulate", help="run a Monte Carlo panel from a config file")
    sim.add_argument("--config", required=True, help="path to a simulation config (JSON)")
    sim.add_argument("--estimators", default="tsrr,rjive", help="comma-separated estimators")
    sim.add_argument("--reps", type=int, default=None, help="override replication count")
    sim.add_argument("--seed", type=int, default=None, help="override master seed")
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--out", default=None, help="output directory")

    rep = sub.add_parser("replicate", help="replicate a shipped simulation panel")
    rep.add_argument("--panel", required=True, help=f"one of {', '.join(PANELS)}")
    rep.add_argument("--reps", type=int, default=None, help="override replication count")
    rep.add_argument("--seed", type=int, default=None, help="override master seed")
    rep.add_argument("--threads", type=int, default=None)
    rep.add_argument("--out", default=None, help="output directory")
    return parser


def _cmd_estimate(args: argparse.Namespace) -> int:
    x_cols = _split_cols(args.x)
    z_cols = _split_cols(args.z)
    if not z_cols:
        raise ConfigError("--z must name at least one instrument column")
    schema = {"y": args.y, "d": args.d, "X": x_cols, "Z1": z_cols}
    dataset = load_dataset_csv(args.data, schema)

    estimator = args.estimator.upper()
    if estimator == "TSRR":
        split = split_indices(dataset.n, args.split_fraction, args.seed)
        spec = RidgeSpec(c_x=args.cx, c_z=args.cz)
        result = tsrr(dataset, spec, split, r=args.null, level=args.level)
    else:
        eta_x = tune_eta(dataset.X, dataset.y, args.cx) if dataset.p_x else 0.0
        cfg = RjiveConfig(lam=None, eta_x=eta_x, partial_controls=dataset.p_x > 0)
        result = rjive(dataset, cfg, r=args.null, level=args.level)

    manifest = {
        "command": "estimate",
        "data": os.path.abspath(args.data),
        "schema": schema,
        "split_fraction": args.split_fraction,
        "seed": args.seed,
        "c_x": args.cx,
        "c_z": args.cz,
        "null": args.null,
        "level": args.level,
        "estimator": estimator,
        "build": __version__,
    }
    if estimator == "RJIVE":
        manifest["variance_convention"] = (
            "sandwich with jackknife fitted values as the constructed instrument "
            "(artifact convention)"
        )
    document = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "result": _result_dict(result),
    }
    if args.out:
        _atomic_write(args.out, _json_dump(document))

    print(f"estimator      {estimator}")
    print(f"alpha_hat      {result.alpha_hat:.6f}")
    print(f"{int(args.level * 100)}% CI         [{result.ci_low:.6f}, {result.ci_high:.6f}]")
    print(f"wald (r={args.null:g})     {result.wald:.6f}")
    print(f"p_value        {result.p_value:.6g}")
    return 0


def _load_preset(panel: str) -> dict:
    if panel not in PANELS:
        raise ConfigError(f"unknown panel {panel!r}; expected one of {', '.join(PANELS)}")
    ref = resources.files("ridgeiv").joinpath(f"presets/{panel}.json")
    return json.loads(ref.read_text())


def _run_panel_command(
    config: SimConfig, estimators: tuple[str, ...], threads: int, out_dir: str | None,
    manifest: dict,
) -> int:
    summaries = run_panel(config, estimators, threads=threads)
    csv_text = panel_csv(summaries)
    table = panel_text(summaries, title=manifest.get("panel", manifest["command"]))
    print(table, end="")

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        provenance = {
            "schema_version": SCHEMA_VERSION,
            "manifest": manifest,
            "config": config.to_dict(),
        }
        _atomic_write(os.path.join(out_dir, "table.csv"), csv_text)
        _atomic_write(os.path.join(out_dir, "table.txt"), table)
        _atomic_write(os.path.join(out_dir, "provenance.json"), _json_dump(provenance))
    return 0


def _resolve_estimators(arg: str) -> tuple[str, ...]:
    names = tuple(name.strip().upper() for name in arg.split(",") if name.strip())
    for name in names:
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; expected one of {ESTIMATORS}")
    if not names:
        raise ConfigError("no estimators requested")
    return names


def _apply_overrides(config: SimConfig, reps: int | None, seed: int | None) -> SimConfig:
    updates = {}
    if reps is not None:
        updates["n_reps"] = reps
    if seed is not None:
        updates["seed"] = seed
    return dataclasses.replace(config, **updates) if updates else config


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _apply_overrides(SimConfig.from_json(args.config), args.reps, args.seed)
    estimators = _resolve_estimators(args.estimators)
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    manifest = {
        "command": "simulate",
        "config_path": os.path.abspath(args.config),
        "estimators": list(estimators),
        "threads": threads,
        "seed": config.seed,
        "build": __version__,
    }
    return _run_panel_command(config, estimators, threads, args.out, manifest)


def _cmd_replicate(args: argparse.Namespace) -> int:
    preset = _load_preset(args.panel)
    config = _apply_overrides(SimConfig.from_dict(preset), args.reps, args.seed)
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    manifest = {
        "command": "replicate",
        "panel": args.panel,
        "preset": preset,
        "estimators": list(ESTIMATORS),
        "threads": threads,
        "seed": config.seed,
        "build": __version__,
    }
    return _run_panel_command(config, ESTIMATORS, threads, args.out, manifest)


_DISPATCH = {
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "replicate": _cmd_replicate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"ridgeiv: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DataError as exc:
        print(f"ridgeiv: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"ridgeiv: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
