"""
INS²ANE command-line interface
generate, score-map, run, baseline and eval subcommands
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from ..agents.engine import ExperimentEngine, ExperimentMode, RunConfig
from ..analysis.exports import (
    export_map_csv,
    export_map_pgm,
    export_trace_csv,
    load_trace,
)
from ..analysis.metrics import (
    anomaly_hits,
    dataset_variability,
    eval_nme,
    random_baseline,
    random_baseline_curve,
    variability,
)
from ..analysis.novelty import NoveltyConfig, NoveltyMethod, novelty_map
from ..analysis.surrogate import FitConfig, dump_model
from ..config import configure_logging, get_settings
from ..data.models import spectrum_at
from ..data.storage import load_dataset, save_dataset
from ..data.synth import SynthConfig, generate
from ..exceptions import (
    ConfigError,
    DatasetIOError,
    ExperimentAbortedError,
    InsaneError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2


def _fmt(value: Optional[float]) -> str:
    return "nan" if value is None else f"{value:.17g}"


def _read_json(path: str) -> Dict[str, Any]:
    source = Path(path)
    try:
        text = source.read_text()
    except OSError as e:
        raise DatasetIOError(f"Could not read config: {e.strerror or e}", source) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top-level JSON value must be an object")
    return data


# Subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    """Write a synthetic dataset directory"""
    raw = _read_json(args.config) if args.config else {}
    cfg = SynthConfig.model_validate(raw)
    ds = generate(cfg, seed=args.seed)
    save_dataset(ds, args.out)

    for name, count in ds.label_histogram().items():
        print(f"label_{name}={count}")
    print(f"dataset_variability={_fmt(dataset_variability(ds))}")
    return EXIT_OK


def _novelty_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {
        "method": args.scorer,
        "k": args.k,
        "n_trees": args.n_trees,
        "subsample": args.subsample,
        "nu": args.nu,
        "gamma": args.gamma,
    }
    overrides = {key: value for key, value in flags.items() if value is not None}
    if getattr(args, "novelty_seed", None) is not None:
        overrides["seed"] = args.novelty_seed
    if getattr(args, "no_normalize", False):
        overrides["normalize"] = False
    if getattr(args, "whiten", False):
        overrides["whiten"] = True
    return overrides


def cmd_score_map(args: argparse.Namespace) -> int:
    """Score every spectrum of a dataset and export the map"""
    ds = load_dataset(args.dataset)
    overrides = _novelty_overrides(args)
    overrides.setdefault("method", NoveltyMethod.IF.value)
    cfg = NoveltyConfig.model_validate(overrides)

    scores = novelty_map(ds, cfg, threads=args.threads, pairwise_cap=args.pairwise_cap)
    prefix = args.out
    export_map_csv(scores, f"{prefix}.csv")
    export_map_pgm(scores, f"{prefix}.pgm")
    print(f"score_min={_fmt(float(scores.min()))} score_max={_fmt(float(scores.max()))}")
    return EXIT_OK


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file fields overridden by command-line flags"""
    raw = _read_json(args.config) if args.config else {}

    simple = {
        "mode": args.mode,
        "n_init": args.n_init,
        "n_steps": args.steps,
        "seed": args.seed,
        "patch_side": args.patch_side,
        "eval_every": args.eval_every,
    }
    raw.update({key: value for key, value in simple.items() if value is not None})
    if args.no_nme:
        raw["evaluate_nme"] = False
    if args.frozen_novelty:
        raw["recompute_novelty"] = False

    novelty = _novelty_overrides(args)
    if novelty:
        raw["novelty"] = {**(raw.get("novelty") or {}), **novelty}

    fit_flags = {"epochs": args.epochs, "learning_rate": args.learning_rate}
    fit_overrides = {key: value for key, value in fit_flags.items() if value is not None}
    if fit_overrides:
        raw["fit"] = {**(raw.get("fit") or {}), **fit_overrides}

    acq_flags = {
        "kind": args.acq,
        "jump_period": args.jump_period,
        "proximity_scale": args.tau,
        "jump_radius": args.rho,
    }
    acq_overrides = {key: value for key, value in acq_flags.items() if value is not None}
    if args.sane:
        acq_overrides["sane"] = True
    if acq_overrides:
        raw["acquisition"] = {**(raw.get("acquisition") or {}), **acq_overrides}

    return RunConfig.model_validate(raw)


def _print_run_summary(trace, ds) -> None:
    summary = trace.summary()
    line = (
        f"final_nme={_fmt(summary['final_nme'])} "
        f"final_variability={_fmt(summary['final_variability'])} "
        f"jump_count={summary['jump_count']}"
    )
    if ds.labels is not None:
        line += f" anomaly_hits={anomaly_hits(trace.locations(), ds.labels)}"
    print(line)


def cmd_run(args: argparse.Namespace) -> int:
    """Run one autonomous experiment and write its trace"""
    cfg = build_run_config(args)
    ds = load_dataset(args.dataset)
    engine = ExperimentEngine(ds, cfg, threads=args.threads)

    try:
        trace = engine.run()
    except ExperimentAbortedError as e:
        export_trace_csv(e.trace, args.out)
        logger.error(f"Partial trace with {len(e.trace)} records written to {args.out}")
        raise

    export_trace_csv(trace, args.out)
    if args.model_out and engine.model is not None:
        try:
            Path(args.model_out).write_bytes(dump_model(engine.model))
        except OSError as e:
            raise DatasetIOError(f"Could not write model: {e.strerror or e}", args.model_out) from e
    _print_run_summary(trace, ds)
    return EXIT_OK


def _parse_counts(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--curve expects comma-separated integers, got {text!r}") from e


def cmd_baseline(args: argparse.Namespace) -> int:
    """Random-sampling variability baseline"""
    ds = load_dataset(args.dataset)
    mean, std = random_baseline(
        ds, args.points, args.realizations, seed=args.seed, threads=args.threads
    )
    print(f"baseline_mean={_fmt(mean)} baseline_std={_fmt(std)}")

    if args.curve:
        for point in random_baseline_curve(
            ds, _parse_counts(args.curve), args.realizations, seed=args.seed, threads=args.threads
        ):
            print(
                f"n_points={point.n_points} baseline_mean={_fmt(point.mean)} "
                f"baseline_std={_fmt(point.std)}"
            )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Recompute NME and variability from a trace and its dataset"""
    ds = load_dataset(args.dataset)
    frame, meta = load_trace(args.trace)
    if len(frame) < 2:
        raise ConfigError(f"Trace {args.trace} has fewer than 2 records")

    run_cfg = meta.get("config") or {}
    if meta.get("dataset_hash") and meta["dataset_hash"] != ds.content_hash():
        logger.warning("Trace was recorded on a different dataset (hash mismatch)")

    locations = [(int(r), int(c)) for r, c in zip(frame["row"], frame["col"])]
    spectra = np.vstack([spectrum_at(ds, loc) for loc in locations])
    fit_cfg = FitConfig.model_validate(run_cfg.get("fit") or {})
    patch_side = int(run_cfg.get("patch_side", args.patch_side))

    score = eval_nme(ds, locations, fit_cfg, patch_side=patch_side)
    line = f"nme={_fmt(score)} variability={_fmt(variability(spectra))} records={len(frame)}"
    if ds.labels is not None:
        line += f" anomaly_hits={anomaly_hits(locations, ds.labels)}"
    print(line)
    return EXIT_OK


# Parser


def _add_novelty_flags(parser: argparse.ArgumentParser, scorer_flag: str) -> None:
    parser.add_argument(
        scorer_flag,
        dest="scorer",
        choices=[m.value for m in NoveltyMethod],
        default=None,
        help="Novelty scorer",
    )
    parser.add_argument("--k", type=int, default=None, help="Neighbours for nn/lof (default 5)")
    parser.add_argument("--n-trees", type=int, default=None, help="Isolation trees (default 100)")
    parser.add_argument("--subsample", type=int, default=None, help="IF subsample (default min(256, n))")
    parser.add_argument("--nu", type=float, default=None, help="OC-SVM nu (default 0.1)")
    parser.add_argument("--gamma", type=float, default=None, help="OC-SVM RBF gamma (default 1/(d·var))")
    parser.add_argument("--novelty-seed", type=int, default=None, help="IF seed (default 0)")
    parser.add_argument("--no-normalize", action="store_true", help="Keep raw scores")
    parser.add_argument("--whiten", action="store_true", help="Standardize spectrum columns first")


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    formatter = argparse.ArgumentDefaultsHelpFormatter

    parser = argparse.ArgumentParser(
        prog="insane",
        description="Novelty-scored, strategically sampled autonomous experiments",
        formatter_class=formatter,
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=settings.threads,
        help="Worker threads (env INSANE_THREADS); outputs do not depend on it",
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Log level")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Generate a synthetic dataset", formatter_class=formatter)
    gen.add_argument("--config", default=None, help="SynthConfig JSON (defaults if omitted)")
    gen.add_argument("--out", required=True, help="Output dataset directory")
    gen.add_argument("--seed", type=int, default=None, help="Noise seed (overrides config)")
    gen.set_defaults(handler=cmd_generate)

    smap = sub.add_parser("score-map", help="Novelty map over a whole dataset", formatter_class=formatter)
    smap.add_argument("dataset", help="Dataset directory")
    _add_novelty_flags(smap, "--method")
    smap.add_argument(
        "--pairwise-cap",
        type=int,
        default=settings.pairwise_cap,
        help="Largest population for nn/lof/ocsvm (env INSANE_PAIRWISE_CAP)",
    )
    smap.add_argument("--out", required=True, help="Output prefix for .csv and .pgm")
    smap.set_defaults(handler=cmd_score_map)

    run = sub.add_parser("run", help="Run an autonomous experiment", formatter_class=formatter)
    run.add_argument("dataset", help="Dataset directory")
    run.add_argument("--config", default=None, help="RunConfig JSON; flags override its fields")
    run.add_argument("--mode", choices=[m.value for m in ExperimentMode], default=None, help="Experiment mode (default novelty)")
    _add_novelty_flags(run, "--scorer")
    run.add_argument("--n-init", type=int, default=None, help="Random seed points (default 10)")
    run.add_argument("--steps", type=int, default=None, help="Acquisition steps (default 200)")
    run.add_argument("--seed", type=int, default=None, help="Master seed (default 0)")
    run.add_argument("--patch-side", type=int, default=None, help="Odd patch side (default 17)")
    run.add_argument("--eval-every", type=int, default=None, help="Steps between NME evaluations (default 10)")
    run.add_argument("--epochs", type=int, default=None, help="Surrogate epochs per step (default 50)")
    run.add_argument("--learning-rate", type=float, default=None, help="Surrogate step size (default 0.01)")
    run.add_argument("--acq", choices=["ei", "ucb"], default=None, help="Acquisition function (default ei)")
    run.add_argument("--sane", action="store_true", help="Enable strategic sampling outside insane mode")
    run.add_argument("--jump-period", type=int, default=None, help="Remote jump every m-th step (default 5)")
    run.add_argument("--tau", type=float, default=None, help="Proximity scale in px (default 4·min(H,W)/64)")
    run.add_argument("--rho", type=float, default=None, help="Jump radius in px (default 15·min(H,W)/64)")
    run.add_argument("--no-nme", action="store_true", help="Skip NME evaluation")
    run.add_argument("--frozen-novelty", action="store_true", help="Keep novelty targets from measurement time")
    run.add_argument("--model-out", default=None, help="Also dump the final surrogate here")
    run.add_argument("--out", required=True, help="Trace CSV path (sidecar JSON written alongside)")
    run.set_defaults(handler=cmd_run)

    base = sub.add_parser("baseline", help="Random-sampling variability baseline", formatter_class=formatter)
    base.add_argument("dataset", help="Dataset directory")
    base.add_argument("--points", type=int, default=200, help="Pixels per realization")
    base.add_argument("--realizations", type=int, default=200, help="Number of realizations")
    base.add_argument("--seed", type=int, default=0, help="Baseline seed")
    base.add_argument("--curve", default=None, help="Also report these comma-separated sample counts")
    base.set_defaults(handler=cmd_baseline)

    ev = sub.add_parser("eval", help="Recompute NME and variability from a trace", formatter_class=formatter)
    ev.add_argument("dataset", help="Dataset directory")
    ev.add_argument("--trace", required=True, help="Trace CSV written by run")
    ev.add_argument("--patch-side", type=int, default=17, help="Patch side if the sidecar is missing")
    ev.set_defaults(handler=cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except InsaneError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
