#!/usr/bin/env python3
"""
Behavioural acceptance checks on the default synthetic dataset
Variability separation, anomaly discovery and NME ordering against random sampling
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List

import numpy as np

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from insane.agents.engine import ExperimentMode, RunConfig, run_experiment  # noqa: E402
from insane.analysis.metrics import anomaly_hits, random_baseline  # noqa: E402
from insane.analysis.novelty import NoveltyConfig, NoveltyMethod  # noqa: E402
from insane.config import configure_logging  # noqa: E402
from insane.data.models import DEFAULT_PATCH_SIDE, GridDataset, candidate_locations  # noqa: E402
from insane.data.synth import SynthConfig, generate  # noqa: E402
from insane.data.trace import ExperimentTrace  # noqa: E402

logger = logging.getLogger("acceptance")

N_INIT = 10
N_STEPS = 100
BASELINE_REALIZATIONS = 200

RUN_KINDS = {
    "scalarizer": (ExperimentMode.SCALARIZER, None),
    "novelty-if": (ExperimentMode.NOVELTY, NoveltyMethod.IF),
    "novelty-nn": (ExperimentMode.NOVELTY, NoveltyMethod.NN),
    "insane-if": (ExperimentMode.INSANE, NoveltyMethod.IF),
}


def run_config(kind: str, seed: int, evaluate_nme: bool) -> RunConfig:
    mode, method = RUN_KINDS[kind]
    return RunConfig(
        mode=mode,
        novelty=NoveltyConfig(method=method) if method is not None else None,
        n_init=N_INIT,
        n_steps=N_STEPS,
        seed=seed,
        eval_every=N_STEPS,
        evaluate_nme=evaluate_nme,
    )


def run_seeds(
    ds: GridDataset, kind: str, seeds: List[int], threads: int, evaluate_nme: bool
) -> List[ExperimentTrace]:
    traces = []
    for seed in seeds:
        logger.info(f"Running {kind} seed {seed}")
        traces.append(run_experiment(ds, run_config(kind, seed, evaluate_nme), threads=threads))
    return traces


def report(name: str, passed: bool, detail: str) -> bool:
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return passed


def check_variability_and_nme(
    ds: GridDataset, traces: Dict[str, List[ExperimentTrace]], threads: int
) -> List[bool]:
    mean, std = random_baseline(
        ds, N_INIT + N_STEPS, BASELINE_REALIZATIONS, seed=0, threads=threads
    )
    final_var = {
        kind: float(np.mean([t.final_variability() for t in runs]))
        for kind, runs in traces.items()
    }
    results = []
    for kind in ("novelty-if", "novelty-nn"):
        results.append(
            report(
                f"variability {kind}",
                final_var[kind] >= mean + 2.0 * std,
                f"{final_var[kind]:.6g} vs baseline {mean:.6g} + 2 x {std:.6g}",
            )
        )
    results.append(
        report(
            "variability scalarizer",
            abs(final_var["scalarizer"] - mean) <= 2.0 * std,
            f"{final_var['scalarizer']:.6g} vs baseline {mean:.6g} +- 2 x {std:.6g}",
        )
    )

    final_nme = {
        kind: float(np.mean([t.final_nme() for t in runs])) for kind, runs in traces.items()
    }
    initial_nme = {
        kind: float(np.mean([t.nme_series()[0][1] for t in runs]))
        for kind, runs in traces.items()
    }
    for kind in ("novelty-if", "novelty-nn"):
        results.append(
            report(
                f"nme {kind}",
                final_nme[kind] <= final_nme["scalarizer"] and final_nme[kind] <= initial_nme[kind],
                f"final {final_nme[kind]:.4g}, initial {initial_nme[kind]:.4g}, "
                f"scalarizer {final_nme['scalarizer']:.4g}",
            )
        )
    return results


def random_hit_rate(ds: GridDataset, seeds: List[int]) -> float:
    candidates = candidate_locations(ds, DEFAULT_PATCH_SIDE)
    hits = 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(candidates), size=N_INIT + N_STEPS, replace=False)
        hits += anomaly_hits([candidates[i] for i in picked], ds.labels) > 0
    return hits / len(seeds)


def check_anomaly_discovery(ds: GridDataset, seeds: List[int], threads: int) -> List[bool]:
    baseline = random_hit_rate(ds, seeds)
    results = []
    for kind in ("novelty-if", "insane-if"):
        traces = run_seeds(ds, kind, seeds, threads, evaluate_nme=False)
        rate = float(np.mean([anomaly_hits(t.locations(), ds.labels) > 0 for t in traces]))
        results.append(
            report(f"anomaly hits {kind}", rate > baseline, f"{rate:.2f} vs random {baseline:.2f}")
        )
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5, help="Seeds per mode for variability and NME")
    parser.add_argument("--hit-seeds", type=int, default=20, help="Seeds for anomaly discovery")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args()
    configure_logging(args.log_level)

    ds = generate(SynthConfig())
    seeds = list(range(args.seeds))
    traces = {
        kind: run_seeds(ds, kind, seeds, args.threads, evaluate_nme=True)
        for kind in ("scalarizer", "novelty-if", "novelty-nn")
    }

    results = check_variability_and_nme(ds, traces, args.threads)
    results += check_anomaly_discovery(ds, list(range(args.hit_seeds)), args.threads)

    print(f"{sum(results)}/{len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
