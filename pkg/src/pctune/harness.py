"""Experiment orchestration: scenario grids, replicas, persistence, reports.

All randomness flows from one base seed through non-overlapping streams,
keyed as (namespace, replica, scenario, purpose) for simulation and
(namespace, replica, method) for the search strategies, so any unit of
work can be reproduced in isolation.

Storage layout under the output directory:

    config.json                 resolved configuration snapshot
    manifest.json               seeds, dataset checksums, unit status
    replica_<r>/<METHOD>.jsonl  one trial record per line
    report/*.csv                plot-ready tables (written by report())

Trace records hold, in order: iteration, method, alpha, test, y,
best_so_far, wall_time_s, replica, seed. Wall times are recorded as 0.0
unless the configuration sets record_timing, keeping repeated runs
byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import metrics, tuner
from .ci import TEST_KINDS, PcParams, TestKind
from .exceptions import InvalidConfigError, InvalidInputError
from .metrics import ScenarioCase
from .simulate import Scenario, rng_stream, sample_dag, sample_data, sample_weights
from .tuner import TrialRecord, TuningAborted, expert_criterion

logger = logging.getLogger(__name__)

METHODS = ("BO", "RS", "EC")

# Stream namespaces (first spawn-key component).
_NS_SIM = 0
_NS_SEARCH = 1

# Simulation purposes (last spawn-key component under _NS_SIM).
_PURPOSE_DAG = 0
_PURPOSE_WEIGHTS = 1
_PURPOSE_DATA = 2

VERSION = "0.1.0"


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one tuning experiment."""

    p_grid: tuple[int, ...] = (25, 50, 75, 100)
    n_grid: tuple[float, ...] = (2, 8)
    N_grid: tuple[int, ...] = (25, 50, 75, 100)
    replicas: int = 40
    budget: int = 30
    base_seed: int = 0
    methods: tuple[str, ...] = METHODS
    output_dir: str = "results"
    noise_var: float = 1.0
    max_cond: int | None = None
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if not (self.p_grid and self.n_grid and self.N_grid):
            raise InvalidConfigError("every scenario grid must be non-empty")
        if self.replicas < 1 or self.budget < 1:
            raise InvalidConfigError("replicas and budget must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InvalidConfigError(f"methods must be a non-empty subset of {METHODS}")

    @classmethod
    def desk_scale(cls, output_dir: str, base_seed: int = 0, **kw) -> "ExperimentConfig":
        """Small preset used by the acceptance suite: 8 scenarios, 10 replicas."""
        return cls(
            p_grid=(25, 50),
            n_grid=(2, 8),
            N_grid=(50, 100),
            replicas=10,
            budget=30,
            base_seed=base_seed,
            output_dir=output_dir,
            **kw,
        )

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("p_grid", "n_grid", "N_grid", "methods"):
            d[key] = list(d[key])
        d["version"] = VERSION
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("version", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("p_grid", "n_grid", "N_grid", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_json_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InvalidConfigError(f"config {path} is not valid JSON: {exc}") from exc


def build_scenarios(config: ExperimentConfig) -> list[Scenario]:
    """Cartesian product of the grids, ordered p-outer, n-middle, N-inner."""
    out = []
    for p in config.p_grid:
        for n in config.n_grid:
            for N in config.N_grid:
                try:
                    out.append(Scenario(p=p, n=n, N=N))
                except InvalidInputError as exc:
                    raise InvalidConfigError(f"bad scenario (p={p}, n={n}, N={N}): {exc}") from exc
    return out


@dataclass(frozen=True)
class ReplicaContext:
    """The frozen stochastic world one replica's methods all share."""

    index: int
    base_seed: int
    cases: tuple[ScenarioCase, ...]

    def dataset_checksums(self) -> list[str]:
        return [
            hashlib.sha256(case.dataset.values.tobytes()).hexdigest()
            for case in self.cases
        ]


def materialize_replica(
    config: ExperimentConfig, scenarios: Sequence[Scenario], index: int
) -> ReplicaContext:
    """Draw the replica's networks and datasets from their dedicated streams."""
    cases = []
    for s_idx, scenario in enumerate(scenarios):
        dag = sample_dag(
            scenario.p, scenario.n,
            rng_stream(config.base_seed, _NS_SIM, index, s_idx, _PURPOSE_DAG),
        )
        gbn = sample_weights(
            dag,
            rng_stream(config.base_seed, _NS_SIM, index, s_idx, _PURPOSE_WEIGHTS),
            noise_var=config.noise_var,
        )
        dataset = sample_data(
            gbn, scenario.N,
            rng_stream(config.base_seed, _NS_SIM, index, s_idx, _PURPOSE_DATA),
        )
        cases.append(ScenarioCase.from_gbn(scenario, gbn, dataset))
    return ReplicaContext(index, config.base_seed, tuple(cases))


def method_seed(base_seed: int, replica: int, method: str) -> int:
    """Stable integer identifying the (replica, method) search stream."""
    key = (_NS_SEARCH, replica, METHODS.index(method))
    ss = np.random.SeedSequence(base_seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _method_rng(base_seed: int, replica: int, method: str) -> np.random.Generator:
    key = (_NS_SEARCH, replica, METHODS.index(method))
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=key))


def run_method_on_replica(
    config: ExperimentConfig, ctx: ReplicaContext, method: str
) -> list[TrialRecord]:
    """Run one strategy for the configured budget against a frozen replica."""

    def objective_fn(params: PcParams) -> float:
        return metrics.evaluate_objective(params, ctx.cases, config.max_cond).mean_nshd

    rng = _method_rng(config.base_seed, ctx.index, method)
    if method == "BO":
        return tuner.run_bo(objective_fn, config.budget, rng)
    if method == "RS":
        return tuner.run_random_search(objective_fn, config.budget, rng)
    if method == "EC":
        t0 = time.perf_counter()
        params = expert_criterion()
        y = objective_fn(params)
        wall = time.perf_counter() - t0
        # No search trace: the single evaluation is replicated for plotting.
        return [
            TrialRecord(it, "EC", params, y, y, wall if it == 1 else 0.0)
            for it in range(1, config.budget + 1)
        ]
    raise InvalidConfigError(f"unknown method {method!r}")


# --- trace persistence -------------------------------------------------------


def trial_to_json_dict(
    record: TrialRecord, replica: int, seed: int, record_timing: bool
) -> dict:
    return {
        "iteration": record.iteration,
        "method": record.method,
        "alpha": record.params.alpha,
        "test": record.params.test.value,
        "y": record.y,
        "best_so_far": record.best_so_far,
        "wall_time_s": record.wall_time_s if record_timing else 0.0,
        "replica": replica,
        "seed": seed,
    }


def write_trace(path: Path, records: Iterable[TrialRecord], replica: int,
                seed: int, record_timing: bool) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(json.dumps(trial_to_json_dict(r, replica, seed, record_timing)))
            fh.write("\n")
    os.replace(tmp, path)


def read_trace(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _unit_key(replica: int, method: str) -> str:
    return f"replica_{replica}/{method}"


def _unit_done(out_dir: Path, manifest: dict, replica: int, method: str, budget: int) -> bool:
    entry = manifest.get("units", {}).get(_unit_key(replica, method))
    if not entry or entry.get("status") != "done":
        return False
    path = out_dir / f"replica_{replica}" / f"{method}.jsonl"
    if not path.exists():
        return False
    with open(path) as fh:
        return sum(1 for line in fh if line.strip()) == budget


def _run_replica_units(
    config: ExperimentConfig, scenarios: Sequence[Scenario], replica: int,
    methods: Sequence[str],
) -> dict:
    """Materialize one replica and run its pending methods. Returns manifest rows."""
    ctx = materialize_replica(config, scenarios, replica)
    out_dir = Path(config.output_dir)
    rep_dir = out_dir / f"replica_{replica}"
    rep_dir.mkdir(parents=True, exist_ok=True)
    rows: dict = {"units": {}, "checksums": ctx.dataset_checksums()}
    for method in methods:
        seed = method_seed(config.base_seed, replica, method)
        key = _unit_key(replica, method)
        try:
            records = run_method_on_replica(config, ctx, method)
        except TuningAborted as exc:
            write_trace(rep_dir / f"{method}.jsonl", exc.records, replica, seed,
                        config.record_timing)
            rows["units"][key] = {"status": "failed", "seed": seed, "error": str(exc)}
            logger.error("unit %s failed: %s", key, exc)
            continue
        write_trace(rep_dir / f"{method}.jsonl", records, replica, seed,
                    config.record_timing)
        rows["units"][key] = {"status": "done", "seed": seed}
    return rows


def run_experiment(config: ExperimentConfig) -> Path:
    """Run every (replica, method) unit that is not already complete.

    Fully resumable: completed units are detected through the manifest and
    skipped without re-evaluating the objective. Returns the output
    directory.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_json(out_dir / "config.json", config.to_json_dict())
    scenarios = build_scenarios(config)

    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    else:
        manifest = {"version": VERSION, "base_seed": config.base_seed,
                    "units": {}, "datasets": {}}

    pending: dict[int, list[str]] = {}
    for r in range(config.replicas):
        todo = [m for m in config.methods
                if not _unit_done(out_dir, manifest, r, m, config.budget)]
        if todo:
            pending[r] = todo

    def absorb(replica: int, rows: dict) -> None:
        manifest["units"].update(rows["units"])
        manifest["datasets"][f"replica_{replica}"] = rows["checksums"]
        _atomic_write_json(manifest_path, manifest)

    if config.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                r: pool.submit(_run_replica_units, config, scenarios, r, methods)
                for r, methods in pending.items()
            }
            for r in sorted(futures):
                absorb(r, futures[r].result())
    else:
        for r in sorted(pending):
            absorb(r, _run_replica_units(config, scenarios, r, pending[r]))
    return out_dir


# --- reporting ---------------------------------------------------------------

LOG_DIFF_EPSILON = 1e-6
ALPHA_HIST_BINS = 20
ALPHA_MASS_THRESHOLD = 0.025


def final_recommendation(trace: list[dict]) -> dict:
    """The best observation so far at the last iteration (earliest on ties)."""
    best = min(t["y"] for t in trace)
    return next(t for t in sorted(trace, key=lambda t: t["iteration"]) if t["y"] == best)


def report(results_dir) -> dict[str, Path]:
    """Emit plot-ready CSV tables and a summary from a results directory.

    curves.csv: per method and iteration, mean and standard deviation over
    replicas of log(best_so_far - global_best + epsilon). hist_tests.csv /
    hist_alpha.csv: frequencies of the recommended test kind and alpha of
    the final iteration across replicas. Missing traces reduce the
    averaged subset and are flagged in the warning column.
    """
    results_dir = Path(results_dir)
    config = ExperimentConfig.from_file(results_dir / "config.json")
    report_dir = results_dir / "report"
    report_dir.mkdir(exist_ok=True)

    traces: dict[tuple[str, int], list[dict]] = {}
    for method in config.methods:
        for r in range(config.replicas):
            path = results_dir / f"replica_{r}" / f"{method}.jsonl"
            if path.exists():
                trace = read_trace(path)
                if trace:
                    traces[(method, r)] = trace
            else:
                logger.warning("missing trace %s", path)

    if not traces:
        raise InvalidInputError(f"no traces found under {results_dir}")
    global_best = min(t["y"] for trace in traces.values() for t in trace)

    curves_path = report_dir / "curves.csv"
    with open(curves_path, "w") as fh:
        fh.write("method,iteration,mean_log_diff,sd_log_diff,n_replicas,warning\n")
        for method in config.methods:
            reps = [r for m, r in traces if m == method]
            missing = config.replicas - len(reps)
            warning = f"missing {missing} trace(s)" if missing else ""
            for it in range(1, config.budget + 1):
                vals = []
                for r in reps:
                    by_iter = {t["iteration"]: t for t in traces[(method, r)]}
                    if it in by_iter:
                        vals.append(
                            math.log(by_iter[it]["best_so_far"] - global_best
                                     + LOG_DIFF_EPSILON)
                        )
                if not vals:
                    continue
                mean = float(np.mean(vals))
                sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                fh.write(f"{method},{it},{mean!r},{sd!r},{len(vals)},{warning}\n")

    bo_finals = [
        final_recommendation(traces[(m, r)]) for m, r in sorted(traces) if m == "BO"
    ]

    tests_path = report_dir / "hist_tests.csv"
    counts = {kind.value: 0 for kind in TEST_KINDS}
    for rec in bo_finals:
        counts[rec["test"]] += 1
    with open(tests_path, "w") as fh:
        fh.write("test,count\n")
        for kind in TEST_KINDS:
            fh.write(f"{kind.value},{counts[kind.value]}\n")

    alpha_path = report_dir / "hist_alpha.csv"
    edges = np.logspace(-5, -1, ALPHA_HIST_BINS + 1)
    hist = np.zeros(ALPHA_HIST_BINS, dtype=int)
    for rec in bo_finals:
        idx = int(np.clip(np.searchsorted(edges, rec["alpha"], side="right") - 1,
                          0, ALPHA_HIST_BINS - 1))
        hist[idx] += 1
    with open(alpha_path, "w") as fh:
        fh.write("bin_left,bin_right,count\n")
        for k in range(ALPHA_HIST_BINS):
            fh.write(f"{edges[k]!r},{edges[k + 1]!r},{hist[k]}\n")

    summary = {
        "replicas_with_bo_trace": len(bo_finals),
        "global_best": global_best,
    }
    if bo_finals:
        mode = max(TEST_KINDS, key=lambda k: counts[k.value]).value
        mass = sum(r["alpha"] < ALPHA_MASS_THRESHOLD for r in bo_finals) / len(bo_finals)
        summary["recommended_test_mode"] = mode
        summary["alpha_mass_below_0.025"] = mass
        logger.info("most frequently recommended test: %s", mode)
        logger.info("fraction of recommended alphas below %.3f: %.3f",
                    ALPHA_MASS_THRESHOLD, mass)
    summary_path = report_dir / "summary.json"
    _atomic_write_json(summary_path, summary)

    return {
        "curves": curves_path,
        "hist_tests": tests_path,
        "hist_alpha": alpha_path,
        "summary": summary_path,
    }
