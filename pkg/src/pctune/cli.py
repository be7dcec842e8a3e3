"""Batch command-line interface.

Subcommands: simulate (emit a network and dataset for one scenario),
pc-run (learn one CPDAG from a dataset file), tune (run the tuning
experiment), report (emit plot-ready tables). Exits 0 on success; on
failure prints one machine-readable JSON error line to stderr and exits
nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .ci import TestKind
from .exceptions import PctuneError
from .harness import ExperimentConfig, report, run_experiment
from .pc import PCStable
from .simulate import (
    Scenario,
    load_dataset_csv,
    rng_stream,
    sample_dag,
    sample_data,
    sample_weights,
    write_dataset_csv,
    write_gbn,
)

TEST_CHOICES = [k.value for k in TestKind]


def _cmd_simulate(args) -> int:
    scenario = Scenario(p=args.p, n=args.n, N=args.N)
    dag = sample_dag(scenario.p, scenario.n, rng_stream(args.seed, 0))
    gbn = sample_weights(dag, rng_stream(args.seed, 1), noise_var=args.noise_var)
    dataset = sample_data(gbn, scenario.N, rng_stream(args.seed, 2))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_gbn(gbn, out / "gbn.txt")
    write_dataset_csv(dataset, out / "dataset.csv")
    print(json.dumps({
        "gbn": str(out / "gbn.txt"),
        "dataset": str(out / "dataset.csv"),
        "p": scenario.p,
        "n": scenario.n,
        "N": scenario.N,
        "edges": len(gbn.dag.edges),
    }))
    return 0


def _cmd_pc_run(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset_csv(args.data)
    learner = PCStable(alpha=args.alpha, test=args.test, max_cond=args.max_cond)
    learner.fit(dataset.values)
    payload = learner.result_.to_json_dict()
    payload["wall_time_s"] = time.perf_counter() - t0
    payload["data"] = str(args.data)
    payload["n_rows"] = dataset.n_rows
    payload["p"] = dataset.p
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_tune(args) -> int:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    elif args.desk_scale:
        config = ExperimentConfig.desk_scale(output_dir="results")
    else:
        raise PctuneError("tune needs --config and/or --desk-scale")
    overrides = {}
    if args.desk_scale and args.config:
        desk = ExperimentConfig.desk_scale(output_dir=config.output_dir)
        overrides.update(
            p_grid=desk.p_grid, n_grid=desk.n_grid, N_grid=desk.N_grid,
            replicas=desk.replicas, budget=desk.budget,
        )
    if args.method:
        overrides["methods"] = (args.method.upper(),)
    if args.out_dir:
        overrides["output_dir"] = args.out_dir
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = ExperimentConfig.from_json_dict({**config.to_json_dict(), **{
            k: (list(v) if isinstance(v, tuple) else v) for k, v in overrides.items()
        }})
    out = run_experiment(config)
    print(json.dumps({"output_dir": str(out)}))
    return 0


def _cmd_report(args) -> int:
    paths = report(args.in_dir)
    summary = json.loads((paths["summary"]).read_text())
    print(json.dumps({**{k: str(v) for k, v in paths.items()}, "summary": summary}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pctune",
        description="PC-stable structure learning and hyperparameter tuning",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="emit a network and a sampled dataset")
    sim.add_argument("--p", type=int, required=True, help="node count")
    sim.add_argument("--n", type=float, required=True, help="average neighbor size")
    sim.add_argument("--N", type=int, required=True, help="sample size")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--noise-var", type=float, default=1.0)
    sim.add_argument("--out-dir", required=True)
    sim.set_defaults(func=_cmd_simulate)

    pcr = sub.add_parser("pc-run", help="learn one CPDAG from a dataset CSV")
    pcr.add_argument("--data", required=True, help="dataset CSV (header X1..Xp)")
    pcr.add_argument("--alpha", type=float, required=True)
    pcr.add_argument("--test", choices=TEST_CHOICES, required=True)
    pcr.add_argument("--max-cond", type=int, default=None)
    pcr.add_argument("--out", default=None, help="write the result record here")
    pcr.set_defaults(func=_cmd_pc_run)

    tune = sub.add_parser("tune", help="run the tuning experiment")
    tune.add_argument("--config", default=None, help="JSON config file")
    tune.add_argument("--desk-scale", action="store_true",
                      help="use the small 8-scenario, 10-replica preset")
    tune.add_argument("--method", choices=["bo", "rs", "ec"], default=None,
                      help="run a single method instead of the configured set")
    tune.add_argument("--out-dir", default=None)
    tune.add_argument("--base-seed", type=int, default=None)
    tune.add_argument("--workers", type=int, default=None)
    tune.set_defaults(func=_cmd_tune)

    rep = sub.add_parser("report", help="emit CSV tables from a results directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PctuneError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
