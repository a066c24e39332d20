"""Command line entry point: ``crbias <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .core import DataError, NumericalError
from .estimators import ESTIMATORS
from .io import StudyConfig, config_snapshot, parse_floats, read_config, write_json, write_rows
from .study import (decide_one, discrepancy_one, evaluate_one, fit_one, replication_indices,
                    run_parallel, simulate_one, summarize_study, update_manifest)

log = logging.getLogger("crbias")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _config(args) -> StudyConfig:
    cfg = read_config(args.config) if getattr(args, "config", None) else StudyConfig()
    sim_kw = {}
    if getattr(args, "seed", None) is not None:
        sim_kw["seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        sim_kw["replications"] = args.replications
    if getattr(args, "n", None) is not None:
        sim_kw["n"] = args.n
    if sim_kw:
        cfg.sim = dataclasses.replace(cfg.sim, **sim_kw)
    if getattr(args, "horizons", None):
        cfg.horizons = parse_floats(args.horizons)
    if getattr(args, "cause", None) is not None:
        cfg.cause = args.cause
    if getattr(args, "threshold", None) is not None:
        cfg.threshold = args.threshold
    if getattr(args, "group", None) is not None:
        cfg.group = args.group
    # model kinds in study mode: flags win over the config file
    if getattr(args, "naive", None) is None:
        args.naive = cfg.naive_model
    if getattr(args, "competing", None) is None:
        args.competing = cfg.competing_model
    return cfg


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else (os.cpu_count() or 1)


def _out(args, default: Path) -> Path:
    out = Path(args.out) if args.out else default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_path(study: Path, kind: str, k: int) -> Path:
    return study / f"{kind}_{k}.json"


# --- subcommands ---------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args, Path("study"))
    ks = range(cfg.sim.replications)
    update_manifest(out, "simulate", {"config": config_snapshot(cfg), "seed": cfg.sim.seed,
                                      "replications": {}})
    t0 = time.perf_counter()
    results = run_parallel(simulate_one, [(cfg.sim, k, str(out)) for k in ks], _jobs(args))
    update_manifest(out, "simulate", {
        "config": config_snapshot(cfg), "seed": cfg.sim.seed,
        "replications": {str(k): info for k, info in results},
        "seconds": round(time.perf_counter() - t0, 3)})
    log.info("wrote %d replications to %s", len(results), out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    if args.model not in ESTIMATORS:
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(ESTIMATORS)}")
    seed = cfg.sim.seed if args.seed is None else args.seed
    if args.study:
        study = Path(args.study)
        out = _out(args, study)
        tasks = [(str(study / f"data_{k}.csv"), args.model, cfg.cause, seed, cfg.dev_fraction,
                  str(_model_path(out, args.model, k))) for k in replication_indices(study)]
    else:
        data = Path(args.data)
        out = _out(args, data.parent)
        stem = data.stem[5:] if data.stem.startswith("data_") else data.stem
        tasks = [(str(data), args.model, cfg.cause, seed, cfg.dev_fraction,
                  str(out / f"{args.model}_{stem}.json"))]
    results = run_parallel(fit_one, tasks, _jobs(args))
    update_manifest(out, f"fit_{args.model}", {
        "cause": cfg.cause, "split_seed": seed, "dev_fraction": cfg.dev_fraction,
        "models": {Path(p).name: {"seconds": s} for p, s in results}})
    for p, _ in results:
        print(p)
    return EXIT_OK


def _pair_tasks(args, cfg):
    """(data, naive model, competing model, stem) per replication or for one file."""
    if args.study:
        study = Path(args.study)
        out = _out(args, study)
        return out, [(study / f"truth_{k}.csv" if (study / f"truth_{k}.csv").exists()
                      else study / f"data_{k}.csv",
                      study / f"data_{k}.csv",
                      _model_path(study, args.naive, k), _model_path(study, args.competing, k), k)
                     for k in replication_indices(study)]
    if not (args.nc and args.c):
        raise UsageError("either --study or both --nc and --c are required")
    data = Path(args.truth or args.data) if (args.truth or args.data) else None
    if data is None:
        raise UsageError("a dataset (--data or --truth) is required")
    out = _out(args, data.parent)
    m = data.stem.split("_")[-1]
    return out, [(data, data, Path(args.nc), Path(args.c), m)]


def cmd_discrepancy(args) -> int:
    cfg = _config(args)
    out, pairs = _pair_tasks(args, cfg)
    tasks = [(str(truth), str(nc), str(c), cfg.horizons, cfg.cause, str(out / f"discrepancy_{k}"))
             for truth, _, nc, c, k in pairs]
    docs = run_parallel(discrepancy_one, tasks, _jobs(args))
    update_manifest(out, "discrepancy", {
        "horizons": list(cfg.horizons), "quantile_scope": "per replication, held-out split",
        "reports": [f"discrepancy_{k}.json" for *_, k in pairs]})
    if len(docs) >= 2:
        summary = summarize_study(out, f"{args.competing}-vs-{args.naive}", cfg.bootstrap,
                                  cfg.sim.seed)
        write_json(out / "study_summary.json", summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out, pairs = _pair_tasks(args, cfg)
    tasks = [(str(data), str(nc), str(c), cfg.horizons, cfg.cause, cfg.group,
              str(out / f"evaluate_{k}")) for _, data, nc, c, k in pairs]
    run_parallel(evaluate_one, tasks, _jobs(args))
    update_manifest(out, "evaluate", {"group": cfg.group, "horizons": list(cfg.horizons)})
    return EXIT_OK


def cmd_decide(args) -> int:
    cfg = _config(args)
    if args.policy_quantile is not None:
        cfg.policy_quantile = args.policy_quantile
    if args.age_column is not None:
        cfg.age_covariate = args.age_column
    if args.min_age is not None:
        cfg.min_age = args.min_age
    out, pairs = _pair_tasks(args, cfg)
    tasks = [(str(data), str(nc), str(c), cfg.policy_quantile, cfg.threshold,
              cfg.age_covariate, cfg.min_age, cfg.cause, cfg.group, str(out / f"decision_{k}"))
             for _, data, nc, c, k in pairs]
    run_parallel(decide_one, tasks, _jobs(args))
    update_manifest(out, "decide", {"threshold": cfg.threshold,
                                    "horizon_quantile": cfg.policy_quantile,
                                    "age_covariate": cfg.age_covariate, "min_age": cfg.min_age,
                                    "group": cfg.group})
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    study = Path(args.study)
    out = _out(args, study)
    summary = summarize_study(study, f"{args.competing}-vs-{args.naive}", cfg.bootstrap,
                              cfg.sim.seed)
    write_json(out / "summary.json", summary)
    write_rows(out / "rmse_table.csv", [summary["table"]])
    rows = []
    for label, s in summary["horizons"].items():
        for kind in ("L1", "gap"):
            for th, em in s[f"pairs_{kind}"]:
                rows.append({"horizon": label, "quantity": kind, "theoretical": th,
                             "empirical": em})
    write_rows(out / "alignment_pairs.csv", rows)
    print((out / "rmse_table.csv").read_text(), end="")
    print(f"# theoretical L conditions on {summary['denominator_convention']}")
    return EXIT_OK


def cmd_run(args) -> int:
    """simulate -> fit (both models) -> discrepancy -> evaluate -> decide -> report."""
    out = _out(args, Path("study"))
    args.out = str(out)
    args.study = str(out)
    _config(args)  # resolves the model kinds from flags or config
    steps = [cmd_simulate]
    for model in (args.naive, args.competing):
        steps.append(lambda a, m=model: cmd_fit(argparse.Namespace(**{**vars(a), "model": m})))
    steps += [cmd_discrepancy, cmd_evaluate, cmd_decide, cmd_report]
    for step in steps:
        step(args)
    return EXIT_OK


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crbias", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crbias {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI study configuration")
    common.add_argument("--seed", type=int, help="simulation / split seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--cause", type=int, help="event code of interest")

    pair = argparse.ArgumentParser(add_help=False)
    pair.add_argument("--study", help="study directory (all replications)")
    pair.add_argument("--data", help="dataset CSV (single-file mode)")
    pair.add_argument("--nc", help="naive model JSON (single-file mode)")
    pair.add_argument("--c", help="competing-risk model JSON (single-file mode)")
    pair.add_argument("--naive", choices=("cox", "km"),
                      help="naive model kind in study mode (default: config, else cox)")
    pair.add_argument("--competing", choices=("finegray", "aj"),
                      help="competing-risk model kind in study mode (default: config, "
                           "else finegray)")
    pair.add_argument("--horizons", help="comma-separated event-time quantiles, e.g. 0.5,1.0")
    pair.add_argument("--group", help="grouping: group, x<k>, or a rule such as x3>=50")

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic replications")
    p.add_argument("--replications", type=int)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a model on the development split")
    p.add_argument("--model", required=True, help=f"one of {', '.join(ESTIMATORS)}")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--study")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("discrepancy", parents=[common, pair],
                       help="empirical vs theoretical relative discrepancy")
    p.add_argument("--truth", help="truth CSV (single-file mode)")
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("evaluate", parents=[common, pair], help="td-Brier / td-CI by group")
    p.set_defaults(func=cmd_evaluate, truth=None)

    p = sub.add_parser("decide", parents=[common, pair], help="treatment-threshold analysis")
    p.add_argument("--threshold", type=float, help="risk threshold (default 0.10)")
    p.add_argument("--policy-quantile", type=float,
                   help="event-time quantile used as the decision horizon (default 1.0)")
    p.add_argument("--age-column", help="covariate column holding age, e.g. x2")
    p.add_argument("--min-age", type=float)
    p.set_defaults(func=cmd_decide, truth=None)

    p = sub.add_parser("report", parents=[common], help="aggregate replications (RMSE table)")
    p.add_argument("--study", required=True)
    p.add_argument("--naive", choices=("cox", "km"))
    p.add_argument("--competing", choices=("finegray", "aj"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common, pair], help="full pipeline in one call")
    p.add_argument("--replications", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_run, truth=None, policy_quantile=None, age_column=None,
                   min_age=None, model=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"crbias: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"crbias: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"crbias: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
