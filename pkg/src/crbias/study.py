"""Per-replication pipeline steps shared by the CLI subcommands.

Every step reads and writes files in a study directory so that replications can
run in separate worker processes; aggregation happens afterwards in fixed order.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import DataError, Horizon, SurvivalDataset, event_time_quantile
from .decision import DecisionPolicy, decision_report
from .discrepancy import DiscrepancyReport, empirical_discrepancy, study_summary, \
    theoretical_discrepancy
from .estimators import fit_model
from .io import (config_snapshot, load_dataset, load_model, load_model_document, load_truth,
                 save_dataset, save_model, write_json, write_rows)
from .metrics import group_metric_diff
from .sim import generate_replication

MANIFEST = "manifest.json"
_REPLICATION_FILE = re.compile(r"^data_(\d+)\.csv$")


# --- helpers -------------------------------------------------------------

def split_indices(n: int, seed: int, dev_fraction: float = 0.8):
    """Deterministic development/test split; returns sorted index arrays."""
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError("dev_fraction must lie in (0, 1)")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), int(n)])).permutation(n)
    cut = int(round(dev_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def quantile_horizons(data: SurvivalDataset, quantiles) -> list[Horizon]:
    return [event_time_quantile(data, q) for q in quantiles]


def parse_grouping(spec: str, data: SurvivalDataset) -> np.ndarray:
    """Binary labels from ``group``, ``x<k>`` or a threshold rule such as ``x3>=50``."""
    m = re.fullmatch(r"\s*(\w+)\s*(?:(>=|<=|>|<|==)\s*(-?[\d.eE+-]+))?\s*", spec or "")
    if not m:
        raise DataError(f"cannot parse grouping {spec!r}")
    name, op, value = m.groups()
    if name == "group":
        col = data.groups.astype(float)
    elif re.fullmatch(r"x\d+", name) and int(name[1:]) < data.n_covariates:
        col = data.covariates[:, int(name[1:])]
    else:
        raise DataError(f"grouping column {name!r} not found")
    if op:
        v = float(value)
        col = {">=": col >= v, "<=": col <= v, ">": col > v, "<": col < v, "==": col == v}[op]
        labels = col.astype(int)
    else:
        uniq = np.unique(col)
        if uniq.size > 2:
            raise DataError(f"grouping column {name!r} is not binary; use a rule like {name}>=v")
        labels = (col == uniq[-1]).astype(int) if uniq.size == 2 else np.zeros(col.size, int)
    if np.unique(labels).size < 2:
        raise DataError(f"empty group: grouping {spec!r} leaves one group empty")
    return labels


def run_parallel(fn, items, jobs: int):
    """Map ``fn`` over ``items`` in a process pool; results keep input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def replication_indices(study: Path) -> list[int]:
    found = sorted(int(m.group(1)) for p in Path(study).iterdir()
                   if (m := _REPLICATION_FILE.match(p.name)))
    if not found:
        raise DataError(f"{study}: no data_<k>.csv files")
    return found


def update_manifest(out: Path, section: str, payload: dict) -> None:
    path = Path(out) / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {"tool_version": __version__}
    manifest[section] = payload
    write_json(path, manifest)


def _model_meta(path: Path) -> dict:
    return load_model_document(path).get("meta", {})


def _test_split(data, meta_nc: dict, meta_c: dict):
    split_nc, split_c = meta_nc.get("split"), meta_c.get("split")
    if split_nc != split_c:
        raise DataError("models were fitted on different development splits")
    if not split_nc:
        return data, np.arange(data.n)
    if split_nc.get("n") != data.n:
        raise DataError("dataset size does not match the split recorded in the model file")
    _, test = split_indices(data.n, split_nc["seed"], split_nc["dev_fraction"])
    return data.subset(test), test


# --- steps ---------------------------------------------------------------

def simulate_one(args):
    sim, k, out = args
    t0 = time.perf_counter()
    data, truth = generate_replication(sim, k)
    save_dataset(data, Path(out) / f"data_{k}.csv")
    save_dataset(data, Path(out) / f"truth_{k}.csv", truth)
    return k, {"data": f"data_{k}.csv", "truth": f"truth_{k}.csv",
               "seconds": round(time.perf_counter() - t0, 3)}


def fit_one(args):
    data_path, kind, cause, seed, dev_fraction, out_path = args
    t0 = time.perf_counter()
    data = load_dataset(data_path)
    meta = {"data": Path(data_path).name}
    if dev_fraction < 1.0:
        dev, _ = split_indices(data.n, seed, dev_fraction)
        data_fit = data.subset(dev)
        meta["split"] = {"seed": int(seed), "dev_fraction": dev_fraction, "n": data.n}
    else:
        data_fit = data
    model = fit_model(kind, data_fit, cause)
    save_model(model, out_path, meta)
    return str(out_path), round(time.perf_counter() - t0, 3)


def discrepancy_one(args):
    """Reports for one replication at each quantile horizon of its test split."""
    truth_path, nc_path, c_path, quantiles, cause, out_stem = args
    data = load_dataset(truth_path)
    truth = load_truth(truth_path)
    if not np.array_equal(np.asarray(truth.ids), data.ids):
        raise DataError(f"{truth_path}: truth rows not aligned with data rows")
    model_nc, model_c = load_model(nc_path), load_model(c_path)
    if model_nc.cause != cause or model_c.cause != cause:
        raise DataError("both models must target the requested cause")
    test, idx = _test_split(data, _model_meta(nc_path), _model_meta(c_path))
    truth_test = truth.subset(idx)
    rep = _replication_number(truth_path)
    reports = []
    for h in quantile_horizons(test, quantiles):
        emp, _ = empirical_discrepancy(model_nc, model_c, test, h, cause)
        theo = theoretical_discrepancy(truth_test, h.t) if h.t > 0 else np.zeros(test.n)
        reports.append(DiscrepancyReport(h, cause, emp, theo, test.groups, rep))
    doc = {"replication": rep, "models": {"naive": Path(nc_path).name,
                                          "competing": Path(c_path).name},
           "denominator_convention": "P(T1 < t)",
           "horizons": [r.to_dict() for r in reports]}
    write_json(f"{out_stem}.json", doc)
    write_rows(f"{out_stem}.csv", _discrepancy_rows(doc))
    return doc


def _discrepancy_rows(doc):
    for h in doc["horizons"]:
        yield {"replication": doc["replication"], "horizon": h["horizon"]["label"],
               "t": h["horizon"]["t"], "empirical_L": h["empirical_L"],
               "theoretical_L": h["theoretical_L"],
               "empirical_gap_g1": h["empirical_gap"]["1"],
               "theoretical_gap_g1": h["theoretical_gap"]["1"]}


def _replication_number(path) -> int | None:
    m = re.search(r"_(\d+)\.csv$", str(path))
    return int(m.group(1)) if m else None


def evaluate_one(args):
    data_path, nc_path, c_path, quantiles, cause, group, out_stem = args
    data = load_dataset(data_path)
    test, _ = _test_split(data, _model_meta(nc_path), _model_meta(c_path))
    labels = parse_grouping(group, test)
    comps = group_metric_diff(load_model(c_path), load_model(nc_path), test,
                              quantile_horizons(test, quantiles), cause, labels)
    doc = {"data": Path(data_path).name, "group": group, "cause": cause,
           "horizons": [c.to_dict() for c in comps]}
    write_json(f"{out_stem}.json", doc)
    rows = []
    for c in comps:
        for model_name, rep in (("competing", c.competing), ("non_competing", c.naive)):
            for r in rep.rows():
                rows.append({"model": model_name, **{k: v for k, v in r.items() if k != "model"},
                             "kind": rep.model})
    write_rows(f"{out_stem}.csv", rows)
    write_rows(f"{out_stem}_diff.csv", [r for c in comps for r in c.rows()])
    return doc


def decide_one(args):
    data_path, nc_path, c_path, policy_q, threshold, age_col, min_age, cause, group, out_stem = args
    data = load_dataset(data_path)
    test, _ = _test_split(data, _model_meta(nc_path), _model_meta(c_path))
    horizon = event_time_quantile(test, policy_q)
    policy = DecisionPolicy(threshold, horizon, age_col, min_age)
    labels = parse_grouping(group, test) if group else None
    rep = decision_report(load_model(c_path), load_model(nc_path), test, policy, labels, cause)
    doc = {"data": Path(data_path).name, "group": group, **rep.to_dict()}
    write_json(f"{out_stem}.json", doc)
    write_rows(f"{out_stem}.csv", rep.rows())
    return doc


# --- aggregation ---------------------------------------------------------

def summarize_study(study: Path, label: str, n_boot: int = 1000, seed: int = 0) -> dict:
    """Table-style summary over ``discrepancy_<k>.json`` files in ``study``."""
    study = Path(study)
    if not study.is_dir():
        raise DataError(f"{study}: not a directory")
    files = sorted(study.glob("discrepancy_*.json"),
                   key=lambda p: int(re.search(r"(\d+)", p.stem).group(1)))
    if len(files) < 2:
        raise DataError(f"{study}: need at least two discrepancy_<k>.json reports, "
                        f"found {len(files)}")
    by_horizon: dict[str, list] = {}
    for f in files:
        doc = json.loads(f.read_text())
        for h in doc["horizons"]:
            by_horizon.setdefault(h["horizon"]["label"], []).append(_SummaryRow(h))
    summaries = {lab: study_summary(rows, n_boot=n_boot, seed=seed).to_dict()
                 for lab, rows in sorted(by_horizon.items(), key=lambda kv: _qkey(kv[0]))}
    table = {"model": label}
    for lab, s in summaries.items():
        table[f"rmse_L1_{lab}"] = s["rmse_L1"]
        table[f"sd_L1_{lab}"] = s["sd_L1"]
    for lab, s in summaries.items():
        table[f"rmse_gap_{lab}"] = s["rmse_gap"]
        table[f"sd_gap_{lab}"] = s["sd_gap"]
    return {"replications": len(files), "denominator_convention": "P(T1 < t)", "table": table,
            "horizons": summaries}


def _qkey(label):
    try:
        return float(label.lstrip("q"))
    except ValueError:
        return float("inf")


class _SummaryRow:
    """Adapter exposing a serialised horizon block with the report attributes
    ``study_summary`` reads."""

    def __init__(self, h):
        self.horizon = Horizon(h["horizon"]["t"], h["horizon"]["label"])
        self.empirical_mean = h["empirical_L"]
        self.theoretical_mean = h["theoretical_L"]
        self.empirical_gap = {int(k): v for k, v in h["empirical_gap"].items()}
        self.theoretical_gap = {int(k): v for k, v in h["theoretical_gap"].items()}


__all__ = ["split_indices", "quantile_horizons", "parse_grouping", "run_parallel",
           "replication_indices", "update_manifest", "simulate_one", "fit_one",
           "discrepancy_one", "evaluate_one", "decide_one", "summarize_study",
           "config_snapshot"]
