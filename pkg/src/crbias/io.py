"""CSV datasets and truth tables, JSON model files, and INI study configuration.

Dataset CSV columns: ``id, time, event, group, x0 .. x{p-1}`` followed, for
simulated data, by the truth columns ``w1, w2, ws, wc, latent_time, latent_cause,
censor_time``. ``id`` and ``group`` may be omitted (row index / group 0).
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError, StepFunction, SurvivalDataset
from .estimators import (Convergence, FittedCox, FittedFineGray, FittedNonparametric)
from .sim import TRUTH_COLUMNS, GroundTruth, SimConfig

SCHEMA_VERSION = 1
REQUIRED = ("time", "event")
_X_COLUMN = re.compile(r"^x(\d+)$")


class CsvSchemaError(DataError):
    pass


def fmt(v) -> str:
    """Shortest repr that round-trips exactly (at most 17 significant digits)."""
    return repr(float(v))


# --- datasets ------------------------------------------------------------

def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise CsvSchemaError(f"{path}: empty file")
    return path, rows[0], rows[1:]


def _parse_column(path, rows, j, name, kind):
    out = []
    for k, row in enumerate(rows, start=1):
        raw = row[j].strip() if j < len(row) else ""
        try:
            v = kind(raw)
        except ValueError:
            raise CsvSchemaError(f"{path}: row {k} (line {k + 1}): bad {name} value {raw!r}")
        if kind is float and math.isnan(v):
            raise CsvSchemaError(f"{path}: row {k} (line {k + 1}): missing {name} value")
        out.append(v)
    return out


def load_dataset(path, expected_p: int | None = None) -> SurvivalDataset:
    """Read a dataset CSV; ``n_risks`` is the largest event code present."""
    path, header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    col = {h: j for j, h in enumerate(header)}
    for name in REQUIRED:
        if name not in col:
            raise CsvSchemaError(f"{path}: missing column {name!r}")
    if not rows:
        raise CsvSchemaError(f"{path}: no data rows")
    for k, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise CsvSchemaError(f"{path}: row {k} (line {k + 1}): expected {len(header)} "
                                 f"fields, got {len(row)}")
    x_cols = sorted((int(m.group(1)), j) for h, j in col.items() if (m := _X_COLUMN.match(h)))
    if [i for i, _ in x_cols] != list(range(len(x_cols))):
        raise CsvSchemaError(f"{path}: covariate columns must be x0..x{{p-1}} without gaps")
    if expected_p is not None and len(x_cols) != expected_p:
        raise CsvSchemaError(f"{path}: expected {expected_p} covariates, found {len(x_cols)}")

    times = _parse_column(path, rows, col["time"], "time", float)
    events = _parse_column(path, rows, col["event"], "event", int)
    for k, (t, e) in enumerate(zip(times, events), start=1):
        if not (t >= 0) or math.isinf(t):
            raise CsvSchemaError(f"{path}: row {k} (line {k + 1}): time must be finite and >= 0")
        if e < 0:
            raise CsvSchemaError(f"{path}: row {k} (line {k + 1}): event code must be >= 0")
    groups = (_parse_column(path, rows, col["group"], "group", int)
              if "group" in col else [0] * len(rows))
    ids = ([r[col["id"]].strip() for r in rows] if "id" in col
           else [str(i) for i in range(len(rows))])
    x = np.empty((len(rows), len(x_cols)))
    for i, j in x_cols:
        x[:, i] = _parse_column(path, rows, j, f"x{i}", float)
    return SurvivalDataset(np.array(ids), x, np.array(groups), np.array(times), np.array(events))


def load_truth(path) -> GroundTruth:
    path, header, rows = _read_rows(path)
    col = {h.strip(): j for j, h in enumerate(header)}
    missing = [c for c in ("id",) + TRUTH_COLUMNS if c not in col]
    if missing:
        raise CsvSchemaError(f"{path}: missing truth columns {missing}")
    ids = np.array([r[col["id"]].strip() for r in rows])
    values = {}
    for name in TRUTH_COLUMNS:
        kind = int if name == "latent_cause" else float
        values[name] = np.array(_parse_column(path, rows, col[name], name, kind))
    return GroundTruth(ids, **values)


def save_dataset(data: SurvivalDataset, path, truth: GroundTruth | None = None) -> None:
    path = Path(path)
    header = ["id", "time", "event", "group"] + [f"x{i}" for i in range(data.n_covariates)]
    if truth is not None:
        if len(truth) != data.n or not np.array_equal(np.asarray(truth.ids), data.ids):
            raise DataError("truth table is not aligned with the dataset")
        header += list(TRUTH_COLUMNS)
        truth_cols = [np.asarray(getattr(truth, c)) for c in TRUTH_COLUMNS]
    lines = [",".join(header)]
    x = data.covariates
    for i in range(data.n):
        fields = [data.ids[i], fmt(data.times[i]), str(int(data.events[i])),
                  str(int(data.groups[i]))]
        fields += [fmt(v) for v in x[i]]
        if truth is not None:
            fields += [str(int(c[i])) if c.dtype.kind in "iu" else fmt(c[i]) for c in truth_cols]
        lines.append(",".join(fields))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def write_rows(path, rows) -> None:
    """Write dict rows as CSV; column order is taken from the first row."""
    rows = list(rows)
    path = Path(path)
    with path.open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in r.items()})


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


# --- models --------------------------------------------------------------

def _step_to_dict(f: StepFunction) -> dict:
    return {"jump_times": f.jump_times.tolist(), "values": f.values.tolist(),
            "initial_value": f.initial_value}


def _step_from_dict(d: dict) -> StepFunction:
    return StepFunction(d["jump_times"], d["values"], d.get("initial_value", 0.0))


def model_to_dict(model, meta: dict | None = None) -> dict:
    meta = dict(meta or {})
    if isinstance(model, FittedCox):
        beta, baseline = model.beta, model.baseline_cumhaz
    elif isinstance(model, FittedFineGray):
        beta, baseline = model.beta, model.baseline_cum_subhaz
        meta["censoring_survival"] = _step_to_dict(model.censoring_survival)
        meta["warnings"] = list(model.fit_warnings)
    elif isinstance(model, FittedNonparametric):
        beta, baseline = np.zeros(0), model.cif_curve
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    conv = getattr(model, "convergence", None)
    if conv is not None:
        meta["convergence"] = {"iterations": conv.iterations,
                               "gradient_norm": conv.gradient_norm}
    return {"schema_version": SCHEMA_VERSION, "model_kind": model.kind, "cause": model.cause,
            "beta": [float(b) for b in beta], "baseline": _step_to_dict(baseline), "meta": meta}


def model_from_dict(d: dict):
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"model schema version {version!r} not supported "
                        f"(expected {SCHEMA_VERSION})")
    try:
        kind, cause = d["model_kind"], int(d["cause"])
        beta = np.asarray(d["beta"], dtype=float)
        baseline = _step_from_dict(d["baseline"])
        meta = d.get("meta", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    conv_d = meta.get("convergence")
    conv = Convergence(conv_d["iterations"], conv_d["gradient_norm"]) if conv_d else Convergence(0, 0.0)
    if kind == "cox":
        return FittedCox(beta, baseline, cause, conv)
    if kind == "finegray":
        return FittedFineGray(beta, baseline, cause, _step_from_dict(meta["censoring_survival"]),
                              conv, tuple(meta.get("warnings", ())))
    if kind in ("km", "aj"):
        return FittedNonparametric(kind, cause, baseline)
    raise DataError(f"unknown model_kind {kind!r}")


def save_model(model, path, meta: dict | None = None) -> None:
    write_json(path, model_to_dict(model, meta))


def load_model_document(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid model file ({exc})") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_model(path):
    return model_from_dict(load_model_document(path))


# --- configuration -------------------------------------------------------

@dataclass
class StudyConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    cause: int = 1
    naive_model: str = "cox"
    competing_model: str = "finegray"
    horizons: tuple = (0.5, 1.0)
    dev_fraction: float = 0.8
    group: str = "group"
    threshold: float = 0.10
    policy_quantile: float = 1.0
    age_covariate: str | None = None
    min_age: float = 40.0
    bootstrap: int = 1000


def parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise DataError(f"expected comma-separated numbers, got {text!r}") from exc


def read_config(path) -> StudyConfig:
    """Parse an INI study configuration (all keys optional; see README)."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        sim_kw = {}
        if parser.has_section("simulation"):
            s = parser["simulation"]
            for key, kind in (("n", int), ("p", int), ("seed", int), ("replications", int),
                              ("sigma_k", float), ("sigma_phi", float), ("sigma_z", float),
                              ("group_prob", float)):
                if key in s:
                    sim_kw[key] = kind(s[key])
            if "group_center" in s:
                sim_kw["group_center"] = parse_floats(s["group_center"])
        cfg = StudyConfig(sim=SimConfig(**sim_kw))
        if parser.has_section("study"):
            s = parser["study"]
            cfg.cause = s.getint("cause", cfg.cause)
            cfg.naive_model = s.get("naive_model", cfg.naive_model)
            cfg.competing_model = s.get("competing_model", cfg.competing_model)
            if cfg.naive_model not in ("cox", "km") or cfg.competing_model not in ("finegray", "aj"):
                raise ValueError("naive_model must be cox or km; competing_model finegray or aj")
            if "horizons" in s:
                cfg.horizons = parse_floats(s["horizons"])
            cfg.dev_fraction = s.getfloat("dev_fraction", cfg.dev_fraction)
            cfg.bootstrap = s.getint("bootstrap", cfg.bootstrap)
        if parser.has_section("evaluation"):
            cfg.group = parser["evaluation"].get("group", cfg.group)
        if parser.has_section("policy"):
            s = parser["policy"]
            cfg.threshold = s.getfloat("threshold", cfg.threshold)
            cfg.policy_quantile = s.getfloat("horizon_quantile", cfg.policy_quantile)
            cfg.age_covariate = s.get("age_covariate", cfg.age_covariate) or None
            cfg.min_age = s.getfloat("min_age", cfg.min_age)
    except ValueError as exc:
        raise DataError(f"invalid config {path}: {exc}") from exc
    return cfg


def config_snapshot(cfg: StudyConfig) -> dict:
    s = cfg.sim
    return {
        "simulation": {"n": s.n, "p": s.p, "sigma_k": s.sigma_k, "sigma_phi": s.sigma_phi,
                       "sigma_z": s.sigma_z, "group_center": list(s.group_center),
                       "group_prob": s.group_prob, "seed": s.seed,
                       "replications": s.replications},
        "study": {"cause": cfg.cause, "naive_model": cfg.naive_model,
                  "competing_model": cfg.competing_model, "horizons": list(cfg.horizons),
                  "dev_fraction": cfg.dev_fraction, "bootstrap": cfg.bootstrap},
        "evaluation": {"group": cfg.group},
        "policy": {"threshold": cfg.threshold, "horizon_quantile": cfg.policy_quantile,
                   "age_covariate": cfg.age_covariate, "min_age": cfg.min_age},
    }
