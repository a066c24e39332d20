import json
import time

import numpy as np
import pytest

from crbias.core import DataError
from crbias.estimators import fit_model
from crbias.io import (CsvSchemaError, StudyConfig, load_dataset, load_model, load_truth,
                       model_from_dict, model_to_dict, read_config, save_dataset, save_model)
from crbias.sim import TRUTH_COLUMNS, SimConfig, generate_replication

from conftest import random_competing


def test_load_small_file(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,time,event,group,x0\na,1.5,1,0,0.2\nb,2,0,1,-1\nc,3,2,1,4e-3\n")
    d = load_dataset(p)
    assert d.n == 3 and d.n_risks == 2 and d.n_covariates == 1
    assert list(d.ids) == ["a", "b", "c"]


def test_dataset_roundtrip(tmp_path, rng):
    d = random_competing(rng, 50, p=3)
    save_dataset(d, tmp_path / "d.csv")
    assert load_dataset(tmp_path / "d.csv").equals(d)


def test_truth_columns_roundtrip(tmp_path):
    data, truth = generate_replication(SimConfig(n=200, seed=4), 1)
    save_dataset(data, tmp_path / "t.csv", truth)
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert all(c in header for c in TRUTH_COLUMNS)
    back = load_truth(tmp_path / "t.csv")
    for c in TRUTH_COLUMNS:
        np.testing.assert_array_equal(getattr(back, c), getattr(truth, c))
    assert load_dataset(tmp_path / "t.csv").equals(data)


def test_bad_event_names_row(tmp_path):
    rows = ["id,time,event,group"] + [f"{i},{i + 1},1,0" for i in range(6)] + ["6,7,-1,0"]
    (tmp_path / "d.csv").write_text("\n".join(rows) + "\n")
    with pytest.raises(CsvSchemaError, match="row 7"):
        load_dataset(tmp_path / "d.csv")


@pytest.mark.parametrize("text, match", [
    ("", "empty file"),
    ("id,time,group\n1,2,0\n", "missing column 'event'"),
    ("id,time,event,group\n1,abc,1,0\n", "row 1 .*bad time"),
    ("id,time,event,group\n1,2,1\n", "row 1 .*expected 4 fields"),
    ("id,time,event,group\n", "no data rows"),
    ("id,time,event,group,x0,x2\n1,2,1,0,0,0\n", "without gaps"),
])
def test_schema_errors(tmp_path, text, match):
    (tmp_path / "d.csv").write_text(text)
    with pytest.raises(CsvSchemaError, match=match):
        load_dataset(tmp_path / "d.csv")


def test_expected_covariate_count(tmp_path):
    (tmp_path / "d.csv").write_text("time,event,x0\n1,1,0.5\n")
    assert load_dataset(tmp_path / "d.csv", expected_p=1).n == 1
    with pytest.raises(CsvSchemaError):
        load_dataset(tmp_path / "d.csv", expected_p=2)


def test_missing_file():
    with pytest.raises(DataError):
        load_dataset("/nonexistent/d.csv")


def test_default_sim_write_and_reload_under_five_seconds(tmp_path):
    data, truth = generate_replication(SimConfig(), 0)
    start = time.perf_counter()
    save_dataset(data, tmp_path / "big.csv", truth)
    back = load_dataset(tmp_path / "big.csv")
    assert time.perf_counter() - start < 5.0
    assert back.equals(data)


@pytest.mark.parametrize("kind", ["cox", "finegray", "km", "aj"])
def test_model_roundtrip_predictions(tmp_path, rng, kind):
    d = random_competing(rng, 120, p=3)
    model = fit_model(kind, d, 1)
    save_model(model, tmp_path / "m.json", {"note": "x"})
    back = load_model(tmp_path / "m.json")
    assert back.kind == kind and back.cause == 1
    x = rng.normal(size=(100, 3))
    ts = rng.uniform(0, d.times.max() * 1.1, size=100)
    for xi, ti in zip(x, ts):
        assert abs(back.cif(xi[None, :], ti)[0] - model.cif(xi[None, :], ti)[0]) <= 1e-15


def test_model_document_field_order(rng):
    doc = model_to_dict(fit_model("finegray", random_competing(rng, 60), 1))
    assert list(doc) == ["schema_version", "model_kind", "cause", "beta", "baseline", "meta"]
    assert list(doc["baseline"]) == ["jump_times", "values", "initial_value"]


def test_model_load_errors(tmp_path, rng):
    doc = model_to_dict(fit_model("cox", random_competing(rng, 60), 1))
    text = json.dumps(doc)
    (tmp_path / "trunc.json").write_text(text[: len(text) // 2])
    with pytest.raises(DataError, match="not a valid model file"):
        load_model(tmp_path / "trunc.json")
    with pytest.raises(DataError, match="unknown model_kind"):
        model_from_dict({**doc, "model_kind": "deephit"})
    with pytest.raises(DataError, match="schema version"):
        model_from_dict({**doc, "schema_version": 99})


def test_read_config(tmp_path):
    p = tmp_path / "study.ini"
    p.write_text("[simulation]\nn = 500\nseed = 9\nreplications = 3\n"
                 "[study]\nhorizons = 0.25, 1.0\ncause = 2\n"
                 "[evaluation]\ngroup = x3>=0\n"
                 "[policy]\nthreshold = 0.2\nage_covariate = x2\n")
    cfg = read_config(p)
    assert (cfg.sim.n, cfg.sim.seed, cfg.sim.replications) == (500, 9, 3)
    assert cfg.horizons == (0.25, 1.0) and cfg.cause == 2
    assert cfg.group == "x3>=0" and cfg.threshold == 0.2 and cfg.age_covariate == "x2"
    assert cfg.min_age == StudyConfig().min_age
    p.write_text("[simulation]\nn = many\n")
    with pytest.raises(DataError):
        read_config(p)


def test_read_config_inline_comments(tmp_path):
    p = tmp_path / "study.ini"
    p.write_text("[simulation]\nn = 400   ; subjects\n[policy]\nage_covariate =   ; none\n")
    cfg = read_config(p)
    assert cfg.sim.n == 400 and cfg.age_covariate is None
