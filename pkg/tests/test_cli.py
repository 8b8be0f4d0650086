import csv
import json
import logging

import numpy as np
import pytest
import yaml

import spatialrent.benchmark as bm
from spatialrent.benchmark import BenchmarkConfig, partition, run_benchmark
from spatialrent.cli import main
from spatialrent.dataset import SynthConfig, synthesize, write_csv
from spatialrent.errors import CapacityError, ConfigError
from spatialrent.plots import emit_plots, metric_series

FAST = {
    "nngp": {"grid": {"alpha": [0.5, 1.0], "phi": [0.1, 0.3]}, "k": 8},
    "rf": {"n_trees": 15, "tune_trees": 5, "mtry_frac": [0.2, 0.5], "k": [3, 6], "h": 10},
    "gbt": {"nround": 10, "grid": {"max_depth": [2, 4], "eta": [0.3]}},
    "mlp": {"trials": 2, "space": {"n_hidden": [1], "width": [8], "epochs": [3], "learning_rate": [0.01]}},
}


def write_config(tmp_path, **kw):
    cfg = {"seed": 3, "sample_sizes": [100], "models": ["ols"], "cv_folds": 3,
           "data": {"synthetic": {"n": 150}}, "tuning": FAST, "out": str(tmp_path / "out")}
    cfg.update(kw)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_ols_run_shape(tmp_path):
    assert main(["run", "--config", str(write_config(tmp_path))]) == 0
    out = tmp_path / "out"
    rows = read_rows(out / "results.csv")
    assert [(r["metric"], r["scale"]) for r in rows] == [("mae", "log"), ("rmse", "log"), ("mape", "log"),
                                                         ("mape", "real")]
    assert all(r["model"] == "ols" and r["n"] == "100" for r in rows)
    bands = read_rows(out / "bands.csv")
    assert sum(int(b["count"]) for b in bands) == 20
    assert list(bands[0]) == ["model", "n", "band_low", "band_high", "mape", "count"]
    for name in ("results.json", "config_echo.json", "timings.csv", "failures.csv"):
        assert (out / name).exists()
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["seed"] == 3 and echo["models"] == ["ols"]


def test_unknown_model(tmp_path, capsys):
    assert main(["run", "--config", str(write_config(tmp_path, models=["xgboost_typo"]))]) == 2
    assert "xgboost_typo" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="rf_esf_app"):
        BenchmarkConfig.from_dict({"sample_sizes": [100], "models": ["xgboost_typo"], "data": {"synthetic": {}}})


def test_esf_capacity():
    with pytest.raises(CapacityError, match="10000"):
        BenchmarkConfig.from_dict({"sample_sizes": [20_000], "models": ["rf_esf"], "data": {"synthetic": {}}})


def test_config_errors(tmp_path):
    bad = [
        {"sample_sizes": [100], "models": ["ols"]},
        {"sample_sizes": [100], "models": ["ols"], "data": {"csv": "a", "synthetic": {}}},
        {"sample_sizes": [], "models": ["ols"], "data": {"synthetic": {}}},
        {"sample_sizes": [100], "models": ["ols"], "data": {"synthetic": {}}, "colour": 1},
        {"models": ["ols"], "data": {"synthetic": {}}},
    ]
    for d in bad:
        with pytest.raises(ConfigError):
            BenchmarkConfig.from_dict(d)
    p = tmp_path / "broken.yaml"
    p.write_text("seed: [1,\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        BenchmarkConfig.load(p)


def test_cli_overrides(tmp_path):
    p = write_config(tmp_path, models=["ols", "gbt"])
    assert main(["run", "--config", str(p), "--models", "gbt", "--seed", "9", "--out", str(tmp_path / "o2")]) == 0
    rows = read_rows(tmp_path / "o2" / "results.csv")
    assert {r["model"] for r in rows} == {"gbt"}
    assert json.loads((tmp_path / "o2" / "config_echo.json").read_text())["seed"] == 9


def test_all_models_complete(tmp_path):
    models = ["ols", "nngp", "rf_non_spatial", "rf_coordinates", "rf_sar", "rf_sar_coordinates", "rf_si",
              "rf_esf", "rf_esf_app", "gbt", "mlp"]
    cfg = BenchmarkConfig.load(write_config(tmp_path, models=models, sample_sizes=[80, 120]))
    out = run_benchmark(cfg)
    assert out["failures"] == []
    for m in models:
        for n in (80, 120):
            assert len([r for r in out["results"] if r["model"] == m and r["n"] == n]) == 4
    assert {t["stage"] for t in out["timings"]} == {"tune", "fit", "predict"}


def test_failure_is_recorded(tmp_path, monkeypatch):
    real = bm.make_model

    def flaky(name, params=None, seed=0):
        if name == "gbt":
            raise RuntimeError("boom")
        return real(name, params, seed)

    monkeypatch.setattr(bm, "make_model", flaky)
    cfg = BenchmarkConfig.load(write_config(tmp_path, models=["ols", "gbt"]))
    out = run_benchmark(cfg)
    assert [f["model"] for f in out["failures"]] == ["gbt"]
    assert "boom" in out["failures"][0]["error"]
    assert {r["model"] for r in out["results"]} == {"ols"}
    assert read_rows(tmp_path / "out" / "failures.csv")[0]["model"] == "gbt"


def test_determinism(tmp_path):
    p = write_config(tmp_path, models=["ols", "rf_coordinates", "gbt"])
    main(["run", "--config", str(p), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(p), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "bands.csv").read_bytes() == (tmp_path / "b" / "bands.csv").read_bytes()


def test_test_targets_do_not_affect_tuning(tmp_path):
    recs = synthesize(SynthConfig(n=160, sigma2=0.3), 1)
    write_csv(recs, tmp_path / "a.csv")
    base = {"seed": 4, "sample_sizes": [120], "models": ["nngp", "rf_sar", "gbt"], "cv_folds": 3,
            "tuning": FAST}
    cfg = BenchmarkConfig.from_dict({**base, "data": {"csv": str(tmp_path / "a.csv")}})
    _, test_rows = partition(cfg, len(recs), 120)
    rng = np.random.default_rng(0)
    shuffled = list(recs)
    for i in test_rows:
        shuffled[i] = type(recs[i])(**{**{f: getattr(recs[i], f) for f in recs[i].__slots__},
                                       "rent_price": float(rng.uniform(1e4, 1e6))})
    write_csv(shuffled, tmp_path / "b.csv")
    cfg_b = BenchmarkConfig.from_dict({**base, "data": {"csv": str(tmp_path / "b.csv")}})
    a = run_benchmark(cfg, write=False)
    b = run_benchmark(cfg_b, write=False)
    assert a["tuned"] == b["tuned"]
    assert a["results"] != b["results"]


def test_plots(tmp_path, caplog):
    p = write_config(tmp_path, models=["ols", "gbt"], sample_sizes=[60, 90, 120])
    main(["run", "--config", str(p)])
    out = tmp_path / "out"
    series = metric_series(read_rows(out / "results.csv"))
    assert len(series[("mae", "log")]) == 2
    assert all(len(pts) == 3 for pts in series[("mae", "log")].values())
    first = emit_plots(out, tmp_path / "p1")
    second = emit_plots(out, tmp_path / "p2")
    assert [f.name for f in first] == ["mae_log.svg", "mape_log.svg", "mape_real.svg", "rmse_log.svg", "bands.svg"]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    svg = (tmp_path / "p1" / "mae_log.svg").read_text()
    assert svg.count("<g id=\"line2d_") >= 2
    empty = tmp_path / "empty"
    empty.mkdir()
    with caplog.at_level(logging.WARNING):
        assert emit_plots(empty) == []
    assert "no results" in caplog.text
    assert list(empty.iterdir()) == []
    assert main(["plot", str(out), "--out", str(tmp_path / "p3")]) == 0
