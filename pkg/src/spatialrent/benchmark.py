"""Seeded benchmark runs: subsample, split, tune on the training rows, score
the held-out rows, and write result tables.

The configuration is a YAML mapping; see ``README.md`` for the grammar.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dataset import SynthConfig, encode, load_csv, split, synthesize
from .errors import ConfigError
from .evaluation import band_edges, band_mape, expand_grid, grid_search, kfold, metrics
from .gp import grid_search_alpha_phi
from .mlp import random_search_tune
from .models import MODEL_NAMES, RF_VARIANTS, check_capacity, check_model_names, make_model
from .trees import tune_gbt

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("model", "n", "metric", "scale", "value")
BAND_COLUMNS = ("model", "n", "band_low", "band_high", "mape", "count")
TIMING_COLUMNS = ("model", "n", "stage", "runtime_s")
METRIC_ROWS = (("mae", "log"), ("rmse", "log"), ("mape", "log"), ("mape", "real"))

DEFAULT_TUNING = {
    "ols": {},
    "nngp": {"tune": True, "k": 30, "grid": {"alpha": [0.25, 0.5, 1.0, 2.0], "phi": [0.05, 0.1, 0.2, 0.5]}},
    "rf": {"tune": True, "n_trees": 500, "tune_trees": 100, "node_size": 5, "h": 200,
           "mtry": None, "mtry_frac": [0.2, 1 / 3, 0.5], "k": [3, 10, 20, 35], "lagged_x": False},
    "gbt": {"tune": True, "nround": 100, "grid": None},
    "mlp": {"tune": True, "trials": 10, "space": None},
}


@dataclass
class BenchmarkConfig:
    sample_sizes: list
    models: list
    seed: int = 0
    split_ratio: float = 0.8
    cv_folds: int = 5
    n_bands: int = 10
    csv: str | None = None
    synthetic: dict | None = None
    tuning: dict = field(default_factory=dict)
    out: str = "results"

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"data"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = d.pop("data", None) or {}
        if set(data) - {"csv", "synthetic"}:
            raise ConfigError("data block accepts only 'csv' or 'synthetic'")
        d.setdefault("csv", data.get("csv"))
        d.setdefault("synthetic", data.get("synthetic"))
        for key in ("sample_sizes", "models"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw)

    def validate(self):
        self.models = check_model_names(list(self.models))
        if not self.models:
            raise ConfigError("no models selected")
        self.sample_sizes = [int(n) for n in self.sample_sizes]
        if not self.sample_sizes or min(self.sample_sizes) < 10:
            raise ConfigError("sample_sizes must be a non-empty list of sizes >= 10")
        if (self.csv is None) == (self.synthetic is None):
            raise ConfigError("give exactly one data source: data.csv or data.synthetic")
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must lie in (0, 1)")
        unknown = set(self.tuning) - set(DEFAULT_TUNING) - set(MODEL_NAMES)
        if unknown:
            raise ConfigError(f"unknown tuning blocks: {sorted(unknown)}")
        for n in self.sample_sizes:
            for m in self.models:
                check_capacity(m, int(np.floor(self.split_ratio * n + 0.5)))

    def options(self, model):
        """Tuning block for ``model``: defaults, then the family block, then the model block."""
        family = "rf" if model in RF_VARIANTS else model
        opts = copy.deepcopy(DEFAULT_TUNING[family])
        opts.update(self.tuning.get(family, {}) or {})
        if model != family:
            opts.update(self.tuning.get(model, {}) or {})
        return opts


def _stream(*keys):
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


def load_data(cfg: BenchmarkConfig):
    if cfg.csv is not None:
        records, dropped = load_csv(cfg.csv)
        if dropped:
            log.warning("dropped %d rows with missing fields", dropped)
    else:
        syn = dict(cfg.synthetic)
        syn.setdefault("n", max(cfg.sample_sizes))
        records = synthesize(SynthConfig.from_dict(syn), seed=_stream(cfg.seed, 0))
    data = encode(records)
    if max(cfg.sample_sizes) > data.n:
        raise ConfigError(f"sample size {max(cfg.sample_sizes)} exceeds the {data.n} available rows")
    return data


def partition(cfg: BenchmarkConfig, n_available, n):
    """Seeded subsample of ``n`` rows and its train/test split (indices into the data)."""
    rows = np.sort(np.random.default_rng(_stream(cfg.seed, n, 1)).choice(n_available, size=n, replace=False))
    parts = split(n, cfg.split_ratio, _stream(cfg.seed, n, 2))
    return rows[parts.train], rows[parts.test]


def tune_model(name, opts, X, y, coords, folds, seed):
    """Hyperparameters for ``name`` chosen by CV on the given (training) rows."""
    if name == "ols":
        return {}
    tune = opts.get("tune", True)
    if name == "nngp":
        k = int(opts["k"])
        if not tune:
            return {"alpha": opts.get("alpha", 0.5), "phi": opts.get("phi", 0.1), "k": k}
        keep = np.nonzero(np.ptp(X, axis=0) > 0)[0]
        alpha, phi, _ = grid_search_alpha_phi(X[:, keep], y, coords, opts["grid"], folds=folds, k=k)
        return {"alpha": alpha, "phi": phi, "k": k}
    if name in RF_VARIANTS:
        fixed = {"n_trees": int(opts["n_trees"]), "node_size": int(opts["node_size"]),
                 "h": int(opts["h"]), "lagged_x": bool(opts["lagged_x"])}
        if opts.get("mtry") is not None:
            grid = {"mtry": [int(m) for m in _as_list(opts["mtry"])]}
        else:
            grid = {"mtry_frac": _as_list(opts["mtry_frac"])}
        if RF_VARIANTS[name] in ("sar", "sar_coordinates", "si"):
            grid["k"] = [int(k) for k in _as_list(opts["k"])]
        if not tune:
            return {**fixed, **{key: vals[0] for key, vals in grid.items()}}
        tuning = {**fixed, "n_trees": int(opts.get("tune_trees", fixed["n_trees"]))}
        best, _ = grid_search(lambda **cell: make_model(name, {**tuning, **cell}, seed), expand_grid(grid),
                              X, y, coords, folds, "rmse",
                              tie_key=lambda c: (c.get("mtry", 0), c.get("mtry_frac", 0), c.get("k", 0)))
        return {**fixed, **best}
    if name == "gbt":
        base = make_model("gbt", {"nround": int(opts["nround"])}, seed).config
        if not tune:
            return asdict(base)
        grid = opts.get("grid")
        best, _ = tune_gbt(X, y, folds, grid=grid, base_config=base, coords=coords)
        return asdict(best)
    # mlp
    if not tune:
        return {k: v for k, v in opts.items() if k not in ("tune", "trials", "space")}
    cfg, spec, _ = random_search_tune(opts.get("space"), int(opts["trials"]), folds, seed, X, y)
    out = {k: v for k, v in asdict(cfg).items() if k in ("optimizer", "learning_rate", "batch_size", "epochs")}
    out["hidden"] = list(spec.layer_widths[1:-1])
    return out


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def run_benchmark(cfg: BenchmarkConfig, write=True):
    """Run every (size, model) cell; returns the result dictionary.

    A model that raises during tuning, fitting or scoring is recorded under
    ``failures`` and the run continues.
    """
    data = load_data(cfg)
    results, bands, timings, tuned, failures = [], [], [], [], []
    for n in cfg.sample_sizes:
        train_rows, test_rows = partition(cfg, data.n, n)
        tr, te = data.take(train_rows), data.take(test_rows)
        folds = kfold(tr.n, cfg.cv_folds, _stream(cfg.seed, n, 3))
        edges = band_edges(te.y, cfg.n_bands)
        for name in cfg.models:
            seed = _stream(cfg.seed, n, 4, MODEL_NAMES.index(name))
            stage = {}
            try:
                t0 = time.perf_counter()
                params = tune_model(name, cfg.options(name), tr.X, tr.y, tr.coords, folds, seed)
                stage["tune"] = time.perf_counter() - t0
                t0 = time.perf_counter()
                model = make_model(name, params, seed).fit(tr.X, tr.y, tr.coords)
                stage["fit"] = time.perf_counter() - t0
                t0 = time.perf_counter()
                pred = model.predict(te.X, te.coords)
                stage["predict"] = time.perf_counter() - t0
                if not np.all(np.isfinite(pred)):
                    raise ArithmeticError("non-finite predictions")
                rep = metrics(te.y, pred)
                band = band_mape(te.y, pred, edges)
            except Exception as exc:  # recorded, not swallowed: see failures
                log.warning("model %s at n=%d failed: %s", name, n, exc)
                failures.append({"model": name, "n": n, "error": f"{type(exc).__name__}: {exc}"})
                continue
            values = {("mae", "log"): rep.mae, ("rmse", "log"): rep.rmse,
                      ("mape", "log"): rep.mape_log, ("mape", "real"): rep.mape_real}
            for metric, scale in METRIC_ROWS:
                results.append({"model": name, "n": n, "metric": metric, "scale": scale,
                                "value": values[(metric, scale)]})
            for lo, hi, m, c in band.rows():
                bands.append({"model": name, "n": n, "band_low": lo, "band_high": hi, "mape": m, "count": c})
            for s, t in stage.items():
                timings.append({"model": name, "n": n, "stage": s, "runtime_s": t})
            tuned.append({"model": name, "n": n, "params": _jsonable(params)})
    out = {"config": _jsonable(asdict(cfg)), "results": results, "bands": bands, "timings": timings,
           "tuned": tuned, "failures": failures}
    if write:
        write_outputs(out, cfg.out)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out, directory):
    """results.csv, bands.csv, timings.csv, failures.csv, results.json, config_echo.json.

    Wall-clock times live only in timings.csv and results.json so that
    results.csv is byte-identical across runs.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": _csv_text(RESULT_COLUMNS, out["results"]),
        "bands.csv": _csv_text(BAND_COLUMNS, out["bands"]),
        "timings.csv": _csv_text(TIMING_COLUMNS, out["timings"]),
        "failures.csv": _csv_text(("model", "n", "error"), out["failures"]),
        "results.json": json.dumps(out, indent=2, sort_keys=True) + "\n",
        "config_echo.json": json.dumps(out["config"], indent=2, sort_keys=True) + "\n",
    }
    for name, text in files.items():
        atomic_write(d / name, text)
    return [d / name for name in files]
