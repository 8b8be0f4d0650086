"""Apartment-rent schema, CSV ingestion, encoding, synthetic generation, splitting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, SchemaError

DIRECTIONS = ("North", "Northeast", "East", "Southeast", "South",
              "Southwest", "West", "Northwest", "Others")
STRUCTURES = ("W", "B", "S", "RC", "SRC", "PC", "HPC", "LS", "ALC", "RCB", "Others")
LAYOUTS = ("R", "K", "SK", "DK", "SDK", "LK", "SLK", "LDK", "SLDK")
USE_DISTRICTS = ("1 Exc Low", "2 Exc Low", "1 Exc Med", "2 Exc Med", "1 Res", "2 Res",
                 "Quasi-Res", "Neighborhood Comm", "Commercial", "Quasi-Ind",
                 "Industrial", "Exc Ind", "Others")

# first level of each vocabulary is the omitted reference category
CATEGORICAL = {
    "direction": DIRECTIONS,
    "structure": STRUCTURES,
    "layout": LAYOUTS,
    "use_district": USE_DISTRICTS,
}
CONTINUOUS = ("years_built", "walk_time", "floor_area_ratio", "n_rooms")

CSV_COLUMNS = ("rent_price", "years_built", "walk_time", "n_rooms", "floor_area_ratio",
               "x_km", "y_km", "direction", "structure", "layout", "use_district")

# nationwide listing counts per category level
CATEGORY_COUNTS = {
    "direction": (156843, 81173, 595252, 473041, 1749315, 458125, 404994, 78836, 591053),
    "structure": (1024081, 570, 844184, 1892428, 190048, 11924, 802, 559974, 58373, 597, 5651),
    "layout": (423815, 1729903, 6919, 890584, 5123, 516, 138, 1505821, 25813),
    "use_district": (780638, 25793, 689879, 321441, 1030319, 211076, 59863, 386531,
                     615630, 371672, 83826, 11949, 15),
}

# published OLS estimates on log rent, used as plausible synthetic effect sizes
SYNTHETIC_EFFECTS = {
    "years_built": -1.15e-3,
    "walk_time": -4.88e-5,
    "floor_area_ratio": 1.30e-3,
    "n_rooms": 1.49e-1,
    "direction": (0.0, 8.09e-2, -4.45e-3, 5.40e-3, -2.33e-2, 2.46e-3, 1.94e-3, 7.39e-2, -6.85e-2),
    "structure": (0.0, 1.88e-1, 9.41e-2, 2.40e-1, 3.67e-1, 2.14e-1, 9.13e-2, 5.34e-2,
                  9.17e-2, 1.20e-1, 1.61e-1),
    "layout": (0.0, 4.22e-2, 1.10e-1, 1.37e-1, 3.65e-1, 2.79e-1, 3.04e-1, 2.76e-1, 6.06e-1),
    "use_district": (0.0, -1.15e-1, -1.52e-1, -2.77e-1, -2.36e-1, -2.48e-1, -2.92e-1,
                     -2.63e-1, -4.63e-1, -1.91e-1, -2.46e-1, -3.17e-1, 5.00e-1),
}


@dataclass(frozen=True, slots=True)
class PropertyRecord:
    rent_price: float
    years_built: float
    walk_time: float
    n_rooms: int
    floor_area_ratio: float
    x: float
    y: float
    direction: str
    structure: str
    layout: str
    use_district: str

    def __post_init__(self):
        if not self.rent_price > 0:
            raise SchemaError(f"rent_price must be positive, got {self.rent_price}")
        if self.n_rooms < 1:
            raise SchemaError(f"n_rooms must be >= 1, got {self.n_rooms}")
        for col, vocab in CATEGORICAL.items():
            if getattr(self, col) not in vocab:
                raise SchemaError(f"column {col!r}: unknown label {getattr(self, col)!r}")


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    coords: np.ndarray
    column_names: list[str]

    def __post_init__(self):
        n = self.X.shape[0]
        if self.y.shape[0] != n or self.coords.shape[0] != n:
            raise SchemaError("X, y and coords must have the same number of rows")
        if self.X.shape[1] != len(self.column_names):
            raise SchemaError("column_names does not match X")

    @property
    def n(self):
        return self.X.shape[0]

    def take(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows)
        return DesignMatrix(self.X[rows], self.y[rows], self.coords[rows], list(self.column_names))


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


def _parse_float(raw, col, line):
    try:
        v = float(raw)
    except ValueError:
        raise ParseError(f"column {col!r}: cannot parse {raw!r} as a number", line) from None
    if not math.isfinite(v):
        raise ParseError(f"column {col!r}: non-finite value {raw!r}", line)
    return v


def load_csv(path) -> tuple[list[PropertyRecord], int]:
    """Read listings from a CSV file.

    Returns the records and the number of rows dropped for having an empty
    field. Header must match ``CSV_COLUMNS`` exactly.
    """
    records = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header) != CSV_COLUMNS:
            raise SchemaError(f"header {header} does not match expected columns {list(CSV_COLUMNS)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line)
            row = [c.strip() for c in row]
            if any(c == "" for c in row):
                dropped += 1
                continue
            vals = dict(zip(CSV_COLUMNS, row))
            num = {c: _parse_float(vals[c], c, line) for c in CSV_COLUMNS[:7]}
            if num["n_rooms"] != int(num["n_rooms"]):
                raise ParseError(f"column 'n_rooms': {vals['n_rooms']!r} is not an integer", line)
            try:
                records.append(PropertyRecord(
                    rent_price=num["rent_price"], years_built=num["years_built"],
                    walk_time=num["walk_time"], n_rooms=int(num["n_rooms"]),
                    floor_area_ratio=num["floor_area_ratio"], x=num["x_km"], y=num["y_km"],
                    direction=vals["direction"], structure=vals["structure"],
                    layout=vals["layout"], use_district=vals["use_district"]))
            except SchemaError as exc:
                raise SchemaError(f"line {line}: {exc}") from None
    return records, dropped


def write_csv(records, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([repr(float(r.rent_price)), repr(float(r.years_built)), repr(float(r.walk_time)),
                        r.n_rooms, repr(float(r.floor_area_ratio)), repr(float(r.x)), repr(float(r.y)),
                        r.direction, r.structure, r.layout, r.use_district])


def column_names() -> list[str]:
    names = list(CONTINUOUS)
    for col, vocab in CATEGORICAL.items():
        names += [f"{col}_{level}" for level in vocab[1:]]
    return names


def encode(records) -> DesignMatrix:
    """One-hot encode records into a numeric design matrix with log-rent target.

    No intercept column is included; linear models add their own.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("cannot encode an empty record list")
    n = len(records)
    names = column_names()
    X = np.zeros((n, len(names)))
    for j, col in enumerate(CONTINUOUS):
        X[:, j] = [getattr(r, col) for r in records]
    offset = len(CONTINUOUS)
    for col, vocab in CATEGORICAL.items():
        lookup = {level: i for i, level in enumerate(vocab)}
        codes = np.fromiter((lookup[getattr(r, col)] for r in records), dtype=np.int64, count=n)
        rows = np.nonzero(codes > 0)[0]
        X[rows, offset + codes[rows] - 1] = 1.0
        offset += len(vocab) - 1
    y = np.log(np.array([r.rent_price for r in records], dtype=float))
    coords = np.array([(r.x, r.y) for r in records], dtype=float)
    return DesignMatrix(X, y, coords, names)


@dataclass
class SynthConfig:
    """Parameters of the synthetic listing generator.

    Continuous covariates are log-normal around the target medians; the log
    rent is a linear covariate effect plus an exponential-covariance Gaussian
    field (``sigma2``, ``phi``) and an independent nugget (``tau2``).
    """

    n: int = 10_000
    rent_median: float = 63_000.0
    years_built_median: float = 228.0
    walk_time_median: float = 640.0
    floor_area_ratio_median: float = 200.0
    years_built_logsd: float = 0.55
    walk_time_logsd: float = 0.7
    floor_area_ratio_logsd: float = 0.45
    room_probs: tuple = (0.60, 0.33, 0.06, 0.01)
    sigma2: float = 0.05
    phi: float = 0.2
    tau2: float = 0.03
    center: tuple = (352.2, 3931.0)
    n_cities: int = 3
    city_spread_km: float = 30.0
    city_sd_km: float = 6.0
    listings_per_zip: float = 6.0
    jitter_km: float = 0.2
    nonlinear: bool = False
    dense_cap: int = 2000
    field_k: int = 20
    shares: dict = field(default_factory=lambda: {c: tuple(np.array(v) / np.sum(v))
                                                  for c, v in CATEGORY_COUNTS.items()})

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown synthetic config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("room_probs", "center"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SyntheticSample:
    records: list
    linear_effect: np.ndarray
    spatial_field: np.ndarray
    nugget: np.ndarray
    intercept: float


def _lognormal(rng, median, logsd, n, lo=None, hi=None):
    v = median * np.exp(logsd * rng.standard_normal(n))
    if lo is not None or hi is not None:
        v = np.clip(v, lo, hi)
    return v


def _coordinates(cfg: SynthConfig, rng):
    n = cfg.n
    n_zip = max(1, int(round(n / cfg.listings_per_zip)))
    cities = np.asarray(cfg.center) + rng.uniform(-cfg.city_spread_km, cfg.city_spread_km, size=(cfg.n_cities, 2))
    which = rng.integers(cfg.n_cities, size=n_zip)
    zips = cities[which] + cfg.city_sd_km * rng.standard_normal((n_zip, 2))
    zip_of = rng.integers(n_zip, size=n)
    coords = zips[zip_of].copy()
    shared = np.bincount(zip_of, minlength=n_zip)[zip_of] > 1
    coords[shared] += rng.uniform(-cfg.jitter_km, cfg.jitter_km, size=(int(shared.sum()), 2))
    return coords


def gaussian_field(coords, sigma2, phi, rng, dense_cap=2000, k=20):
    """Zero-mean field with covariance sigma2*exp(-phi*d) at ``coords``.

    Dense Cholesky up to ``dense_cap`` sites, nearest-neighbour factor beyond.
    """
    n = coords.shape[0]
    z = rng.standard_normal(n)
    if sigma2 == 0:
        return np.zeros(n)
    from .geom import distance_matrix
    if n <= dense_cap:
        C = np.exp(-phi * distance_matrix(coords))
        L = None
        for jitter in (0.0, 1e-10, 1e-8, 1e-6):
            try:
                L = np.linalg.cholesky(C + jitter * np.eye(n))
                break
            except np.linalg.LinAlgError:
                continue
        if L is None:
            raise np.linalg.LinAlgError("field covariance is not positive definite")
        return math.sqrt(sigma2) * (L @ z)
    from .gp.nngp import build_neighbor_sets, vecchia_factors, CovarianceSpec
    order, sets = build_neighbor_sets(coords, k)
    fac = vecchia_factors(coords[order], sets, CovarianceSpec(1.0, phi, 0.0))
    w_ord = fac.sample(z)
    w = np.empty(n)
    w[order] = w_ord
    return math.sqrt(sigma2) * w


def _nonlinear_effect(cols, codes):
    walk = cols["walk_time"]
    age = cols["years_built"]
    rooms = cols["n_rooms"]
    concrete = np.isin(codes["structure"], [3, 4])
    return (-0.25 * np.tanh((walk - 900.0) / 300.0)
            + 0.20 * concrete * (age < 120)
            - 0.12 * np.log(rooms) ** 2
            + 0.10 * np.sin(age / 60.0))


def synthesize(config: SynthConfig | dict, seed: int, return_components: bool = False):
    """Seeded synthetic listings following the published marginals."""
    cfg = config if isinstance(config, SynthConfig) else SynthConfig.from_dict(config)
    n = int(cfg.n)
    if n <= 0:
        raise InvalidInputError("n must be positive")
    rng = np.random.default_rng(seed)
    coords = _coordinates(cfg, rng)
    cols = {
        "years_built": np.round(_lognormal(rng, cfg.years_built_median, cfg.years_built_logsd, n, 5, 1812)),
        "walk_time": np.round(_lognormal(rng, cfg.walk_time_median, cfg.walk_time_logsd, n, 1, 88000)),
        "floor_area_ratio": np.round(_lognormal(rng, cfg.floor_area_ratio_median,
                                                cfg.floor_area_ratio_logsd, n, 50, 1000)),
    }
    probs = np.asarray(cfg.room_probs, dtype=float)
    cols["n_rooms"] = 1 + rng.choice(probs.size, size=n, p=probs / probs.sum())
    codes = {}
    for col, vocab in CATEGORICAL.items():
        p = np.asarray(cfg.shares[col], dtype=float)
        codes[col] = rng.choice(len(vocab), size=n, p=p / p.sum())

    lin = np.zeros(n)
    for col in CONTINUOUS:
        lin += SYNTHETIC_EFFECTS[col] * cols[col]
    for col in CATEGORICAL:
        lin += np.asarray(SYNTHETIC_EFFECTS[col])[codes[col]]
    if cfg.nonlinear:
        lin += _nonlinear_effect(cols, codes)
    intercept = math.log(cfg.rent_median) - float(np.median(lin))
    lin += intercept

    w = gaussian_field(coords, cfg.sigma2, cfg.phi, rng, cfg.dense_cap, cfg.field_k)
    eps = math.sqrt(cfg.tau2) * rng.standard_normal(n)
    log_rent = lin + w + eps
    rent = np.exp(log_rent)

    records = [
        PropertyRecord(
            rent_price=float(rent[i]), years_built=float(cols["years_built"][i]),
            walk_time=float(cols["walk_time"][i]), n_rooms=int(cols["n_rooms"][i]),
            floor_area_ratio=float(cols["floor_area_ratio"][i]),
            x=float(coords[i, 0]), y=float(coords[i, 1]),
            direction=DIRECTIONS[codes["direction"][i]], structure=STRUCTURES[codes["structure"][i]],
            layout=LAYOUTS[codes["layout"][i]], use_district=USE_DISTRICTS[codes["use_district"][i]])
        for i in range(n)
    ]
    if return_components:
        return SyntheticSample(records, lin, w, eps, intercept)
    return records


def split(n: int, ratio: float, seed: int) -> SplitIndices:
    """Random train/test partition with ``round(ratio*n)`` training rows."""
    n = int(n)
    if n < 2:
        raise InvalidInputError("split needs at least 2 rows")
    if not 0 < ratio < 1:
        raise InvalidInputError("ratio must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(ratio * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:]))
