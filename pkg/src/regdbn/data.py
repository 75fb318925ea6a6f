"""Datasets: CSV input/output, year splits, subsampling, synthetic crash data."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RejectedInputError, SchemaError
from .numerics import RngStream


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    years: np.ndarray | None = None

    def __post_init__(self):
        x, y = self.features, self.targets
        if x.ndim != 2 or x.shape[1] < 1:
            raise DimensionError("features must be an n x d matrix with d >= 1")
        if y.shape != (x.shape[0],):
            raise DimensionError(f"{x.shape[0]} feature rows vs targets of shape {y.shape}")
        if len(self.feature_names) != x.shape[1]:
            raise DimensionError("one name per feature column")
        if self.years is not None and self.years.shape != y.shape:
            raise DimensionError("one year label per row")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise RejectedInputError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.targets.shape[0]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.features[rows], self.targets[rows], self.feature_names,
                       None if self.years is None else self.years[rows])


def load_csv(path, target_column: str = "target", year_column: str | None = None) -> Dataset:
    """Read a headed numeric CSV.  Remaining columns become features in header order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        for needed in [target_column] + ([year_column] if year_column else []):
            if needed not in header:
                raise SchemaError(f"{path}: missing column {needed!r}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise SchemaError(f"{path}: unparseable value {cell!r} at row {line_no}, "
                                      f"column {name}") from None
            rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    if not np.all(np.isfinite(data)):
        raise RejectedInputError(f"{path}: missing or non-finite values are not accepted")
    feat_cols = [i for i, h in enumerate(header) if h not in (target_column, year_column)]
    years = None
    if year_column:
        yc = data[:, header.index(year_column)]
        if np.any(yc != np.round(yc)):
            raise SchemaError(f"{path}: year column {year_column!r} must hold integers")
        years = yc.astype(int)
    return Dataset(data[:, feat_cols], data[:, header.index(target_column)],
                   tuple(header[i] for i in feat_cols), years)


def _fmt(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def write_csv(ds: Dataset, path, target_column: str = "target", year_column: str = "year") -> None:
    header = list(ds.feature_names) + [target_column]
    if ds.years is not None:
        header.append(year_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(ds)):
            row = [_fmt(v) for v in ds.features[i]] + [_fmt(ds.targets[i])]
            if ds.years is not None:
                row.append(str(int(ds.years[i])))
            writer.writerow(row)


def split_by_year(ds: Dataset, train_years, test_years) -> tuple[Dataset, Dataset]:
    if ds.years is None:
        raise RejectedInputError("dataset has no year labels")
    train_years, test_years = set(train_years), set(test_years)
    if train_years & test_years:
        raise RejectedInputError(f"train and test years overlap: {sorted(train_years & test_years)}")
    train_rows = np.flatnonzero(np.isin(ds.years, list(train_years)))
    test_rows = np.flatnonzero(np.isin(ds.years, list(test_years)))
    if train_rows.size == 0 or test_rows.size == 0:
        raise RejectedInputError("year split leaves an empty part")
    return ds.take(train_rows), ds.take(test_rows)


def subsample_size(n: int, fraction: float) -> int:
    # guard against 0.35 * 100 = 35.000000000000004
    return max(1, min(n, math.ceil(fraction * n - 1e-9)))


def subsample_indices(n: int, fraction: float, stream: RngStream) -> np.ndarray:
    if not 0 < fraction <= 1:
        raise RejectedInputError(f"fraction must lie in (0, 1], got {fraction}")
    return stream.permutation(n)[:subsample_size(n, fraction)]


def subsample(ds: Dataset, fraction: float, stream: RngStream) -> Dataset:
    """``ceil(fraction * n)`` rows drawn without replacement."""
    return ds.take(subsample_indices(len(ds), fraction, stream))


# ---------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    low: float
    high: float
    shape: str = "uniform"  # uniform | triangular | loguniform


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int
    features: tuple[FeatureSpec, ...]
    coefficients: tuple[float, ...]  # intercept first
    dispersion: float
    seed: int = 0
    years: tuple[int, ...] = tuple(range(2000, 2009))
    year_counts: tuple[int, ...] | None = None  # contiguous blocks instead of round-robin

    def __post_init__(self):
        if self.dispersion <= 0:
            raise RejectedInputError("dispersion must be positive")
        if len(self.coefficients) != len(self.features) + 1:
            raise RejectedInputError("need an intercept plus one coefficient per feature")
        for f in self.features:
            if not (np.isfinite(f.low) and np.isfinite(f.high) and f.low <= f.high):
                raise RejectedInputError(f"feature {f.name}: invalid range [{f.low}, {f.high}]")
            if f.shape == "loguniform" and f.low <= 0:
                raise RejectedInputError(f"feature {f.name}: loguniform needs a positive range")
        if self.year_counts is not None and (len(self.year_counts) != len(self.years)
                                             or sum(self.year_counts) != self.n_rows):
            raise RejectedInputError("year_counts must give one count per year summing to n_rows")


def _draw_feature(f: FeatureSpec, n: int, stream: RngStream) -> np.ndarray:
    g = stream.generator
    if f.shape == "uniform":
        return g.uniform(f.low, f.high, n)
    if f.shape == "triangular":
        if f.low == f.high:
            return np.full(n, f.low)
        return g.triangular(f.low, f.low, f.high, n)
    if f.shape == "loguniform":
        return np.exp(g.uniform(np.log(f.low), np.log(f.high), n))
    raise RejectedInputError(f"unknown feature shape {f.shape!r}")


def synthesize(spec: SynthSpec) -> Dataset:
    """NB2 counts with mean ``exp(b0 + sum b_i x_i)`` over drawn features.

    Counts are drawn as Poisson(Gamma(k, mu / k)) mixtures.
    """
    root = RngStream(spec.seed)
    x = np.column_stack([_draw_feature(f, spec.n_rows, root.child(f"feature/{f.name}"))
                         for f in spec.features])
    coef = np.asarray(spec.coefficients, dtype=float)
    eta = coef[0] + x @ coef[1:]
    if np.max(eta) > 30:
        raise RejectedInputError(f"linear predictor reaches {np.max(eta):.3g} > 30; mean would overflow")
    mu = np.exp(eta)
    g = root.child("counts").generator
    k = spec.dispersion
    lam = g.gamma(k, mu / k)
    y = g.poisson(lam).astype(float)
    if spec.year_counts is None:
        years = np.asarray(spec.years)[np.arange(spec.n_rows) % len(spec.years)]
    else:
        years = np.repeat(spec.years, spec.year_counts)
    return Dataset(x, y, tuple(f.name for f in spec.features), years.astype(int))


CASE1_FEATURES = (
    FeatureSpec("exposure", 0.2, 12.7, "loguniform"),
    FeatureSpec("aadt", 14.5, 442.9, "loguniform"),
    FeatureSpec("left_shoulder", 0.5, 3.5),
    FeatureSpec("median_width", 2.0, 30.0, "triangular"),
    FeatureSpec("right_shoulder", 1.0, 3.5),
    FeatureSpec("curve_deflection", 0.0, 40.0, "triangular"),
)

CASE2_FEATURES = tuple(
    FeatureSpec(name, lo, hi, shape) for name, lo, hi, shape in (
        ("region", 0.0, 5.0, "uniform"),
        ("road_type", 0.0, 3.0, "uniform"),
        ("storm_hour", 0.0, 48.0, "triangular"),
        ("month_id", 1.0, 6.0, "uniform"),
        ("temperature", -30.0, 5.0, "uniform"),
        ("wind_speed", 0.0, 60.0, "triangular"),
        ("visibility", 0.1, 25.0, "loguniform"),
        ("precipitation", 0.0, 10.0, "triangular"),
        ("rsi", 0.1, 1.0, "uniform"),
        ("wrm", 0.0, 1.0, "uniform"),
        ("anti_icing", 0.0, 1.0, "uniform"),
        ("traffic_volume", 50.0, 8000.0, "loguniform"),
        ("length", 12.9, 139.5, "uniform"),
        ("paved_shoulder_full", 0.0, 100.0, "triangular"),
        ("paved_shoulder_partial", 0.0, 60.0, "triangular"),
        ("t_intersections", 0.0, 20.0, "triangular"),
    )
)


def preset_spec(name: str, seed: int = 0) -> SynthSpec:
    """Synthetic stand-ins sized like the two case studies."""
    if name == "case1":
        # 418 sections x 9 years
        return SynthSpec(
            n_rows=3762, features=CASE1_FEATURES,
            coefficients=(1.9, 0.15, 0.004, -0.12, -0.015, -0.15, 0.012),
            dispersion=3.0, seed=seed, years=tuple(range(2000, 2009)),
        )
    if name == "case2":
        # four training winters (85,183 rows) and two test winters (36,875 rows)
        return SynthSpec(
            n_rows=122058, features=CASE2_FEATURES,
            coefficients=(-4.2, 0.05, 0.1, 0.01, 0.02, -0.02, 0.01, -0.05, 0.08, -1.5,
                          -0.3, -0.2, 0.0004, 0.004, -0.003, 0.002, 0.02),
            dispersion=0.5, seed=seed, years=tuple(range(2000, 2006)),
            year_counts=(21295, 21296, 21296, 21296, 18437, 18438),
        )
    raise RejectedInputError(f"unknown synthetic preset {name!r}")


PRESET_SPLITS = {
    "case1": (tuple(range(2000, 2007)), (2007, 2008)),
    "case2": (tuple(range(2000, 2004)), (2004, 2005)),
}
