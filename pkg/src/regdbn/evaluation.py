"""Error metrics and the repeated-subsampling benchmark.

For every training fraction and repetition one subset is drawn from the
training set, every model is fitted on that same subset, and MAE/RMSE are
measured on the fixed test set.  Repetition ``r`` of fraction ``f`` draws from
``RngStream(seed).child(f"fraction={f!r}").child(f"rep={r}")``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .data import Dataset, subsample_indices
from .errors import DimensionError, ExperimentError, RejectedInputError
from .numerics import RngStream

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("model", "fraction", "mae_min", "mae_max", "mae_avg",
                  "rmse_min", "rmse_max", "rmse_avg")
DETAIL_COLUMNS = ("model", "fraction", "rep", "mae", "rmse")


def _pair(predictions, observations):
    p = np.asarray(predictions, dtype=float).reshape(-1)
    o = np.asarray(observations, dtype=float).reshape(-1)
    if p.shape != o.shape or p.size == 0:
        raise DimensionError(f"need equal non-zero lengths, got {p.size} and {o.size}")
    return p, o


def mae(predictions, observations) -> float:
    p, o = _pair(predictions, observations)
    return float(np.mean(np.abs(p - o)))


def rmse(predictions, observations) -> float:
    p, o = _pair(predictions, observations)
    return float(np.sqrt(np.mean((p - o) ** 2)))


def improvement_pct(base_error: float, model_error: float) -> float:
    """Percentage reduction of ``model_error`` relative to ``base_error``."""
    if base_error <= 0:
        raise RejectedInputError("base error must be positive")
    return 100.0 * (base_error - model_error) / base_error


class ModelBuilder(Protocol):
    name: str

    def fit(self, train: Dataset, stream: RngStream) -> Callable[[np.ndarray], np.ndarray]:
        """Train from scratch and return a predictor in original target units."""


@dataclass(frozen=True)
class RepResult:
    model: str
    fraction: float
    rep: int
    mae: float
    rmse: float
    fingerprint: str
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class CellSummary:
    mae_min: float
    mae_max: float
    mae_avg: float
    rmse_min: float
    rmse_max: float
    rmse_avg: float
    reps: int
    failures: int


@dataclass
class BootstrapReport:
    seed: int
    fractions: list[float]
    models: list[str]
    results: list[RepResult] = field(default_factory=list)

    def cell(self, model: str, fraction: float) -> CellSummary:
        rows = [r for r in self.results if r.model == model and r.fraction == fraction]
        ok = [r for r in rows if not r.failed]
        if not ok:
            nan = float("nan")
            return CellSummary(nan, nan, nan, nan, nan, nan, 0, len(rows))
        m = np.array([r.mae for r in ok])
        s = np.array([r.rmse for r in ok])
        return CellSummary(float(m.min()), float(m.max()), float(m.mean()),
                           float(s.min()), float(s.max()), float(s.mean()),
                           len(ok), len(rows) - len(ok))

    def fingerprints(self) -> dict:
        """(fraction, rep) -> set of subset fingerprints seen by the models."""
        out: dict = {}
        for r in self.results:
            out.setdefault((r.fraction, r.rep), set()).add(r.fingerprint)
        return out


def subset_fingerprint(rows) -> str:
    """Order-insensitive hash of training-row indices."""
    return hashlib.sha256(np.sort(np.asarray(rows, dtype=np.int64)).tobytes()).hexdigest()[:16]


def _run_unit(args):
    models, train, test, fraction, rep, seed = args
    unit = RngStream(seed).child(f"fraction={fraction!r}").child(f"rep={rep}")
    rows = subsample_indices(len(train), fraction, unit.child("subset"))
    fp = subset_fingerprint(rows)
    subset = train.take(rows)
    out = []
    for builder in models:
        try:
            predict = builder.fit(subset, unit.child("model"))
            pred = np.asarray(predict(test.features), dtype=float)
            if not np.all(np.isfinite(pred)):
                raise ArithmeticError("non-finite predictions")
            m, s = mae(pred, test.targets), rmse(pred, test.targets)
            if m > s * (1 + 1e-12):
                raise AssertionError(f"MAE {m} exceeds RMSE {s}")
            out.append(RepResult(builder.name, fraction, rep, m, s, fp))
        except Exception as exc:  # a failed fit marks its cell, the run continues
            log.warning("%s failed at fraction %s rep %d: %s", builder.name, fraction, rep, exc)
            out.append(RepResult(builder.name, fraction, rep, float("nan"), float("nan"), fp,
                                 f"{type(exc).__name__}: {exc}"))
    log.debug("fraction %s rep %d subset %s", fraction, rep, fp)
    return out


def bootstrap_experiment(models: Sequence[ModelBuilder], train: Dataset, test: Dataset,
                         fractions: Sequence[float], reps: int, seed: int,
                         workers: int = 1) -> BootstrapReport:
    """Run the subsample-fit-evaluate protocol over every fraction."""
    if reps < 1:
        raise RejectedInputError("reps must be positive")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise RejectedInputError(f"duplicate model names: {names}")
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not 0 < f <= 1:
            raise RejectedInputError(f"fraction {f} outside (0, 1]")
    units = [(list(models), train, test, f, r, seed) for f in fractions for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_unit, units))
    else:
        chunks = [_run_unit(u) for u in units]
    report = BootstrapReport(seed, fractions, names)
    order = {n: i for i, n in enumerate(names)}
    flat = [r for chunk in chunks for r in chunk]
    report.results = sorted(flat, key=lambda r: (order[r.model], fractions.index(r.fraction), r.rep))
    for (fraction, rep), fps in report.fingerprints().items():
        if len(fps) != 1:
            raise ExperimentError(f"models saw different subsets at fraction {fraction} rep {rep}")
    for name in names:
        for f in fractions:
            cell = report.cell(name, f)
            if cell.failures * 2 > cell.failures + cell.reps:
                raise ExperimentError(f"{name} failed in {cell.failures} of {reps} repetitions "
                                      f"at fraction {f}")
    return report


def format_fraction(fraction: float) -> str:
    return f"{round(fraction * 100, 9):g}%"


def parse_fraction(text: str) -> float:
    return float(text.rstrip("%")) / 100.0


def _num(v: float) -> str:
    return format(v, ".17g")


def report_to_csv(report: BootstrapReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for name in report.models:
        for f in report.fractions:
            c = report.cell(name, f)
            writer.writerow([name, format_fraction(f)] + [_num(v) for v in (
                c.mae_min, c.mae_max, c.mae_avg, c.rmse_min, c.rmse_max, c.rmse_avg)])
    return buf.getvalue()


def detail_to_csv(report: BootstrapReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DETAIL_COLUMNS)
    for r in report.results:
        writer.writerow([r.model, format_fraction(r.fraction), r.rep, _num(r.mae), _num(r.rmse)])
    return buf.getvalue()


def parse_report_csv(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"model": rec["model"], "fraction": parse_fraction(rec["fraction"])}
        for col in REPORT_COLUMNS[2:]:
            row[col] = float(rec[col])
        rows.append(row)
    return rows


def parse_fraction_grid(text: str) -> list[float]:
    """``"5:100:5"`` (percent start:stop:step, inclusive) or ``"5,25,100"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise RejectedInputError(f"bad fraction grid {text!r}; expected start:stop:step")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        pcts = [start + i * step for i in range(count)]
    else:
        pcts = [float(p) for p in text.split(",") if p.strip()]
    out = [round(p, 9) / 100.0 for p in pcts]
    for f in out:
        if not 0 < f <= 1:
            raise RejectedInputError(f"fraction {f * 100:g}% outside (0, 100]")
    return out
