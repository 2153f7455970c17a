"""External forecast panels: CSV I/O, the MSFE-ratio benchmark and the heavy-tail screen.

Panel CSV (long format, UTF-8, header required)::

    series_id,split,t,month,actual,f_<method1>,...,f_<methodM>

``split`` is ``train`` or ``test``.  Train rows carry the history and may
leave the forecast cells blank; every test row needs every forecast cell.
``month`` is the calendar month 1-12 of the observation.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .combiners import AfterOptions, check_names, make_combiner

REQUIRED_COLUMNS = ("series_id", "split", "t", "month", "actual")
FORECAST_PREFIX = "f_"


class PanelFormatError(ValueError):
    """The panel file violates the CSV schema."""

    def __init__(self, msg: str, line: Optional[int] = None, series_id: Optional[str] = None):
        self.line = line
        self.series_id = series_id
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + msg)


class NotScreenable(ValueError):
    """The training history is too short for the screening regression."""


@dataclass
class PanelRecord:
    series_id: str
    history: np.ndarray
    history_months: np.ndarray
    actuals: np.ndarray
    test_months: np.ndarray
    forecasts: np.ndarray  # (len(actuals), len(method_names))
    method_names: Tuple[str, ...]

    def __post_init__(self):
        self.history = np.asarray(self.history, dtype=float)
        self.history_months = np.asarray(self.history_months, dtype=int)
        self.actuals = np.asarray(self.actuals, dtype=float)
        self.test_months = np.asarray(self.test_months, dtype=int)
        self.forecasts = np.asarray(self.forecasts, dtype=float).reshape(len(self.actuals), -1)
        self.method_names = tuple(self.method_names)
        if self.forecasts.shape[1] != len(self.method_names):
            raise ValueError(f"series {self.series_id}: forecast columns do not match method names")
        if self.history.shape != self.history_months.shape or self.actuals.shape != self.test_months.shape:
            raise ValueError(f"series {self.series_id}: month index length mismatch")
        for arr in (self.history, self.actuals, self.forecasts):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"series {self.series_id}: non-finite value")

    @property
    def n_periods(self) -> int:
        return len(self.actuals)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_float(text: str, line: int, sid: str, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise PanelFormatError(f"series {sid}: column {col} is not a number: {text!r}", line, sid) from None
    if not math.isfinite(v):
        raise PanelFormatError(f"series {sid}: column {col} is not finite", line, sid)
    return v


def load_panel_csv(path) -> List[PanelRecord]:
    """Read and validate a panel file.  Series keep their order of first appearance."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PanelFormatError("empty file (header row required)", 1) from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise PanelFormatError(f"missing required columns: {', '.join(missing)}", 1)
        fcols = [i for i, h in enumerate(header) if h.startswith(FORECAST_PREFIX)]
        if not fcols:
            raise PanelFormatError("no forecast columns (f_<method>)", 1)
        names = tuple(header[i][len(FORECAST_PREFIX):] for i in fcols)
        if len(set(names)) != len(names) or any(not n for n in names):
            raise PanelFormatError("forecast column names must be non-empty and distinct", 1)
        idx = {c: header.index(c) for c in REQUIRED_COLUMNS}

        groups: Dict[str, dict] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PanelFormatError(f"expected {len(header)} fields, found {len(row)}", line)
            sid = row[idx["series_id"]].strip()
            if not sid:
                raise PanelFormatError("blank series_id", line)
            split = row[idx["split"]].strip().lower()
            if split not in ("train", "test"):
                raise PanelFormatError(f"series {sid}: split must be train or test, got {split!r}", line, sid)
            try:
                t = int(row[idx["t"]])
                month = int(row[idx["month"]])
            except ValueError:
                raise PanelFormatError(f"series {sid}: t and month must be integers", line, sid) from None
            if not 1 <= month <= 12:
                raise PanelFormatError(f"series {sid}: month must be in 1..12, got {month}", line, sid)
            actual = _parse_float(row[idx["actual"]], line, sid, "actual")
            g = groups.setdefault(sid, {"train": [], "test": []})
            if split == "test":
                cells = [row[i].strip() for i in fcols]
                for name, c in zip(names, cells):
                    if not c:
                        raise PanelFormatError(f"series {sid}: blank forecast cell f_{name}", line, sid)
                f = [_parse_float(c, line, sid, "f_" + n) for n, c in zip(names, cells)]
                g["test"].append((t, month, actual, f, line))
            else:
                g["train"].append((t, month, actual, None, line))

    records = []
    for sid, g in groups.items():
        for split in ("train", "test"):
            g[split].sort(key=lambda r: r[0])
            ts = [r[0] for r in g[split]]
            if len(set(ts)) != len(ts):
                raise PanelFormatError(f"series {sid}: duplicate t in {split} rows", g[split][0][4], sid)
        if not g["test"]:
            raise PanelFormatError(f"series {sid}: no test rows", None, sid)
        records.append(PanelRecord(
            series_id=sid,
            history=[r[2] for r in g["train"]],
            history_months=[r[1] for r in g["train"]],
            actuals=[r[2] for r in g["test"]],
            test_months=[r[1] for r in g["test"]],
            forecasts=[r[3] for r in g["test"]],
            method_names=names,
        ))
    if not records:
        raise PanelFormatError("no data rows")
    names0 = records[0].method_names
    if any(r.method_names != names0 for r in records):
        raise PanelFormatError("all series must share the same forecast columns")
    return records


def write_panel_csv(records: Sequence[PanelRecord], path) -> None:
    """Write records in the long format; floats use repr so a reload is bit-exact."""
    if not records:
        raise ValueError("nothing to write")
    names = records[0].method_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*REQUIRED_COLUMNS, *(FORECAST_PREFIX + n for n in names)])
        for rec in records:
            if rec.method_names != names:
                raise ValueError("all series must share the same forecast columns")
            for t, (y, m) in enumerate(zip(rec.history, rec.history_months), start=1):
                w.writerow([rec.series_id, "train", t, int(m), repr(float(y)), *[""] * len(names)])
            base = len(rec.history)
            for k, (y, m) in enumerate(zip(rec.actuals, rec.test_months), start=1):
                w.writerow([rec.series_id, "test", base + k, int(m), repr(float(y)),
                            *(repr(float(v)) for v in rec.forecasts[k - 1])])


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

@dataclass
class PanelSummary:
    method: str
    mean: float
    se: float
    median: float
    min: float
    q1: float
    q3: float
    max: float

    def row(self) -> list:
        return [self.method, *(repr(float(getattr(self, k))) for k in
                               ("mean", "se", "median", "min", "q1", "q3", "max"))]


@dataclass
class BenchmarkResult:
    methods: Tuple[str, ...]
    series_ids: List[str]
    msfe: np.ndarray    # (n_series, n_methods)
    ratios: np.ndarray  # vs SA
    skipped: List[str] = field(default_factory=list)

    def summaries(self) -> List[PanelSummary]:
        return [summarize(name, self.ratios[:, i]) for i, name in enumerate(self.methods)]

    def summary_csv(self) -> str:
        lines = ["method,mean,se,median,min,q1,q3,max"]
        lines += [",".join(map(str, s.row())) for s in self.summaries()]
        return "\n".join(lines) + "\n"

    def ratios_csv(self) -> str:
        lines = ["series_id," + ",".join(self.methods)]
        for sid, row in zip(self.series_ids, self.ratios):
            lines.append(sid + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = f"{'':<9}" + "".join(f"{k:>9}" for k in ("mean", "se", "median", "min", "Q1", "Q3", "max"))
        out = [f"{len(self.series_ids)} series, MSFE ratios vs SA", head]
        for s in self.summaries():
            out.append(f"{s.method:<9}" + "".join(f"{v:>9.3f}" for v in
                                                  (s.mean, s.se, s.median, s.min, s.q1, s.q3, s.max)))
        return "\n".join(out) + "\n"


def summarize(method: str, ratios) -> PanelSummary:
    """Mean, its standard error, and the five-number summary (linear-interpolation quantiles)."""
    # sorted first so the result does not depend on series order, even in the last bit
    r = np.sort(np.asarray(ratios, dtype=float))
    if r.size == 0:
        raise ValueError("no ratios to summarize")
    mean = math.fsum(r) / r.size
    se = math.sqrt(math.fsum((r - mean) ** 2) / (r.size - 1) / r.size) if r.size > 1 else 0.0
    q = np.quantile(r, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return PanelSummary(method, mean, se, float(q[2]), float(q[0]), float(q[1]),
                        float(q[3]), float(q[4]))


def _msfe_ratio(m: float, base: float) -> float:
    if base == 0.0:
        return 1.0 if m == 0.0 else math.inf
    return m / base


def series_msfe(record: PanelRecord, methods: Sequence[str], warmup: int = 6, n_scored: int = 9,
                after: Optional[AfterOptions] = None) -> Dict[str, float]:
    """MSFE over the last ``n_scored`` periods for each method on one series.

    Every method absorbs every period in order.  Combined forecasts count
    from period ``warmup`` (0-based); AFTER scale estimators stay neutral
    until they have seen ``warmup`` errors, so AFTER weights begin uniform.
    """
    T = record.n_periods
    if T < warmup + n_scored:
        raise ValueError(f"series {record.series_id}: {T} periods, need {warmup + n_scored}")
    after = after or AfterOptions(warmup=warmup)
    F, y = record.forecasts, record.actuals
    J = F.shape[1]
    out = {}
    for name in methods:
        comb = make_combiner(name, J, after)
        sq = []
        for i in range(T):
            if i >= T - n_scored:
                sq.append((y[i] - comb.forecast(F[i])) ** 2)
            comb.absorb(F[i], y[i])
        out[name] = float(np.mean(sq))
    return out


def _series_job(args):
    return series_msfe(*args)


def run_panel_benchmark(records: Sequence[PanelRecord], methods: Sequence[str], warmup: int = 6,
                        n_scored: int = 9, after: Optional[AfterOptions] = None,
                        jobs: int = 1) -> BenchmarkResult:
    """MSFE of every method on every long-enough series, and its ratio to SA's."""
    methods = check_names(methods)
    if warmup < 0 or n_scored < 1:
        raise ValueError("warmup must be >= 0 and n_scored >= 1")
    need = warmup + n_scored
    run_names = methods if "SA" in methods else (*methods, "SA")
    kept, skipped = [], []
    for rec in records:
        if rec.n_periods < need:
            warnings.warn(f"skipping series {rec.series_id}: {rec.n_periods} forecast periods, need {need}")
            skipped.append(rec.series_id)
        else:
            kept.append(rec)
    args = [(rec, run_names, warmup, n_scored, after) for rec in kept]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per = list(ex.map(_series_job, args))
    else:
        per = [_series_job(a) for a in args]
    msfe = np.array([[d[n] for n in methods] for d in per]).reshape(len(per), len(methods))
    ratios = np.array([[_msfe_ratio(d[n], d["SA"]) for n in methods] for d in per]).reshape(msfe.shape)
    return BenchmarkResult(tuple(methods), [r.series_id for r in kept], msfe, ratios, skipped)


# ---------------------------------------------------------------------------
# heavy-tail screen
# ---------------------------------------------------------------------------

MIN_SCREEN_HISTORY = 30
N_LAGS = 5


@dataclass
class ScreenResult:
    heavy: bool
    kurtosis: float
    terms: Tuple[str, ...]
    aic_path: List[Tuple[Optional[str], float]]  # (term removed, AIC after removal); first entry is the full model

    def __bool__(self):
        return self.heavy


def screen_design(history, months, n_lags: int = N_LAGS) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Response and full design: intercept, month dummies 1..11 (December baseline), lags."""
    y = np.asarray(history, dtype=float)
    m = np.asarray(months, dtype=int)
    rows = np.arange(n_lags, len(y))
    cols = [np.ones(rows.size)]
    names = ["const"]
    for j in range(1, 12):
        cols.append((m[rows] == j).astype(float))
        names.append(f"month{j}")
    for k in range(1, n_lags + 1):
        cols.append(y[rows - k])
        names.append(f"lag{k}")
    return y[rows], np.column_stack(cols), names


def aic(y: np.ndarray, X: np.ndarray) -> Tuple[float, np.ndarray]:
    """Gaussian AIC n ln(RSS/n) + 2k and the OLS residuals."""
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    n = y.size
    rss = float(resid @ resid)
    # a perfect fit would give -inf; clamp so elimination still terminates deterministically
    rss = max(rss, np.finfo(float).tiny)
    return n * math.log(rss / n) + 2 * X.shape[1], resid


def raw_kurtosis(resid) -> float:
    r = np.asarray(resid, dtype=float)
    r = r - r.mean()
    m2 = float(np.mean(r ** 2))
    if m2 == 0.0:
        return math.nan
    return float(np.mean(r ** 4)) / m2 ** 2


def heavy_tail_screen_history(history, months, min_history: int = MIN_SCREEN_HISTORY) -> ScreenResult:
    if len(history) != len(months):
        raise ValueError("history and months differ in length")
    if len(history) < min_history:
        raise NotScreenable(f"history of {len(history)} observations, need {min_history}")
    y, X, names = screen_design(history, months)
    active = list(range(X.shape[1]))
    best, resid = aic(y, X)
    path: List[Tuple[Optional[str], float]] = [(None, best)]
    while len(active) > 1:
        trials = []
        for c in active[1:]:  # index 0 is the intercept
            keep = [a for a in active if a != c]
            trials.append((aic(y, X[:, keep])[0], c))
        val, c = min(trials)
        if not val < best:
            break
        active.remove(c)
        best, resid = aic(y, X[:, active])
        path.append((names[c], best))
    k = raw_kurtosis(resid)
    return ScreenResult(bool(k > 3.0), k, tuple(names[a] for a in active), path)


def heavy_tail_screen(record: PanelRecord, min_history: int = MIN_SCREEN_HISTORY) -> ScreenResult:
    """Backward-AIC seasonal AR fit on the training history; heavy when residual kurtosis > 3.

    Raises NotScreenable when the history is shorter than ``min_history``.
    """
    return heavy_tail_screen_history(record.history, record.history_months, min_history)


def screen_records(records: Sequence[PanelRecord]) -> Tuple[List[PanelRecord], Dict[str, Optional[ScreenResult]]]:
    """Records that pass the screen, plus every series' result (None when not screenable)."""
    passed, results = [], {}
    for rec in records:
        try:
            res = heavy_tail_screen(rec)
        except NotScreenable as exc:
            warnings.warn(f"series {rec.series_id} not screenable: {exc}")
            results[rec.series_id] = None
            continue
        results[rec.series_id] = res
        if res.heavy:
            passed.append(rec)
    return passed, results
