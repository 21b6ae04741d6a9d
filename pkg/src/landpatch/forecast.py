"""Quarterly class-area series and ARIMA(p, d, 0) forecasting.

The AR part is estimated by conditional least squares with an intercept
(drift) term; there is no MA part.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import total_ordering
from pathlib import Path

import numpy as np

from .analytics import ChangeRow, built_up_index
from .raster import NUM_CLASSES, Palette, default_palette


class SeriesError(ValueError):
    """Invalid or insufficient time-series input."""


class NumericalError(ArithmeticError):
    """A fit produced non-finite parameters that the fallback cannot cover."""


# ---------------------------------------------------------------------------
# quarters and series
# ---------------------------------------------------------------------------

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")


@total_ordering
@dataclass(frozen=True)
class Quarter:
    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter must be 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> Quarter:
        m = _QUARTER_RE.match(text.strip())
        if not m:
            raise ValueError(f"bad quarter {text!r} (expected YYYYQn)")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_index(cls, idx: int) -> Quarter:
        return cls(idx // 4, idx % 4 + 1)

    @property
    def index(self) -> int:
        return self.year * 4 + self.quarter - 1

    def next(self) -> Quarter:
        return self + 1

    def __add__(self, n: int) -> Quarter:
        return Quarter.from_index(self.index + n)

    def __sub__(self, other: Quarter) -> int:
        return self.index - other.index

    def __lt__(self, other: Quarter) -> bool:
        return self.index < other.index

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


def quarter_range(start: Quarter, end: Quarter) -> list[Quarter]:
    return [Quarter.from_index(i) for i in range(start.index, end.index + 1)]


@dataclass(frozen=True)
class ClassAreaSeries:
    """Area observations of one class; ``None`` marks a missing quarter."""

    class_index: int
    points: tuple[tuple[Quarter, float | None], ...]

    def __post_init__(self):
        pts = tuple((q, None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v))
                    for q, v in self.points)
        for (q0, _), (q1, _) in zip(pts, pts[1:]):
            if not q0 < q1:
                raise SeriesError(f"quarters not strictly increasing at {q1}")
        object.__setattr__(self, "points", pts)

    @property
    def quarters(self) -> list[Quarter]:
        return [q for q, _ in self.points]

    @property
    def values(self) -> np.ndarray:
        return np.array([np.nan if v is None else v for _, v in self.points])

    def is_regular(self) -> bool:
        return all(v is not None for _, v in self.points) and all(
            q1 - q0 == 1 for (q0, _), (q1, _) in zip(self.points, self.points[1:])
        )


def regularize(series: ClassAreaSeries, start: Quarter, end: Quarter) -> ClassAreaSeries:
    """Fill the quarterly grid ``start..end``.

    Interior gaps are linearly interpolated between the nearest observations;
    gaps before the first or after the last observation hold that value.
    """
    if start > end:
        raise SeriesError(f"window start {start} after end {end}")
    obs = [(q.index, v) for q, v in series.points if v is not None and start <= q <= end]
    if not obs:
        raise SeriesError(f"empty window: no observations between {start} and {end}")
    xp = np.array([i for i, _ in obs], dtype=np.float64)
    fp = np.array([v for _, v in obs], dtype=np.float64)
    grid = quarter_range(start, end)
    filled = np.interp([q.index for q in grid], xp, fp)
    observed = dict(obs)
    pts = tuple((q, observed.get(q.index, float(v))) for q, v in zip(grid, filled))
    return ClassAreaSeries(series.class_index, pts)


# ---------------------------------------------------------------------------
# differencing and diagnostics
# ---------------------------------------------------------------------------

def difference(values, d: int = 1) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if d < 0:
        raise ValueError("difference order must be >= 0")
    if len(x) <= d:
        raise SeriesError(f"sequence of length {len(x)} too short to difference {d} times")
    for _ in range(d):
        x = np.diff(x)
    return x


def undifference(diffs, anchors) -> np.ndarray:
    """Invert ``difference``: rebuild the values that follow ``anchors``.

    ``anchors`` are the last d original values; their count fixes d, so that
    ``difference(concat(anchors, undifference(w, anchors)), d) == w``.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    out = np.asarray(diffs, dtype=np.float64)
    d = len(anchors)
    for k in range(d - 1, -1, -1):
        level_last = anchors.copy()
        for _ in range(k):
            level_last = np.diff(level_last)
        out = level_last[-1] + np.cumsum(out)
    return out


def acf(values, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag."""
    x = np.asarray(values, dtype=np.float64)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if len(x) < max_lag + 2:
        raise SeriesError(f"need at least {max_lag + 2} values for max_lag={max_lag}")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0 or not math.isfinite(denom):
        raise SeriesError("autocorrelation undefined for a zero-variance series")
    n = len(x)
    r = np.array([dev[: n - k] @ dev[k:] for k in range(max_lag + 1)]) / denom
    r[0] = 1.0
    return r


# ---------------------------------------------------------------------------
# ARIMA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArimaModel:
    p: int
    d: int
    phi: np.ndarray
    c: float
    sigma2: float
    tail: np.ndarray  # last p + d training observations
    q: int = 0
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.q != 0:
            raise ValueError("only q = 0 is supported")
        phi = np.array(self.phi, dtype=np.float64).reshape(self.p)
        tail = np.array(self.tail, dtype=np.float64)
        if len(tail) != self.p + self.d:
            raise ValueError(f"tail must hold p + d = {self.p + self.d} values")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(tail))
                and math.isfinite(self.c) and math.isfinite(self.sigma2)):
            raise NumericalError("ARIMA parameters must be finite")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "tail", tail)


def conditional_design(w, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression of w_t on [1, w_{t-1}, ..., w_{t-p}] for t = p..n-1."""
    w = np.asarray(w, dtype=np.float64)
    n = len(w)
    cols = [np.ones(n - p)] + [w[p - i: n - i] for i in range(1, p + 1)]
    return np.column_stack(cols), w[p:]


def fit_arima(values, p: int = 4, d: int = 1) -> ArimaModel:
    """Fit ARIMA(p, d, 0) with drift by conditional least squares.

    The normal equations are solved through a QR factorisation of the design
    matrix. A rank-deficient design (e.g. a perfectly linear input) falls back
    to phi = 0 and c = mean of the differenced series.
    """
    x = np.asarray(values, dtype=np.float64)
    if p < 0 or d < 0:
        raise ValueError("orders must be non-negative")
    if not np.all(np.isfinite(x)):
        raise SeriesError("series contains non-finite values")
    if len(x) < p + d + 5:
        raise SeriesError(f"series of length {len(x)} too short for p={p}, d={d} (need {p + d + 5})")
    w = difference(x, d)
    X, y = conditional_design(w, p)
    rows, k = X.shape

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(rows, k) * np.finfo(np.float64).eps
    degenerate = bool(diag.min() <= tol)
    if degenerate:
        beta = np.zeros(k)
        beta[0] = w.mean()
    else:
        beta = np.linalg.solve(R, Q.T @ y)

    resid = y - X @ beta
    dof = rows - k
    sigma2 = float(resid @ resid / dof) if dof > 0 else 0.0
    if not np.all(np.isfinite(beta)) or not math.isfinite(sigma2):
        raise NumericalError("least-squares fit produced non-finite parameters")
    return ArimaModel(p=p, d=d, phi=beta[1:], c=float(beta[0]), sigma2=sigma2,
                      tail=x[len(x) - (p + d):], degenerate=degenerate)


def forecast(model: ArimaModel, horizon: int) -> np.ndarray:
    """Iterate the AR recursion ``horizon`` steps ahead and integrate back.

    Levels are clamped at zero from below; the recursion itself is unclamped.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    p, d = model.p, model.d
    hist = list(np.diff(model.tail, n=d)) if d else list(model.tail)
    preds = []
    for _ in range(horizon):
        w_next = model.c
        for i in range(p):
            w_next += model.phi[i] * hist[-1 - i]
        hist.append(w_next)
        preds.append(w_next)
    levels = undifference(preds, model.tail[len(model.tail) - d:]) if d else np.array(preds)
    return np.maximum(levels, 0.0)


@dataclass(frozen=True)
class ForecastTable:
    last: Quarter
    target: Quarter
    rows: list[ChangeRow]
    bui: float
    quarters: list[Quarter]          # last+1 .. target
    areas: np.ndarray                # (len(quarters), 10)
    bui_path: list[float]


def forecast_table(series: list[ClassAreaSeries], target: Quarter, p: int = 4, d: int = 1,
                   palette: Palette | None = None) -> ForecastTable:
    """Fit one model per class and forecast up to ``target``."""
    palette = palette or default_palette()
    if len(series) != NUM_CLASSES:
        raise SeriesError(f"need {NUM_CLASSES} class series, got {len(series)}")
    grid = series[0].quarters
    for s in series:
        if not s.is_regular() or s.quarters != grid:
            raise SeriesError("all class series must be regularized over the same window")
    last = grid[-1]
    horizon = target - last
    if horizon < 0:
        raise SeriesError(f"target precedes series end ({target} < {last})")

    current = np.array([s.values[-1] for s in series])
    if horizon == 0:
        paths = np.zeros((0, NUM_CLASSES))
        final = current
    else:
        paths = np.column_stack([forecast(fit_arima(s.values, p, d), horizon) for s in series])
        final = paths[-1]
    rows = [ChangeRow.between(palette.name_of(k), float(current[k]), float(final[k]))
            for k in range(NUM_CLASSES)]
    quarters = [last + h for h in range(1, horizon + 1)]
    bui_path = [built_up_index(a, palette) for a in paths]
    return ForecastTable(last, target, rows, built_up_index(final, palette),
                         quarters, paths, bui_path)


# ---------------------------------------------------------------------------
# series CSV
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def write_series_csv(path, quarters: list[Quarter], table, names: list[str],
                     bui: list[float] | None = None, fmt=_fmt) -> None:
    """Write ``quarter,<class_0>,...`` rows; NaN/None cells are left empty.

    With ``bui`` each row is followed by a ``# BUI=<value>`` comment line.
    """
    lines = [",".join(["quarter"] + list(names))]
    for i, q in enumerate(quarters):
        lines.append(",".join([str(q)] + [fmt(v) for v in table[i]]))
        if bui is not None:
            lines.append(f"# BUI={bui[i]:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series_csv(path, palette: Palette | None = None) -> list[ClassAreaSeries]:
    """Parse a series CSV into 10 class series in palette order."""
    palette = palette or default_palette()
    rows = []
    header = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            if header[0] != "quarter" or len(header) != NUM_CLASSES + 1:
                raise SeriesError(f"{path}: header must be quarter + {NUM_CLASSES} class columns")
            try:
                order = [palette.index_of(n) for n in header[1:]]
            except KeyError as exc:
                raise SeriesError(f"{path}: {exc.args[0]}") from None
            continue
        if len(cells) != len(header):
            raise SeriesError(f"{path}:{lineno}: expected {len(header)} cells")
        try:
            q = Quarter.parse(cells[0])
            vals = [None if c == "" else float(c) for c in cells[1:]]
        except ValueError as exc:
            raise SeriesError(f"{path}:{lineno}: {exc}") from None
        rows.append((q, vals))
    if header is None:
        raise SeriesError(f"{path}: empty series file")
    per_class: list[list] = [[] for _ in range(NUM_CLASSES)]
    for q, vals in rows:
        for col, v in zip(order, vals):
            per_class[col].append((q, v))
    return [ClassAreaSeries(k, tuple(pts)) for k, pts in enumerate(per_class)]
