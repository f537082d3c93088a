"""Monthly returns panel: CSV ingestion, validation, and window extraction.

A panel holds T months of simple excess returns for N assets, the market
excess-return series, and market capitalizations. Asset return cells may be
missing (empty CSV cell, NaN internally); the market and caps series must be
complete. Assets with any missing value inside an estimation window are
dropped for that rebalance (see ``active_universe``) instead of imputed.

CSV formats:
    returns.csv  header ``date,<id_1>,...,<id_N>``; one row per month, date
                 ``YYYY-MM``; cells are decimal excess returns; empty = missing
    market.csv   header ``date,market``
    caps.csv     same shape as returns.csv; strictly positive decimals
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyUniverse,
    MalformedFile,
    MisalignedDates,
    NonFiniteValue,
    OutOfRange,
    ShortPanel,
)

_DATE_RE = re.compile(r"^(\d{4})-(\d{2})$")


def month_index(date: str) -> int:
    """Map 'YYYY-MM' to a linear month count (for consecutiveness checks)."""
    m = _DATE_RE.match(date)
    if m is None:
        raise MalformedFile(f"bad date {date!r}, expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise MalformedFile(f"bad month in date {date!r}")
    return year * 12 + (month - 1)


def month_label(index: int) -> str:
    """Inverse of ``month_index``."""
    return f"{index // 12:04d}-{index % 12 + 1:02d}"


@dataclass(frozen=True)
class ReturnsPanel:
    """Aligned monthly excess-return panel.

    Immutable after construction: the arrays are flagged read-only so the
    panel can be shared across concurrent backtest workers.

    Attributes:
        dates: T month labels 'YYYY-MM', strictly increasing, consecutive.
        asset_ids: N unique asset identifiers.
        returns: T x N simple monthly excess returns; NaN marks a missing
            observation. Present entries are finite and > -1.
        market: length-T market excess returns, all finite.
        caps: T x N market capitalizations, all finite and > 0. Used only
            for the value-weighted benchmark; all-ones when not supplied.
    """

    dates: tuple[str, ...]
    asset_ids: tuple[str, ...]
    returns: np.ndarray
    market: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        returns = np.array(self.returns, dtype=float)
        market = np.array(self.market, dtype=float)
        caps = np.array(self.caps, dtype=float)
        t, n = returns.shape
        if len(self.dates) != t or market.shape != (t,) or caps.shape != (t, n):
            raise MalformedFile("panel arrays disagree on T x N shape")
        if len(self.asset_ids) != n:
            raise MalformedFile("asset_ids length does not match returns columns")
        if len(set(self.asset_ids)) != n:
            raise MalformedFile("asset_ids are not unique")
        idx = [month_index(d) for d in self.dates]
        if any(b - a != 1 for a, b in zip(idx, idx[1:])):
            raise MalformedFile("dates must be strictly increasing consecutive months")
        if not np.all(np.isfinite(market)):
            raise NonFiniteValue("market series contains a non-finite value")
        if not np.all(np.isfinite(caps)) or np.any(caps <= 0):
            raise NonFiniteValue("caps must be finite and strictly positive")
        present = ~np.isnan(returns)
        vals = returns[present]
        if np.any(np.isinf(vals)) or np.any(vals <= -1.0):
            raise NonFiniteValue("returns must be finite and > -1 where present")
        for arr in (returns, market, caps):
            arr.flags.writeable = False
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "market", market)
        object.__setattr__(self, "caps", caps)

    @property
    def n_months(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class EstimationWindow:
    """W x N slice of panel returns plus the aligned market vector.

    Columns may contain NaN (missing months); only the assets selected by
    ``active_universe`` enter estimation.
    """

    returns: np.ndarray
    market: np.ndarray
    end_date: str

    def __post_init__(self):
        if self.returns.shape[0] < 2:
            raise OutOfRange("estimation window needs at least 2 rows")
        if self.market.shape != (self.returns.shape[0],):
            raise MalformedFile("window market length mismatch")


def _parse_cell(token: str, where: str, allow_missing: bool) -> float:
    token = token.strip()
    if token == "":
        if allow_missing:
            return math.nan
        raise NonFiniteValue(f"empty cell in {where} (series must be complete)")
    try:
        value = float(token)
    except ValueError:
        raise MalformedFile(f"unparseable cell {token!r} in {where}") from None
    if math.isnan(value) or math.isinf(value):
        raise NonFiniteValue(f"non-finite cell {token!r} in {where}")
    return value


def _read_csv(path, expect_header=None, allow_missing=False):
    """Read one panel CSV -> (header columns, dates, 2-D value array)."""
    path = Path(path)
    if not path.exists():
        raise MalformedFile(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedFile(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0] != "date":
        raise MalformedFile(f"{path}: header must start with 'date'")
    if expect_header is not None and header[1:] != list(expect_header):
        raise MalformedFile(f"{path}: column ids do not match returns file")
    dates = []
    data = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedFile(f"{path}:{ln}: expected {len(header)} cells, got {len(row)}")
        dates.append(row[0].strip())
        data.append([_parse_cell(tok, f"{path}:{ln}", allow_missing) for tok in row[1:]])
    return header[1:], dates, np.array(data, dtype=float)


def load_panel(returns_path, market_path, caps_path=None,
               min_months: int | None = None) -> ReturnsPanel:
    """Load and validate the returns/market(/caps) CSV trio.

    Args:
        returns_path: asset excess-returns CSV (empty cell = missing).
        market_path: market excess-returns CSV; must be complete.
        caps_path: optional market-cap CSV; when absent, caps default to
            all-ones and the value-weighted benchmark degenerates to
            equal-weighted.
        min_months: if given, raise ``ShortPanel`` when the panel has fewer
            months (callers pass window + skip + 1).

    Raises:
        MalformedFile, MisalignedDates, NonFiniteValue, ShortPanel
    """
    asset_ids, dates, returns = _read_csv(returns_path, allow_missing=True)
    m_ids, m_dates, m_vals = _read_csv(market_path)
    if m_ids != ["market"]:
        raise MalformedFile(f"{market_path}: header must be 'date,market'")
    if m_dates != dates:
        raise MisalignedDates("market file dates differ from returns file")
    if caps_path is not None:
        _, c_dates, caps = _read_csv(caps_path, expect_header=asset_ids)
        if c_dates != dates:
            raise MisalignedDates("caps file dates differ from returns file")
    else:
        caps = np.ones_like(returns)
    if min_months is not None and len(dates) < min_months:
        raise ShortPanel(f"panel has {len(dates)} months, need at least {min_months}")
    return ReturnsPanel(tuple(dates), tuple(asset_ids), returns,
                        m_vals[:, 0], caps)


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else format(value, ".17g")


def save_panel(panel: ReturnsPanel, returns_path, market_path, caps_path=None) -> None:
    """Write a panel back to CSV with 17 significant digits (lossless)."""
    with open(returns_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *panel.asset_ids])
        for i, date in enumerate(panel.dates):
            w.writerow([date, *(_fmt(v) for v in panel.returns[i])])
    with open(market_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "market"])
        for i, date in enumerate(panel.dates):
            w.writerow([date, _fmt(panel.market[i])])
    if caps_path is not None:
        with open(caps_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", *panel.asset_ids])
            for i, date in enumerate(panel.dates):
                w.writerow([date, *(_fmt(v) for v in panel.caps[i])])


def window_at(panel: ReturnsPanel, t: int, w: int, skip: int = 1) -> EstimationWindow:
    """Extract the w-month estimation window for out-of-sample month ``t``.

    The window covers panel rows ``[t - skip - w, t - skip)``: the ``skip``
    months immediately before ``t`` are excluded from estimation, and month
    ``t`` itself is never included (no look-ahead).

    Raises:
        OutOfRange: insufficient history before ``t``, or ``t`` not a valid
            month index of the panel.
    """
    if w < 2:
        raise OutOfRange(f"window length {w} < 2")
    if skip < 0:
        raise OutOfRange(f"skip must be >= 0, got {skip}")
    if not 0 <= t < panel.n_months:
        raise OutOfRange(f"month index {t} outside panel of {panel.n_months} months")
    lo = t - skip - w
    hi = t - skip
    if lo < 0:
        raise OutOfRange(f"month index {t} has only {max(hi, 0)} months of history, "
                         f"need {w + skip}")
    return EstimationWindow(panel.returns[lo:hi], panel.market[lo:hi],
                            panel.dates[hi - 1])


def active_universe(window: EstimationWindow) -> np.ndarray:
    """Indices of assets with complete, finite histories over the window.

    Only these assets enter estimation and optimization for the rebalance.

    Raises:
        EmptyUniverse: no asset has a complete history.
    """
    complete = np.all(np.isfinite(window.returns), axis=0)
    idx = np.flatnonzero(complete)
    if idx.size == 0:
        raise EmptyUniverse("no asset has a complete history over the window")
    return idx
