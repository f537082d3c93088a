"""Performance metrics and the exhibit-style comparison table.

Seven metrics per portfolio: annualized average excess return (12x mean),
annualized standard deviation (sqrt(12) x sample std), Sharpe ratio,
annualized compound return, full-sample market beta, average position count,
and effective N. Effective N is the inverse Herfindahl (sum w)^2 / sum(w^2),
the number of equal-weighted names with the same concentration; for fully
invested weights this is 1 / sum(w^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .backtest import BacktestResult
from .errors import DegenerateMarket, EmptyHistory, EmptySeries
from .strategies import POSITION_THRESHOLD, Holdings

MONTHS_PER_YEAR = 12


class AnnualizedStats(NamedTuple):
    avg_excess_return: float
    stdev: float
    sharpe: float | None
    compound_return: float | None


@dataclass(frozen=True)
class PerformanceReport:
    """The seven exhibit metrics plus run metadata.

    sharpe is None when the return series has zero dispersion;
    compound_return is None in the (valid-input-unreachable) case of a
    non-positive cumulative growth factor.
    """

    avg_excess_return: float
    stdev: float
    sharpe: float | None
    compound_return: float | None
    market_beta: float
    avg_positions: float
    effective_n: float
    n_months: int = 0
    n_failures: int = 0


def annualize(oos_returns) -> AnnualizedStats:
    """Annualized mean, standard deviation, Sharpe, and compound return.

    avg = 12 * mean(r); stdev = sqrt(12) * std(r, ddof=1);
    sharpe = avg / stdev (None when stdev == 0);
    compound = prod(1 + r)^(12/T) - 1.

    Raises:
        EmptySeries: no observations.
        ValueError: a return at or below -1 (total loss is outside the model).
    """
    r = np.asarray(oos_returns, dtype=float)
    if r.size == 0:
        raise EmptySeries("no out-of-sample returns")
    if np.any(r <= -1.0) or not np.all(np.isfinite(r)):
        raise ValueError("returns must be finite and > -1")
    avg = MONTHS_PER_YEAR * float(r.mean())
    stdev = math.sqrt(MONTHS_PER_YEAR) * float(r.std(ddof=1)) if r.size > 1 else 0.0
    sharpe = avg / stdev if stdev > 0.0 else None
    growth = float(np.prod(1.0 + r))
    compound = growth ** (MONTHS_PER_YEAR / r.size) - 1.0 if growth > 0.0 else None
    return AnnualizedStats(avg, stdev, sharpe, compound)


def market_beta(oos_returns, market_returns) -> float:
    """OLS slope (with intercept) of portfolio on market excess returns.

    Raises:
        DegenerateMarket: market series has zero variance.
    """
    p = np.asarray(oos_returns, dtype=float)
    m = np.asarray(market_returns, dtype=float)
    if p.shape != m.shape or p.ndim != 1 or p.size < 2:
        raise ValueError("need two aligned series of length >= 2")
    pc = p - p.mean()
    mc = m - m.mean()
    denom = float(mc @ mc)
    if denom <= 0.0:
        raise DegenerateMarket("market series has zero variance")
    return float(pc @ mc) / denom


def _effective_n(weights: np.ndarray) -> float:
    s1 = math.fsum(weights)
    s2 = math.fsum(w * w for w in weights)
    return min(float(weights.size), max(1.0, s1 * s1 / s2))


def concentration(holdings_history, threshold: float = POSITION_THRESHOLD):
    """(average position count, average effective N) over the history.

    A position is a weight strictly above the threshold. Effective N is
    capped into [1, N] per month (Cauchy-Schwarz bounds of the exact value).

    Raises:
        EmptyHistory: no holdings supplied.
    """
    history = list(holdings_history)
    if not history:
        raise EmptyHistory("no holdings to summarize")
    counts = []
    effs = []
    for h in history:
        w = h.weights if isinstance(h, Holdings) else np.asarray(h, dtype=float)
        counts.append(float((w > threshold).sum()))
        effs.append(_effective_n(w))
    return float(np.mean(counts)), float(np.mean(effs))


def build_report(result: BacktestResult, market,
                 threshold: float = POSITION_THRESHOLD) -> PerformanceReport:
    """Assemble the seven metrics for one backtest result.

    ``market`` must be the market excess-return series aligned to
    ``result.dates`` (failure months excluded, as in the return series).
    """
    stats = annualize(result.oos_returns)
    beta = market_beta(result.oos_returns, market)
    avg_pos, eff_n = concentration(result.holdings_history, threshold)
    return PerformanceReport(stats.avg_excess_return, stats.stdev, stats.sharpe,
                             stats.compound_return, beta, avg_pos, eff_n,
                             n_months=len(result.dates),
                             n_failures=len(result.failures))


# --- exhibit-shaped serialization --------------------------------------------

EXHIBIT_ROWS = (
    ("Average Excess Return", "avg_excess_return", "pct"),
    ("Standard Deviation", "stdev", "pct"),
    ("Sharpe Ratio", "sharpe", "num"),
    ("Compound Return", "compound_return", "pct"),
    ("Market Beta", "market_beta", "num"),
    ("Average Positions", "avg_positions", "count"),
    ("Effective N", "effective_n", "count"),
)

MISSING = "--"


def report_to_dict(report: PerformanceReport | None) -> dict:
    if report is None:
        return {key: None for _, key, _ in EXHIBIT_ROWS}
    out = {key: getattr(report, key) for _, key, _ in EXHIBIT_ROWS}
    out["n_months"] = report.n_months
    out["n_failures"] = report.n_failures
    return out


def _fmt_cell(value, kind: str) -> str:
    if value is None:
        return MISSING
    if kind == "pct":
        return f"{100.0 * value:.2f}%"
    if kind == "count":
        return f"{value:.1f}"
    return f"{value:.2f}"


def format_table(title: str, columns: dict[str, PerformanceReport | None]) -> str:
    """Aligned-column text table, one column per portfolio.

    A ``None`` report (every month failed) renders as a column of '--',
    mirroring how the source exhibits mark unconstructible portfolios.
    """
    names = list(columns)
    header = ["", *names]
    rows = [header]
    for label, key, kind in EXHIBIT_ROWS:
        row = [label]
        for name in names:
            rep = columns[name]
            row.append(MISSING if rep is None
                       else _fmt_cell(getattr(rep, key), kind))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [title]
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[i]) if i == 0 else
                               cell.rjust(widths[i])
                               for i, cell in enumerate(r)).rstrip())
    return "\n".join(lines) + "\n"
