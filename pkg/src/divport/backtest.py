"""Rolling monthly out-of-sample backtest engine.

For every out-of-sample month t the engine estimates a covariance model
from the w months ending skip months before t, optimizes holdings on the
assets with complete window histories, and records the realized excess
return x'r_t. Months where construction fails (e.g. a non-positive-definite
shrunk sample covariance under risk parity) are recorded as failures and do
not abort the run.

Rebalance months are independent: the panel is immutable and every month is
a pure function of (panel, config, t), so parallel evaluation over months is
bit-identical to the single-threaded run.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import riskmodels, strategies
from .errors import DivportError, ShortPanel
from .panel import ReturnsPanel, active_universe, month_index, window_at
from .strategies import Holdings, StrategyConfig


@dataclass(frozen=True)
class BacktestConfig:
    """One backtest = one risk model x one strategy over a rebalance schedule.

    skip is the number of months excluded between the estimation window and
    the out-of-sample month (1 reproduces the published layout, 0 estimates
    through the immediately preceding month). start/end clamp the schedule
    to an inclusive range of out-of-sample month labels.
    """

    risk_model: str = riskmodels.SINGLE_FACTOR
    strategy: str = strategies.MIN_VARIANCE
    window: int = 60
    skip: int = 1
    strategy_config: StrategyConfig = field(default_factory=StrategyConfig)
    shrink_delta: float | None = None
    start: str | None = None
    end: str | None = None

    def __post_init__(self):
        if self.window < 12:
            raise ValueError("window must be at least 12 months")
        if self.skip not in (0, 1):
            raise ValueError("skip must be 0 or 1")
        if self.strategy not in strategies.ALL_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if (self.strategy in strategies.OPTIMIZED_STRATEGIES
                and self.risk_model not in riskmodels.RISK_MODELS):
            raise ValueError(f"unknown risk model {self.risk_model!r}")


@dataclass(frozen=True)
class BacktestResult:
    """Realized out-of-sample record for one model x strategy combination.

    dates/oos_returns cover the successful months only; failures carries
    (month, error tag) for the rest. len(dates) + len(failures) equals the
    number of scheduled rebalances.
    """

    dates: tuple[str, ...]
    oos_returns: np.ndarray
    holdings_history: tuple[Holdings, ...]
    failures: tuple[tuple[str, str], ...]

    @property
    def n_rebalances(self) -> int:
        return len(self.dates) + len(self.failures)


def rebalance_schedule(panel: ReturnsPanel, cfg: BacktestConfig) -> list[int]:
    """Out-of-sample month indices covered by the config.

    Raises:
        ShortPanel: no month has window + skip months of history.
    """
    first = cfg.window + cfg.skip
    months = range(first, panel.n_months)
    if cfg.start is not None:
        lo = month_index(cfg.start)
        months = [t for t in months if month_index(panel.dates[t]) >= lo]
    if cfg.end is not None:
        hi = month_index(cfg.end)
        months = [t for t in months if month_index(panel.dates[t]) <= hi]
    months = list(months)
    if not months:
        raise ShortPanel(
            f"panel of {panel.n_months} months leaves no out-of-sample month "
            f"(need window {cfg.window} + skip {cfg.skip} + 1)")
    return months


def _rebalance_one(panel: ReturnsPanel, cfg: BacktestConfig, t: int):
    """Construct holdings and realize the month-t return; pure per-month work.

    Returns (date, oos_return, holdings) on success or (date, error_tag, None)
    on a recorded failure.
    """
    date = panel.dates[t]
    try:
        window = window_at(panel, t, cfg.window, cfg.skip)
        active = active_universe(window)
        sub = type(window)(window.returns[:, active], window.market,
                           window.end_date)
        ids = tuple(panel.asset_ids[i] for i in active)
        if cfg.strategy == strategies.EQUAL_WEIGHTED:
            holdings = strategies.equal_weighted(len(active), date, ids)
        elif cfg.strategy == strategies.VALUE_WEIGHTED:
            caps = panel.caps[t - cfg.skip - 1, active]
            holdings = strategies.value_weighted(caps, date, ids)
        else:
            model = riskmodels.estimate_cov(sub, cfg.risk_model,
                                            delta=cfg.shrink_delta)
            build = {
                strategies.MIN_VARIANCE: strategies.min_variance,
                strategies.MAX_DIVERSIFICATION: strategies.max_diversification,
                strategies.RISK_PARITY: strategies.risk_parity,
            }[cfg.strategy]
            holdings = build(model, cfg.strategy_config, date, ids)
    except DivportError as exc:
        return date, exc.tag, None
    # a held asset with no observed month-t return contributes zero excess
    # return (it sat at the risk-free rate as far as the record shows)
    realized = panel.returns[t, active]
    oos = float(holdings.weights @ np.nan_to_num(realized))
    return date, oos, holdings


_POOL_STATE: dict = {}


def _pool_init(panel, cfg):
    _POOL_STATE["panel"] = panel
    _POOL_STATE["cfg"] = cfg


def _pool_run(t):
    return _rebalance_one(_POOL_STATE["panel"], _POOL_STATE["cfg"], t)


def run_backtest(panel: ReturnsPanel, cfg: BacktestConfig,
                 n_jobs: int = 1) -> BacktestResult:
    """Walk the schedule and collect out-of-sample returns.

    n_jobs > 1 evaluates rebalance months in a process pool; results are
    reassembled in month order and bit-identical to the n_jobs=1 run.
    """
    months = rebalance_schedule(panel, cfg)
    if n_jobs <= 1:
        rows = [_rebalance_one(panel, cfg, t) for t in months]
    else:
        ctx = multiprocessing.get_context(
            "fork" if "fork" in multiprocessing.get_all_start_methods() else None)
        with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx,
                                 initializer=_pool_init,
                                 initargs=(panel, cfg)) as pool:
            chunk = max(1, len(months) // (4 * n_jobs))
            rows = list(pool.map(_pool_run, months, chunksize=chunk))
    dates, returns, history, failures = [], [], [], []
    for date, payload, holdings in rows:
        if holdings is None:
            failures.append((date, payload))
        else:
            dates.append(date)
            returns.append(payload)
            history.append(holdings)
    return BacktestResult(tuple(dates), np.array(returns, dtype=float),
                          tuple(history), tuple(failures))


def matrix_combinations() -> list[tuple[str | None, str]]:
    """The 9 model x strategy pairs plus the two benchmarks (risk model None)."""
    combos: list[tuple[str | None, str]] = [
        (model, strat)
        for model in riskmodels.RISK_MODELS
        for strat in strategies.OPTIMIZED_STRATEGIES
    ]
    combos.extend((None, strat) for strat in strategies.BENCHMARK_STRATEGIES)
    return combos


def run_matrix(panel: ReturnsPanel, base_cfg: BacktestConfig,
               n_jobs: int = 1) -> dict[tuple[str | None, str], BacktestResult]:
    """Run all 11 combinations over the identical rebalance schedule."""
    rebalance_schedule(panel, base_cfg)  # fail fast on a short panel
    results: dict[tuple[str | None, str], BacktestResult] = {}
    for model, strat in matrix_combinations():
        cfg = replace(base_cfg, strategy=strat,
                      risk_model=model if model is not None else base_cfg.risk_model)
        results[(model, strat)] = run_backtest(panel, cfg, n_jobs=n_jobs)
    return results
