"""Command-line pipeline: generate, backtest, matrix, estimate.

Configuration precedence is CLI flag > config file (JSON; a previously
written manifest.json works unchanged) > built-in default. Every run writes
a manifest.json with the fully resolved configuration, and all output files
are written atomically (temp file + rename) so a failed run never leaves a
partial file behind.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, analytics, backtest, riskmodels, strategies, synthgen
from .errors import DivportError
from .panel import EstimationWindow, active_universe, load_panel
from .strategies import StrategyConfig

_CONFIG_KEYS = {
    "returns": None, "market": None, "caps": None,
    "risk_model": riskmodels.SINGLE_FACTOR,
    "strategy": strategies.MIN_VARIANCE,
    "window": 60, "skip": 1,
    "upper_bound": None, "rp_bound": 5.0, "shrink_delta": None,
    "start": None, "end": None,
    "seed": 0, "assets": 20, "months": 120,
    "mu_m": 0.006, "sigma_m": 0.045,
    "jobs": 1, "formats": "json,text",
    "end_month": None, "out": "out",
}


class ConfigError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divport",
        description="Covariance risk models, diversification portfolios, and "
                    "monthly out-of-sample backtests.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (or a manifest.json "
                                        "from an earlier run)")
        p.add_argument("--out", help="output directory (default: out)")

    def add_panel_inputs(p):
        p.add_argument("--returns", help="asset excess-returns CSV")
        p.add_argument("--market", help="market excess-returns CSV")
        p.add_argument("--caps", help="market-cap CSV (optional; omitting it "
                                      "makes the value-weighted benchmark "
                                      "equal-weighted)")

    def add_backtest_knobs(p):
        p.add_argument("--risk-model", dest="risk_model",
                       choices=riskmodels.RISK_MODELS)
        p.add_argument("--strategy", choices=strategies.ALL_STRATEGIES)
        p.add_argument("--window", type=int, help="estimation window length "
                                                  "in months (default 60)")
        p.add_argument("--skip", type=int, choices=(0, 1),
                       help="months excluded between window and OOS month "
                            "(default 1)")
        p.add_argument("--upper-bound", dest="upper_bound", type=float,
                       help="uniform per-asset weight cap (default none)")
        p.add_argument("--rp-bound", dest="rp_bound", type=float,
                       help="risk-parity barrier band d (default 5)")
        p.add_argument("--shrink-delta", dest="shrink_delta", type=float,
                       help="sample-shrinkage intensity in [0,1] "
                            "(default: estimated)")
        p.add_argument("--start", help="first OOS month YYYY-MM")
        p.add_argument("--end", help="last OOS month YYYY-MM")
        p.add_argument("--jobs", type=int, help="worker processes (default 1)")
        p.add_argument("--formats", help="report formats, comma-separated "
                                         "subset of json,text (default both)")

    p = sub.add_parser("generate", help="write a seeded synthetic panel")
    add_common(p)
    p.add_argument("--assets", type=int, help="number of assets (default 20)")
    p.add_argument("--months", type=int, help="number of months (default 120)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--mu-m", dest="mu_m", type=float,
                   help="market monthly mean (default 0.006)")
    p.add_argument("--sigma-m", dest="sigma_m", type=float,
                   help="market monthly vol (default 0.045)")

    p = sub.add_parser("backtest", help="run one risk model x strategy")
    add_common(p)
    add_panel_inputs(p)
    add_backtest_knobs(p)

    p = sub.add_parser("matrix", help="run all 9 combinations plus benchmarks")
    add_common(p)
    add_panel_inputs(p)
    add_backtest_knobs(p)

    p = sub.add_parser("estimate", help="dump one window's covariance estimate")
    add_common(p)
    add_panel_inputs(p)
    p.add_argument("--risk-model", dest="risk_model",
                   choices=riskmodels.RISK_MODELS)
    p.add_argument("--window", type=int)
    p.add_argument("--shrink-delta", dest="shrink_delta", type=float)
    p.add_argument("--end-month", dest="end_month",
                   help="last month of the estimation window (default: "
                        "last panel month)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags -> one flat dict."""
    cfg = dict(_CONFIG_KEYS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            loaded = json.load(fh)
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]  # manifest.json form
        unknown = set(loaded) - set(cfg) - {"subcommand"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "subcommand"})
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg["subcommand"] = args.subcommand
    return cfg


def _require_inputs(cfg: dict, need_market=True):
    if not cfg["returns"]:
        raise ConfigError("--returns is required")
    for key in ("returns", "market", "caps"):
        path = cfg[key]
        if key == "market" and need_market and not path:
            raise ConfigError("--market is required")
        if path and not Path(path).exists():
            raise ConfigError(f"{key} file not found: {path}")


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj):
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, cfg: dict):
    _write_json(out / "manifest.json",
                {"artifact": "divport", "version": __version__,
                 "subcommand": cfg["subcommand"],
                 "config": {k: v for k, v in cfg.items() if k != "subcommand"}})


def _strategy_config(cfg: dict) -> StrategyConfig:
    return StrategyConfig(upper_bound=cfg["upper_bound"], rp_bound=cfg["rp_bound"])


def _backtest_config(cfg: dict) -> backtest.BacktestConfig:
    return backtest.BacktestConfig(
        risk_model=cfg["risk_model"], strategy=cfg["strategy"],
        window=cfg["window"], skip=cfg["skip"],
        strategy_config=_strategy_config(cfg),
        shrink_delta=cfg["shrink_delta"],
        start=cfg["start"], end=cfg["end"])


def _load(cfg: dict):
    return load_panel(cfg["returns"], cfg["market"], cfg["caps"],
                      min_months=cfg["window"] + cfg["skip"] + 1)


def _csv_returns(dates, values) -> str:
    lines = ["date,excess_return"]
    lines += [f"{d},{format(v, '.17g')}" for d, v in zip(dates, values)]
    return "\n".join(lines) + "\n"


def _csv_cumulative(dates, values) -> str:
    lines = ["date,cumulative_return"]
    cum = 1.0
    for d, v in zip(dates, values):
        cum *= 1.0 + v
        lines.append(f"{d},{format(cum - 1.0, '.17g')}")
    return "\n".join(lines) + "\n"


def _csv_holdings(history) -> str:
    lines = ["date,asset_id,weight"]
    for h in history:
        ids = h.asset_ids or tuple(str(i) for i in range(h.weights.size))
        lines += [f"{h.rebalance_date},{aid},{w:.8f}"
                  for aid, w in zip(ids, h.weights)]
    return "\n".join(lines) + "\n"


def _report_or_none(result, panel):
    """Build the report, or None when every month failed."""
    if len(result.dates) == 0:
        return None
    date_to_row = {d: i for i, d in enumerate(panel.dates)}
    market = np.array([panel.market[date_to_row[d]] for d in result.dates])
    return analytics.build_report(result, market)


def cmd_generate(cfg: dict) -> int:
    spec = synthgen.SynthSpec(n_assets=cfg["assets"], n_months=cfg["months"],
                              seed=cfg["seed"], mu_m=cfg["mu_m"],
                              sigma_m=cfg["sigma_m"])
    out = Path(cfg["out"])
    paths = synthgen.write_synthetic(spec, out)
    _write_manifest(out, cfg)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_backtest(cfg: dict) -> int:
    _require_inputs(cfg)
    out = Path(cfg["out"])
    panel = _load(cfg)
    result = backtest.run_backtest(panel, _backtest_config(cfg),
                                   n_jobs=cfg["jobs"])
    report = _report_or_none(result, panel)
    name = f"{cfg['risk_model']} / {cfg['strategy']}"
    formats = {f.strip() for f in cfg["formats"].split(",") if f.strip()}
    if "json" in formats:
        _write_json(out / "report.json",
                    {"portfolio": name,
                     "report": analytics.report_to_dict(report),
                     "failures": [list(f) for f in result.failures]})
    if "text" in formats:
        table = analytics.format_table(f"Performance: {name}", {name: report})
        if result.failures:
            table += (f"\n{len(result.failures)} failed month(s): "
                      + ", ".join(f"{d} ({tag})" for d, tag in result.failures)
                      + "\n")
        _write_atomic(out / "report.txt", table)
    _write_atomic(out / "oos_returns.csv",
                  _csv_returns(result.dates, result.oos_returns))
    _write_atomic(out / "cumulative.csv",
                  _csv_cumulative(result.dates, result.oos_returns))
    _write_atomic(out / "holdings.csv", _csv_holdings(result.holdings_history))
    _write_manifest(out, cfg)
    print(f"backtest {name}: {len(result.dates)} months, "
          f"{len(result.failures)} failures -> {out}")
    return 0


def _combo_name(model: str | None, strategy: str) -> str:
    return f"{model or 'benchmark'}_{strategy}"


def cmd_matrix(cfg: dict) -> int:
    _require_inputs(cfg)
    out = Path(cfg["out"])
    panel = _load(cfg)
    results = backtest.run_matrix(panel, _backtest_config(cfg),
                                  n_jobs=cfg["jobs"])
    reports = {key: _report_or_none(res, panel) for key, res in results.items()}
    formats = {f.strip() for f in cfg["formats"].split(",") if f.strip()}
    for (model, strat), res in results.items():
        _write_atomic(out / f"cumulative_{_combo_name(model, strat)}.csv",
                      _csv_cumulative(res.dates, res.oos_returns))
    benchmarks = {strat: reports[(None, strat)]
                  for strat in strategies.BENCHMARK_STRATEGIES}
    if "text" in formats:
        for model in riskmodels.RISK_MODELS:
            columns = {"Value Weighted": benchmarks[strategies.VALUE_WEIGHTED],
                       "Equal Weighted": benchmarks[strategies.EQUAL_WEIGHTED]}
            columns.update({strat: reports[(model, strat)]
                            for strat in strategies.OPTIMIZED_STRATEGIES})
            _write_atomic(out / f"exhibit_{model}.txt",
                          analytics.format_table(
                              f"Performance of {model} risk model portfolios",
                              columns))
    if "json" in formats:
        _write_json(out / "matrix_report.json", {
            _combo_name(model, strat): {
                "report": analytics.report_to_dict(reports[(model, strat)]),
                "failures": [list(f) for f in results[(model, strat)].failures],
            }
            for model, strat in results
        })
    _write_manifest(out, cfg)
    n_fail = sum(len(r.failures) for r in results.values())
    print(f"matrix: {len(results)} combinations, {n_fail} failed "
          f"month-entries -> {out}")
    return 0


def cmd_estimate(cfg: dict) -> int:
    _require_inputs(cfg)
    out = Path(cfg["out"])
    panel = load_panel(cfg["returns"], cfg["market"], cfg["caps"],
                       min_months=cfg["window"])
    end_month = cfg["end_month"] or panel.dates[-1]
    if end_month not in panel.dates:
        raise ConfigError(f"end month {end_month} not in panel")
    e = panel.dates.index(end_month)
    w = cfg["window"]
    if e + 1 < w:
        raise ConfigError(f"only {e + 1} months end at {end_month}, need {w}")
    window = EstimationWindow(panel.returns[e + 1 - w:e + 1],
                              panel.market[e + 1 - w:e + 1], end_month)
    active = active_universe(window)
    sub = EstimationWindow(window.returns[:, active], window.market, end_month)
    ids = [panel.asset_ids[i] for i in active]
    kind = cfg["risk_model"]
    model = riskmodels.estimate_cov(sub, kind, delta=cfg["shrink_delta"])
    lines = [",".join(format(v, ".17g") for v in row) for row in model.matrix]
    _write_atomic(out / "V.csv", "\n".join(lines) + "\n")
    est: dict = {"kind": kind, "end_month": end_month, "asset_ids": ids,
                 "vols": model.vols.tolist(), "npd": model.npd}
    if kind == riskmodels.SINGLE_FACTOR:
        raw = riskmodels.estimate_loadings(sub)
        est.update(beta_hat=raw.beta_hat.tolist(),
                   beta=riskmodels.shrink_betas(raw.beta_hat).tolist(),
                   omega2_hat=raw.omega2_hat.tolist(),
                   omega2=riskmodels.shrink_log_variances(
                       np.maximum(raw.omega2_hat,
                                  riskmodels.VARIANCE_FLOOR)).tolist(),
                   sigma2_f=raw.sigma2_f)
    elif kind == riskmodels.CONSTANT_CORRELATION:
        cc = riskmodels.constant_correlation_estimates(sub)
        est.update(rho=cc.rho, sigma=cc.sigma.tolist())
    else:
        delta = (cfg["shrink_delta"] if cfg["shrink_delta"] is not None
                 else riskmodels.ledoit_wolf_delta(sub))
        est.update(delta=delta)
    _write_json(out / "estimates.json", est)
    _write_manifest(out, cfg)
    print(f"estimate {kind} @ {end_month}: {len(ids)} assets -> {out}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "backtest": cmd_backtest,
    "matrix": cmd_matrix,
    "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if not math.isfinite(cfg.get("rp_bound", 5.0)) or cfg["rp_bound"] <= 0:
            raise ConfigError("rp_bound must be a positive number")
        return _COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivportError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
