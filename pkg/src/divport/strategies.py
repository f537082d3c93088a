"""Portfolio construction: three optimized strategies plus two benchmarks.

Every strategy returns long-only, fully-invested ``Holdings``. The three
optimized portfolios translate to solver problems:

    min variance          min x'Vx   s.t. 1'x = 1, 0 <= x <= u
    max diversification   min z'Vz   s.t. sigma'z = 1, z >= 0,
                                          z <= (1'z) u   then x = z / 1'z
    risk parity           min 0.5 y'Vy - sum(log y), 0 < y <= d
                                          then x = y / 1'y

The max-diversification bound uses the substitution K = 1'z, which turns the
bilinear z <= K u into a linear constraint on the feasible set. Risk parity
requires a strictly positive definite V and surfaces
``NotPositiveDefinite`` otherwise; the backtest records such months as
failures rather than aborting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver
from .errors import (
    DegenerateVols,
    Infeasible,
    InfeasibleBounds,
    MaxIterations,
    NonPositiveCap,
    NotPSD,
)
from .riskmodels import CovarianceModel, validate_psd
from .solver import QuadraticProgram, SolverSolution, solve_box_log_barrier, solve_qp

MIN_VARIANCE = "min_variance"
MAX_DIVERSIFICATION = "max_diversification"
RISK_PARITY = "risk_parity"
EQUAL_WEIGHTED = "equal_weighted"
VALUE_WEIGHTED = "value_weighted"

OPTIMIZED_STRATEGIES = (MIN_VARIANCE, MAX_DIVERSIFICATION, RISK_PARITY)
BENCHMARK_STRATEGIES = (EQUAL_WEIGHTED, VALUE_WEIGHTED)
ALL_STRATEGIES = OPTIMIZED_STRATEGIES + BENCHMARK_STRATEGIES

#: weights at or below this count as zero positions in reports
POSITION_THRESHOLD = 1e-6

#: tolerance on the fully-invested constraint
BUDGET_TOL = 1e-8

#: most negative weight tolerated before clipping to zero
LONG_ONLY_TOL = -1e-10


@dataclass(frozen=True)
class StrategyConfig:
    """Per-strategy knobs shared by all rebalances of a backtest.

    upper_bound: scalar or per-asset cap on weights, None for unbounded.
    rp_bound: upper band d of the risk-parity barrier problem (default 5).
    tol / max_iter: solver stopping controls.
    """

    upper_bound: float | np.ndarray | None = None
    rp_bound: float = 5.0
    tol: float = solver.DEFAULT_TOL
    max_iter: int = solver.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.rp_bound <= 0:
            raise ValueError("rp_bound must be positive")
        if self.upper_bound is not None:
            u = np.asarray(self.upper_bound, dtype=float)
            if np.any(u[np.isfinite(u)] <= 0):
                raise ValueError("upper bounds must be positive where finite")

    def upper_vector(self, n: int) -> np.ndarray:
        if self.upper_bound is None:
            return np.full(n, np.inf)
        return np.broadcast_to(np.asarray(self.upper_bound, dtype=float), (n,)).copy()


@dataclass(frozen=True)
class Holdings:
    """Long-only, fully-invested weights for one rebalance date.

    Weights sum to 1 within 1e-8; entries more negative than -1e-10 are a
    construction bug and rejected, anything in (-1e-10, 0) is clipped to 0.
    """

    weights: np.ndarray
    strategy: str
    rebalance_date: str = ""
    asset_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if abs(float(w.sum()) - 1.0) > BUDGET_TOL:
            raise ValueError(f"weights sum to {w.sum():.12f}, not 1")
        if np.any(w < LONG_ONLY_TOL):
            raise ValueError("negative weight beyond long-only tolerance")
        w[w < 0.0] = 0.0
        if self.asset_ids is not None and len(self.asset_ids) != w.size:
            raise ValueError("asset_ids length mismatch")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_positions(self) -> int:
        return int((self.weights > POSITION_THRESHOLD).sum())


def _check_solution(sol: SolverSolution, what: str) -> np.ndarray:
    if sol.status == solver.OPTIMAL:
        return sol.x
    if sol.status == solver.INFEASIBLE:
        raise Infeasible(f"{what}: solver reported infeasible")
    raise MaxIterations(f"{what}: no certificate after {sol.iterations} iterations "
                        f"(kkt residual {sol.kkt_residual:.3e})")


def _check_bounds(weights: np.ndarray, u: np.ndarray, what: str):
    if np.any(weights > u + 1e-8):
        raise Infeasible(f"{what}: weight exceeds upper bound beyond tolerance")


def min_variance(model: CovarianceModel, cfg: StrategyConfig = StrategyConfig(),
                 rebalance_date: str = "", asset_ids=None) -> Holdings:
    """Weights minimizing x'Vx over the bounded simplex."""
    if not validate_psd(model):
        raise NotPSD("covariance fails the PSD check")
    n = model.n_assets
    u = cfg.upper_vector(n)
    if float(np.minimum(u, 1.0).sum()) < 1.0:
        raise InfeasibleBounds("upper bounds cannot absorb full investment")
    prob = QuadraticProgram(Q=2.0 * model.matrix,
                            A_eq=np.ones((1, n)), b_eq=np.ones(1),
                            lower=0.0, upper=u)
    x = _check_solution(solve_qp(prob, cfg.tol, cfg.max_iter), MIN_VARIANCE)
    _check_bounds(x, u, MIN_VARIANCE)
    return Holdings(x, MIN_VARIANCE, rebalance_date, asset_ids)


def max_diversification(model: CovarianceModel,
                        cfg: StrategyConfig = StrategyConfig(),
                        rebalance_date: str = "", asset_ids=None) -> Holdings:
    """Weights maximizing the diversification ratio sigma'x / sqrt(x'Vx)."""
    if not validate_psd(model):
        raise NotPSD("covariance fails the PSD check")
    sigma = model.vols
    if np.any(sigma <= 0.0):
        raise DegenerateVols("zero volatility asset")
    n = model.n_assets
    u = cfg.upper_vector(n)
    if float(np.minimum(u, 1.0).sum()) < 1.0:
        raise InfeasibleBounds("upper bounds cannot absorb full investment")
    g_in = h_in = None
    finite = np.isfinite(u)
    if np.any(finite):
        # z_i - u_i * sum(z) <= 0 encodes z <= K u with K = 1'z
        g_in = np.eye(n)[finite] - np.outer(u[finite], np.ones(n))
        h_in = np.zeros(int(finite.sum()))
    prob = QuadraticProgram(Q=2.0 * model.matrix,
                            A_eq=sigma.reshape(1, -1), b_eq=np.ones(1),
                            G_in=g_in, h_in=h_in, lower=0.0)
    z = _check_solution(solve_qp(prob, cfg.tol, cfg.max_iter), MAX_DIVERSIFICATION)
    k = float(z.sum())
    if k <= 0.0:
        raise Infeasible("max diversification produced a non-positive gross weight")
    x = z / k
    _check_bounds(x, u, MAX_DIVERSIFICATION)
    return Holdings(x, MAX_DIVERSIFICATION, rebalance_date, asset_ids)


def risk_parity(model: CovarianceModel, cfg: StrategyConfig = StrategyConfig(),
                rebalance_date: str = "", asset_ids=None) -> Holdings:
    """Equal-risk-contribution weights via the bounded log-barrier problem.

    With the band d slack, the normalized solution equalizes the risk
    contributions x_i (Vx)_i across assets.

    Raises:
        NotPositiveDefinite: V is not strictly positive definite (the
            failure mode of the shrunk-sample model when assets outnumber
            window months).
    """
    sol = solve_box_log_barrier(model.matrix, cfg.rp_bound, cfg.tol, cfg.max_iter)
    y = _check_solution(sol, RISK_PARITY)
    return Holdings(y / y.sum(), RISK_PARITY, rebalance_date, asset_ids)


def equal_weighted(n: int, rebalance_date: str = "", asset_ids=None) -> Holdings:
    """1/n in every asset."""
    if n < 1:
        raise ValueError("need at least one asset")
    return Holdings(np.full(n, 1.0 / n), EQUAL_WEIGHTED, rebalance_date, asset_ids)


def value_weighted(caps: np.ndarray, rebalance_date: str = "",
                   asset_ids=None) -> Holdings:
    """Weights proportional to market capitalization."""
    caps = np.asarray(caps, dtype=float)
    if np.any(~np.isfinite(caps)) or np.any(caps <= 0.0):
        raise NonPositiveCap("caps must be finite and strictly positive")
    return Holdings(caps / caps.sum(), VALUE_WEIGHTED, rebalance_date, asset_ids)
