"""divport: covariance risk models, diversification portfolios, backtests."""

__version__ = "0.1.0"

from .analytics import (
    PerformanceReport,
    annualize,
    build_report,
    concentration,
    market_beta,
)
from .backtest import BacktestConfig, BacktestResult, run_backtest, run_matrix
from .panel import (
    EstimationWindow,
    ReturnsPanel,
    active_universe,
    load_panel,
    save_panel,
    window_at,
)
from .riskmodels import (
    CovarianceModel,
    FactorEstimates,
    constant_correlation_cov,
    estimate_cov,
    estimate_loadings,
    sample_cov_shrunk,
    shrink_betas,
    shrink_log_variances,
    single_factor_cov,
    validate_psd,
)
from .solver import QuadraticProgram, SolverSolution, solve_box_log_barrier, solve_qp
from .strategies import (
    Holdings,
    StrategyConfig,
    equal_weighted,
    max_diversification,
    min_variance,
    risk_parity,
    value_weighted,
)
from .synthgen import SynthSpec, generate

__all__ = [
    "BacktestConfig",
    "BacktestResult",
    "CovarianceModel",
    "EstimationWindow",
    "FactorEstimates",
    "Holdings",
    "PerformanceReport",
    "QuadraticProgram",
    "ReturnsPanel",
    "SolverSolution",
    "StrategyConfig",
    "SynthSpec",
    "active_universe",
    "annualize",
    "build_report",
    "concentration",
    "constant_correlation_cov",
    "equal_weighted",
    "estimate_cov",
    "estimate_loadings",
    "generate",
    "load_panel",
    "market_beta",
    "max_diversification",
    "min_variance",
    "risk_parity",
    "run_backtest",
    "run_matrix",
    "sample_cov_shrunk",
    "save_panel",
    "shrink_betas",
    "shrink_log_variances",
    "single_factor_cov",
    "solve_box_log_barrier",
    "solve_qp",
    "validate_psd",
    "value_weighted",
    "window_at",
]
