"""Covariance risk models: single-factor, constant-correlation, shrunk sample.

All three estimators consume an ``EstimationWindow`` whose columns are
complete (apply ``panel.active_universe`` first) and produce a
``CovarianceModel``. Shrinkage transforms:

    beta:      b_i = (2/3) * bhat_i + 1/3                  (toward 1)
    log-vol:   log w_i = (2/3) * log what_i + (1/3) * mean_j log what_j
    sample:    V = delta * F + (1 - delta) * S             (toward constant
               correlation target F; delta estimated Ledoit-Wolf style)

The 1/3 coefficients of the first two transforms are fixed constants of the
method, not tunable parameters. Sample moments use the W-1 denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorrelationOutOfPSDRange,
    DegenerateAsset,
    DegenerateMarket,
    NonFiniteValue,
    NonPositiveVariance,
)
from .panel import EstimationWindow

SINGLE_FACTOR = "single_factor"
CONSTANT_CORRELATION = "constant_correlation"
SAMPLE_SHRUNK = "sample_shrunk"
RISK_MODELS = (SINGLE_FACTOR, CONSTANT_CORRELATION, SAMPLE_SHRUNK)

#: idiosyncratic/sample variances are floored here before the log transform
#: so perfectly market-tracking assets cannot produce log(0)
VARIANCE_FLOOR = 1e-12

#: default eigenvalue tolerance for validate_psd (absolute, monthly variance)
PSD_TOL = 1e-10


@dataclass(frozen=True)
class FactorEstimates:
    """Raw (unshrunk) single-factor regression estimates.

    beta_hat: per-asset slope of excess return on market excess return.
    omega2_hat: per-asset residual variance about the fitted line (W-1).
    sigma2_f: market sample variance (never shrunk).
    """

    beta_hat: np.ndarray
    omega2_hat: np.ndarray
    sigma2_f: float


@dataclass(frozen=True)
class ConstantCorrelationEstimates:
    """Average pairwise correlation and shrunk volatility vector."""

    rho: float
    sigma: np.ndarray


@dataclass(frozen=True)
class CovarianceModel:
    """N x N covariance estimate with derived per-asset volatilities.

    ``vols`` is always sqrt of the matrix diagonal, never an independently
    stored estimate. ``npd`` flags a sample_shrunk estimate that failed the
    PSD check at construction (the other two kinds are positive definite by
    construction).
    """

    matrix: np.ndarray
    kind: str
    vols: np.ndarray = field(init=False)
    npd: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = np.abs(m).max()
        if scale > 0 and np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        diag = np.diag(m)
        if np.any(diag <= 0):
            raise NonPositiveVariance("covariance diagonal must be strictly positive")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "vols", np.sqrt(diag))

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[0]


def _require_complete(window: EstimationWindow):
    if not np.all(np.isfinite(window.returns)):
        raise NonFiniteValue(
            "window has missing asset returns; restrict to active_universe first")


def estimate_loadings(window: EstimationWindow) -> FactorEstimates:
    """Market-model regression for every asset at once (matrix form).

    beta_hat_i = Cov(r_i, r_M) / Var(r_M), with an intercept, so the
    residual of asset i is (r_i - rbar_i) - beta_hat_i * (r_M - rbar_M).
    All moments use the W-1 denominator.

    Raises:
        DegenerateMarket: market series has zero sample variance.
    """
    _require_complete(window)
    x = window.returns
    m = window.market
    w = x.shape[0]
    mc = m - m.mean()
    var_m = (mc @ mc) / (w - 1)
    if var_m <= 0.0:
        raise DegenerateMarket("market series has zero sample variance")
    xc = x - x.mean(axis=0)
    cov_im = (xc.T @ mc) / (w - 1)
    beta_hat = cov_im / var_m
    resid = xc - np.outer(mc, beta_hat)
    omega2_hat = (resid * resid).sum(axis=0) / (w - 1)
    return FactorEstimates(beta_hat, omega2_hat, float(var_m))


def shrink_betas(beta_hat: np.ndarray) -> np.ndarray:
    """Shrink raw betas one third of the way toward 1."""
    return (2.0 / 3.0) * np.asarray(beta_hat, dtype=float) + 1.0 / 3.0


def shrink_log_variances(omega2_hat: np.ndarray) -> np.ndarray:
    """Shrink log-volatilities one third toward their cross-sectional mean.

    Operates in log standard-deviation space and returns the shrunk
    *variances*. Serves both the idiosyncratic and the total-volatility
    shrinkage (the transform is the same).

    Raises:
        NonPositiveVariance: any input variance <= 0 (floor upstream).
    """
    omega2 = np.asarray(omega2_hat, dtype=float)
    if np.any(omega2 <= 0.0):
        raise NonPositiveVariance("log shrinkage needs strictly positive variances")
    log_om = 0.5 * np.log(omega2)
    shrunk = (2.0 / 3.0) * log_om + (1.0 / 3.0) * log_om.mean()
    return np.exp(2.0 * shrunk)


def single_factor_matrix(b: np.ndarray, sigma2_f: float,
                         omega2: np.ndarray) -> np.ndarray:
    """Assemble sigma_f^2 * b b' + Diag(omega2)."""
    return sigma2_f * np.outer(b, b) + np.diag(omega2)


def constant_correlation_matrix(rho: float, sigma: np.ndarray) -> np.ndarray:
    """Assemble rho * sigma sigma' + (1 - rho) * Diag(sigma)^2."""
    sigma = np.asarray(sigma, dtype=float)
    return rho * np.outer(sigma, sigma) + (1.0 - rho) * np.diag(sigma * sigma)


def single_factor_cov(window: EstimationWindow) -> CovarianceModel:
    """Single-factor covariance with shrunk betas and idiosyncratic vols."""
    est = estimate_loadings(window)
    b = shrink_betas(est.beta_hat)
    omega2 = shrink_log_variances(np.maximum(est.omega2_hat, VARIANCE_FLOOR))
    return CovarianceModel(single_factor_matrix(b, est.sigma2_f, omega2),
                           SINGLE_FACTOR)


def constant_correlation_estimates(window: EstimationWindow,
                                   ) -> ConstantCorrelationEstimates:
    """Average pairwise sample correlation plus log-shrunk volatilities.

    Raises:
        DegenerateAsset: fewer than 2 assets, or an asset with zero sample
            variance (its correlations are undefined; exclude it upstream).
        CorrelationOutOfPSDRange: mean correlation outside (-1/(N-1), 1).
    """
    _require_complete(window)
    x = window.returns
    w, n = x.shape
    if n < 2:
        raise DegenerateAsset("constant-correlation model needs at least 2 assets")
    xc = x - x.mean(axis=0)
    s = (xc.T @ xc) / (w - 1)
    s = 0.5 * (s + s.T)
    var = np.diag(s)
    if np.any(var <= 0.0):
        raise DegenerateAsset("asset with zero sample variance in window")
    sd = np.sqrt(var)
    corr = s / np.outer(sd, sd)
    iu = np.triu_indices(n, k=1)
    rho = float(corr[iu].mean())
    if rho <= -1.0 / (n - 1) or rho >= 1.0:
        raise CorrelationOutOfPSDRange(f"mean correlation {rho:.6f} outside PSD range")
    sigma = np.sqrt(shrink_log_variances(np.maximum(var, VARIANCE_FLOOR)))
    return ConstantCorrelationEstimates(rho, sigma)


def constant_correlation_cov(window: EstimationWindow) -> CovarianceModel:
    """Constant-correlation covariance from an estimation window."""
    est = constant_correlation_estimates(window)
    return CovarianceModel(constant_correlation_matrix(est.rho, est.sigma),
                           CONSTANT_CORRELATION)


def sample_covariance(window: EstimationWindow) -> np.ndarray:
    """Plain sample covariance (W-1 denominator), symmetrized."""
    _require_complete(window)
    x = window.returns
    xc = x - x.mean(axis=0)
    s = (xc.T @ xc) / (x.shape[0] - 1)
    return 0.5 * (s + s.T)


def shrinkage_target(s: np.ndarray) -> np.ndarray:
    """Constant-correlation target built from the sample covariance itself.

    Diagonal equals the sample variances; off-diagonals use the average of
    all pairwise sample correlations.
    """
    n = s.shape[0]
    sd = np.sqrt(np.diag(s))
    if n < 2:
        return s.copy()
    corr = s / np.outer(sd, sd)
    rbar = float(corr[np.triu_indices(n, k=1)].mean())
    f = rbar * np.outer(sd, sd)
    np.fill_diagonal(f, np.diag(s))
    return f


def ledoit_wolf_delta(window: EstimationWindow) -> float:
    """Asymptotically optimal shrinkage intensity toward the constant-
    correlation target, clipped to [0, 1].

    Follows the covCor estimator: pi-hat measures the variance of the sample
    covariance entries, rho-hat the covariance between sample and target
    estimation error, gamma-hat the misspecification distance.
    """
    _require_complete(window)
    x = window.returns
    t, n = x.shape
    if n < 2:
        return 0.0
    xc = x - x.mean(axis=0)
    sample = (xc.T @ xc) / t
    var = np.diag(sample)
    sd = np.sqrt(var)
    rbar = float((np.sum(sample / np.outer(sd, sd)) - n) / (n * (n - 1)))
    prior = rbar * np.outer(sd, sd)
    np.fill_diagonal(prior, var)

    y = xc * xc
    phi_mat = (y.T @ y) / t - sample * sample
    phi = float(phi_mat.sum())

    # theta_ij = (1/t) sum_k x_ki^3 x_kj - var_i * s_ij  (asymptotic covariance
    # between s_ii and s_ij); diagonal excluded from the rho sum
    term1 = ((xc * y).T @ xc) / t
    theta_mat = term1 - var[:, None] * sample
    np.fill_diagonal(theta_mat, 0.0)
    rho = float(np.diag(phi_mat).sum()
                + rbar * (np.outer(1.0 / sd, sd) * theta_mat).sum())

    gamma = float(np.linalg.norm(sample - prior, "fro") ** 2)
    if gamma <= 0.0:
        return 0.0
    kappa = (phi - rho) / gamma
    return float(min(1.0, max(0.0, kappa / t)))


def sample_cov_shrunk(window: EstimationWindow,
                      delta: float | None = None) -> CovarianceModel:
    """Sample covariance shrunk toward its constant-correlation target.

    delta=None estimates the intensity with ``ledoit_wolf_delta``; pass an
    explicit value in [0, 1] to override. The result is PSD in exact
    arithmetic but, unlike the other two models, carries no strict positive
    definiteness guarantee: with more assets than months the delta=0 blend
    is singular. The ``npd`` flag records a failed PSD check.
    """
    s = sample_covariance(window)
    f = shrinkage_target(s)
    if delta is None:
        delta = ledoit_wolf_delta(window)
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"shrinkage intensity must be in [0, 1], got {delta}")
    v = delta * f + (1.0 - delta) * s
    npd = not validate_psd(v, PSD_TOL)
    return CovarianceModel(v, SAMPLE_SHRUNK, npd=npd)


def validate_psd(model, tol: float = PSD_TOL) -> bool:
    """True iff the smallest eigenvalue is >= -tol (absolute).

    Accepts a CovarianceModel or a bare symmetric matrix.
    """
    matrix = model.matrix if isinstance(model, CovarianceModel) else np.asarray(model)
    return bool(np.linalg.eigvalsh(matrix)[0] >= -tol)


def estimate_cov(window: EstimationWindow, kind: str,
                 delta: float | None = None) -> CovarianceModel:
    """Dispatch to the estimator named by ``kind``."""
    if kind == SINGLE_FACTOR:
        return single_factor_cov(window)
    if kind == CONSTANT_CORRELATION:
        return constant_correlation_cov(window)
    if kind == SAMPLE_SHRUNK:
        return sample_cov_shrunk(window, delta=delta)
    raise ValueError(f"unknown risk model {kind!r}")
