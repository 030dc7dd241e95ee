"""Funding-rate model calibration for perpetual contracts.

Fits a Gaussian mean-reverting (Ornstein-Uhlenbeck) transition model to
hourly fractional funding observations by exact-transition maximum
likelihood, fits a Bernoulli-normal jump mixture on top of it as a
heavy-tail diagnostic, and reports standardized-residual moments.

All likelihoods operate on the fractional funding series; conversion to
cash units (``f = S * F``) happens downstream when building solver grids
and simulator accounting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import minimize

__all__ = [
    "FundingSeries",
    "OUParams",
    "JumpParams",
    "ResidualDiagnostics",
    "DegenerateSeriesError",
    "FitConvergenceError",
    "ou_moments",
    "ou_loglik",
    "fit_ou",
    "half_life",
    "jump_mixture_loglik",
    "fit_ou_jump",
    "residual_diagnostics",
    "cash_scale",
    "innovation_price_correlation",
    "calibration_report",
]

# Transition variances below this are clamped before entering a log; the
# clamp count is surfaced as a RuntimeWarning from the fitters.
VAR_FLOOR = 1e-18

LOG2 = math.log(2.0)


class DegenerateSeriesError(ValueError):
    """Raised when a series carries no usable variation for a fit."""


class FitConvergenceError(RuntimeError):
    """Optimizer failed to converge; ``best`` carries the best point found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class FundingSeries:
    """Timestamped fractional funding observations.

    Parameters
    ----------
    timestamps : array_like
        Observation instants in hours since epoch, strictly increasing.
        Fractional hours are allowed; gaps need not be uniform.
    values : array_like
        Fractional funding rate per hour at each timestamp.
    """

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.timestamps.ndim != 1 or self.values.ndim != 1:
            raise ValueError("timestamps and values must be 1-D")
        if self.timestamps.shape != self.values.shape:
            raise ValueError("timestamps and values must have equal length")
        if len(self.timestamps) < 2:
            raise ValueError("a funding series needs at least 2 observations")
        gaps = np.diff(self.timestamps)
        if np.any(gaps <= 0):
            bad = int(np.argmax(gaps <= 0))
            raise ValueError(
                f"timestamps must be strictly increasing (violation after index {bad})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("funding values must be finite")

    def __len__(self):
        return len(self.timestamps)

    @property
    def gaps(self):
        """Consecutive time gaps in hours (all positive)."""
        return np.diff(self.timestamps)

    def slice(self, start, stop):
        """Sub-series of observations with index in ``[start, stop)``."""
        return FundingSeries(self.timestamps[start:stop], self.values[start:stop])


@dataclass(frozen=True)
class OUParams:
    """Mean-reverting diffusion parameters (per-hour time unit).

    ``kappa`` is the mean-reversion speed (1/hour), ``theta`` the long-run
    level, ``sigma`` the diffusion volatility per sqrt(hour). Calibration
    always returns ``kappa > 0``; ``kappa == 0`` is admitted so the solver
    can represent the drift-free analytic test cases.
    """

    kappa: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    @property
    def stationary_std(self):
        """Stationary standard deviation sigma / sqrt(2 kappa)."""
        if self.kappa <= 0:
            raise ValueError("stationary_std requires kappa > 0")
        return self.sigma / math.sqrt(2.0 * self.kappa)


@dataclass(frozen=True)
class JumpParams:
    """Bernoulli-normal jump mixture parameters.

    Arrival intensity ``lambda_j`` (1/hour) implies a per-step jump
    probability ``1 - exp(-lambda_j * gap)``; jump sizes are normal with
    mean ``mu_j`` and standard deviation ``sigma_j``.
    """

    lambda_j: float
    mu_j: float
    sigma_j: float

    def __post_init__(self):
        if not (self.lambda_j >= 0 and math.isfinite(self.lambda_j)):
            raise ValueError(f"lambda_j must be finite and >= 0, got {self.lambda_j}")
        if not (self.sigma_j > 0 and math.isfinite(self.sigma_j)):
            raise ValueError(f"sigma_j must be finite and > 0, got {self.sigma_j}")
        if not math.isfinite(self.mu_j):
            raise ValueError("mu_j must be finite")

    def jump_probability(self, dt):
        """Per-step jump probability for a gap of ``dt`` hours."""
        return -np.expm1(-self.lambda_j * np.asarray(dt, dtype=float))


@dataclass(frozen=True)
class ResidualDiagnostics:
    """Moments of standardized one-step transition residuals."""

    skewness: float
    excess_kurtosis: float
    n: int


def ou_moments(f_prev, dt, params):
    """Exact Gaussian transition mean and variance over a gap of ``dt`` hours.

    mean = theta + (f_prev - theta) * exp(-kappa dt)
    var  = sigma^2 * (1 - exp(-2 kappa dt)) / (2 kappa)

    ``f_prev`` and ``dt`` may be arrays (broadcast together). Raises
    ``ValueError`` for non-positive ``dt``.
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    f_prev = np.asarray(f_prev, dtype=float)
    decay = np.exp(-params.kappa * dt)
    mean = params.theta + (f_prev - params.theta) * decay
    if params.kappa > 0:
        var = params.sigma**2 * (-np.expm1(-2.0 * params.kappa * dt)) / (2.0 * params.kappa)
    else:
        var = params.sigma**2 * dt
    var = np.broadcast_to(var, mean.shape).copy() if var.shape != mean.shape else var
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


def _transition_arrays(series, params):
    """Vectorized (previous, next, mean, clamped variance, n_clamped)."""
    f = series.values
    dt = series.gaps
    mean, var = ou_moments(f[:-1], dt, params)
    mean = np.atleast_1d(mean)
    var = np.atleast_1d(np.asarray(var, dtype=float))
    n_clamped = int(np.count_nonzero(var < VAR_FLOOR))
    var = np.maximum(var, VAR_FLOOR)
    return f[:-1], f[1:], mean, var, n_clamped


def _norm_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def ou_loglik(series, params):
    """Sum of exact Gaussian log transition densities over the series.

    A zero-volatility model facing any nonzero residual reports ``-inf``
    (degenerate likelihood sentinel) instead of raising.
    """
    if params.sigma == 0.0:
        f = series.values
        mean, _ = ou_moments(f[:-1], series.gaps, params)
        if np.any(f[1:] != np.atleast_1d(mean)):
            return -math.inf
        return math.inf
    _, f_next, mean, var, _ = _transition_arrays(series, params)
    return float(np.sum(_norm_logpdf(f_next, mean, var)))


def half_life(kappa):
    """Mean-reversion half-life ln(2)/kappa in hours; requires kappa > 0."""
    if not (kappa > 0):
        raise ValueError(f"kappa must be positive, got {kappa}")
    return LOG2 / kappa


def _centered_negloglik(x, series_centered):
    log_kappa, theta, log_sigma = x
    if abs(log_kappa) > 25 or abs(log_sigma) > 60 or not np.isfinite(theta):
        return 1e300
    params = OUParams(math.exp(log_kappa), theta, math.exp(log_sigma))
    ll = ou_loglik(series_centered, params)
    if not np.isfinite(ll):
        return 1e300
    return -ll


def _nelder_mead(fun, x0, steps, args, maxiter=4000):
    n = len(x0)
    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        simplex[i + 1] = x0
        simplex[i + 1][i] += steps[i]
    return minimize(
        fun,
        x0,
        args=args,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": 1e-10,
            "fatol": 1e-12,
            "maxiter": maxiter,
            "maxfev": 2 * maxiter,
        },
    )


def _ar1_start(values, dt_med):
    """Closed-form AR(1) seed for the transition MLE (centered series)."""
    x, y = values[:-1], values[1:]
    design = np.vstack([np.ones_like(x), x]).T
    (c, phi), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (c + phi * x)
    var_eps = float(np.var(resid))
    if 1e-6 < phi < 1.0 - 1e-6:
        kappa0 = -math.log(phi) / dt_med
        theta0 = c / (1.0 - phi)
        denom = -math.expm1(-2.0 * kappa0 * dt_med)
        sigma0 = math.sqrt(max(var_eps * 2.0 * kappa0 / denom, 1e-30))
    else:
        kappa0 = 1.0
        theta0 = 0.0
        sigma0 = math.sqrt(max(var_eps / dt_med, 1e-30))
    return kappa0, theta0, sigma0


def fit_ou(series, *, _warn_clamp=True):
    """Maximum-likelihood OU parameters for a funding series.

    Derivative-free search over (log kappa, theta, log sigma) restarted
    from three deterministic seeds; the series is centered internally so
    the fit is shift-equivariant. Requires at least 10 observations and a
    non-constant series.
    """
    if len(series) < 10:
        raise ValueError("fit_ou requires at least 10 observations")
    if float(np.ptp(series.values)) == 0.0:
        raise DegenerateSeriesError("cannot fit a constant funding series")

    center = float(np.mean(series.values))
    centered = FundingSeries(series.timestamps, series.values - center)
    dt_med = float(np.median(centered.gaps))
    kappa0, theta0, sigma0 = _ar1_start(centered.values, dt_med)
    sigma_diff = float(np.std(np.diff(centered.values))) / math.sqrt(dt_med)
    sigma_diff = max(sigma_diff, 1e-12)

    starts = [
        (math.log(max(kappa0, 1e-6)), theta0, math.log(max(sigma0, 1e-12))),
        (0.0, 0.0, math.log(sigma_diff)),
        (math.log(0.05), 0.0, math.log(sigma_diff)),
    ]
    steps = (0.7, max(0.25 * float(np.std(centered.values)), 1e-9), 0.35)

    best = None
    converged = False
    for x0 in starts:
        res = _nelder_mead(_centered_negloglik, np.asarray(x0), steps, (centered,))
        if best is None or res.fun < best.fun:
            best = res
        converged = converged or bool(res.success)
    # polish from the winner
    res = _nelder_mead(_centered_negloglik, best.x, tuple(s * 0.1 for s in steps), (centered,))
    if res.fun <= best.fun:
        best = res
        converged = converged or bool(res.success)

    params = OUParams(
        kappa=math.exp(best.x[0]),
        theta=best.x[1] + center,
        sigma=math.exp(best.x[2]),
    )
    if not np.isfinite(best.fun) or best.fun >= 1e300:
        raise FitConvergenceError("OU likelihood search failed to find a finite optimum", best=params)
    if not converged:
        raise FitConvergenceError("OU likelihood search did not converge", best=params)
    if _warn_clamp:
        *_, n_clamped = _transition_arrays(series, params)
        if n_clamped:
            warnings.warn(
                f"transition variance clamped at {VAR_FLOOR:g} for {n_clamped} steps",
                RuntimeWarning,
                stacklevel=2,
            )
    return params


def jump_mixture_loglik(series, ou, jp):
    """Log-likelihood of the Bernoulli-normal transition mixture.

    Per step the density is
    ``(1 - p) N(m, v) + p N(m + mu_j, v + sigma_j^2)`` with
    ``p = 1 - exp(-lambda_j * gap)``; branches are combined in log space
    so deep-tail densities do not underflow. With ``lambda_j == 0`` this
    reduces exactly to :func:`ou_loglik`.
    """
    _, f_next, mean, var, _ = _transition_arrays(series, ou)
    p = jp.jump_probability(series.gaps)
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
        log_1mp = np.log1p(-p)
    log_diff = log_1mp + _norm_logpdf(f_next, mean, var)
    log_jump = log_p + _norm_logpdf(f_next, mean + jp.mu_j, var + jp.sigma_j**2)
    return float(np.sum(np.logaddexp(log_diff, log_jump)))


def _jump_negloglik(x, series_centered):
    log_kappa, theta, log_sigma, log_lambda, mu_j, log_sigma_j = x
    if (
        abs(log_kappa) > 25
        or abs(log_sigma) > 60
        or abs(log_lambda) > 30
        or abs(log_sigma_j) > 60
        or not np.isfinite(theta)
        or not np.isfinite(mu_j)
    ):
        return 1e300
    ou = OUParams(math.exp(log_kappa), theta, math.exp(log_sigma))
    jp = JumpParams(math.exp(log_lambda), mu_j, math.exp(log_sigma_j))
    ll = jump_mixture_loglik(series_centered, ou, jp)
    if not np.isfinite(ll):
        return 1e300
    return -ll


def fit_ou_jump(series, init):
    """Joint OU-plus-jump refinement starting from a fitted OU model.

    Returns ``(ou, jumps, ll_gain)`` where ``ll_gain`` is the optimum
    mixture log-likelihood minus the log-likelihood of ``init``. The
    no-jump boundary is always included in the candidate set, so
    ``ll_gain >= 0`` by construction; a boundary winner is reported as
    ``lambda_j = 0`` with the OU parameters unchanged.
    """
    ll_ou = ou_loglik(series, init)
    center = float(np.mean(series.values))
    centered = FundingSeries(series.timestamps, series.values - center)

    if init.kappa > 0 and init.sigma > 0:
        sigma_stat = init.stationary_std
    else:
        sigma_stat = max(float(np.std(series.values)), 1e-12)
    steps = (0.5, max(0.25 * float(np.std(centered.values)), 1e-9), 0.3, 1.0, sigma_stat, 0.7)

    x_base = (math.log(max(init.kappa, 1e-6)), init.theta - center, math.log(max(init.sigma, 1e-12)))
    best = None
    for lam0 in (0.005, 0.02, 0.1):
        for sj0 in (3.0 * sigma_stat, 10.0 * sigma_stat):
            x0 = np.asarray(x_base + (math.log(lam0), 0.0, math.log(sj0)))
            res = _nelder_mead(_jump_negloglik, x0, steps, (centered,), maxiter=6000)
            if best is None or res.fun < best.fun:
                best = res

    if not np.isfinite(best.fun) or best.fun >= 1e300:
        raise FitConvergenceError(
            "jump-mixture likelihood search failed to find a finite optimum", best=init
        )

    ll_jump = -best.fun
    if ll_jump <= ll_ou:
        # no-jump boundary wins: keep the OU optimum and a degenerate mixture
        return init, JumpParams(0.0, 0.0, sigma_stat), 0.0
    ou = OUParams(math.exp(best.x[0]), best.x[1] + center, math.exp(best.x[2]))
    jp = JumpParams(math.exp(best.x[3]), best.x[4], math.exp(best.x[5]))
    return ou, jp, float(ll_jump - ll_ou)


def residual_diagnostics(series, params):
    """Skewness and excess kurtosis of standardized transition residuals."""
    if len(series) < 4:
        raise ValueError("residual diagnostics require at least 4 observations")
    _, f_next, mean, var, _ = _transition_arrays(series, params)
    z = (f_next - mean) / np.sqrt(var)
    if float(np.std(z)) == 0.0:
        raise DegenerateSeriesError("standardized residuals have zero variance")
    return ResidualDiagnostics(
        skewness=float(stats.skew(z)),
        excess_kurtosis=float(stats.kurtosis(z)),
        n=len(z),
    )


def cash_scale(F, S):
    """Convert a fractional funding rate to cash per contract per hour.

    ``f = S * F`` with ``S`` the mark price; raises for ``S <= 0``.
    """
    if not (S > 0):
        raise ValueError(f"price must be positive, got {S}")
    out = S * np.asarray(F, dtype=float)
    if out.ndim == 0:
        return float(out)
    return out


def innovation_price_correlation(series, minute_ts, mid):
    """Sample correlation of funding innovations with log price returns.

    Diagnostic only: pairs each funding transition with the log mid-price
    return over the same interval (prices looked up at the latest minute
    at or before each funding timestamp). Returns ``nan`` when fewer than
    3 overlapping intervals exist or either leg is constant.
    """
    minute_ts = np.asarray(minute_ts, dtype=float)
    mid = np.asarray(mid, dtype=float)
    idx = np.searchsorted(minute_ts, series.timestamps, side="right") - 1
    ok = idx >= 0
    if np.count_nonzero(ok) < 4:
        return float("nan")
    prices = mid[idx[ok]]
    values = series.values[ok]
    dF = np.diff(values)
    dlogS = np.diff(np.log(prices))
    if len(dF) < 3 or float(np.std(dF)) == 0.0 or float(np.std(dlogS)) == 0.0:
        return float("nan")
    return float(np.corrcoef(dF, dlogS)[0, 1])


def calibration_report(series, *, train_frac=0.8):
    """Fit OU and OU-plus-jump models on a chronological train split.

    Returns a flat dict matching the calibration-report JSON schema
    (without the ``asset`` field, which the caller owns).
    """
    if not (0 < train_frac <= 1):
        raise ValueError("train_frac must be in (0, 1]")
    n = len(series)
    n_train = max(10, int(round(n * train_frac)))
    n_train = min(n_train, n)
    train = series.slice(0, n_train)

    ou = fit_ou(train)
    ll_ou = ou_loglik(train, ou)
    ou_j, jp, ll_gain = fit_ou_jump(train, ou)
    diag = residual_diagnostics(train, ou)
    return {
        "kappa": ou.kappa,
        "theta": ou.theta,
        "sigma": ou.sigma,
        "half_life_hours": half_life(ou.kappa),
        "jump_lambda": jp.lambda_j,
        "jump_mu": jp.mu_j,
        "jump_sigma": jp.sigma_j,
        "ll_ou": ll_ou,
        "ll_jump": ll_ou + ll_gain,
        "ll_gain": ll_gain,
        "skewness": diag.skewness,
        "excess_kurtosis": diag.excess_kurtosis,
        "n_train": n_train,
        "n_test": n - n_train,
    }
