"""Fill-intensity calibration from minute-level execution data.

Counts, per quote-distance threshold, the minutes in which a resting
quote would have filled (under two counting rules), converts the hit
rates to per-hour intensities via the exponential-waiting-time inversion,
and fits the exponential decay curve ``lambda(delta) = lambda0 *
exp(-k * delta)`` by weighted least squares in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HitPanel",
    "FillCurve",
    "UninformativePanelError",
    "NonDecayingFillsError",
    "bucket_hits",
    "fit_fill_curve",
    "default_thresholds",
    "fill_report",
]

MODES = ("volume_minute", "minute_hit")


class UninformativePanelError(ValueError):
    """Every hit column is empty or saturated; no curve can be fit."""


class NonDecayingFillsError(ValueError):
    """The fitted decay rate is non-positive, which signals a data problem."""


@dataclass
class HitPanel:
    """Per-threshold counts of qualifying minutes.

    ``hits[i]`` is the number of minutes counted as a hit at distance
    ``thresholds[i]``. Counts may be fractional (expected counts) but must
    be non-increasing in the threshold and bounded by ``minutes``.
    """

    minutes: int
    thresholds: np.ndarray
    hits: np.ndarray
    mode: str
    quote_size: float = 1.0

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.hits = np.asarray(self.hits, dtype=float)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.minutes <= 0:
            raise ValueError("minutes must be positive")
        if self.thresholds.ndim != 1 or self.thresholds.shape != self.hits.shape:
            raise ValueError("thresholds and hits must be 1-D arrays of equal length")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly ascending")
        if np.any(self.thresholds <= 0):
            raise ValueError("thresholds must be positive distances")
        if np.any(self.hits < 0) or np.any(self.hits > self.minutes):
            raise ValueError("hits must lie in [0, minutes]")
        if np.any(np.diff(self.hits) > 1e-9):
            raise ValueError("hits must be non-increasing in the threshold")


@dataclass(frozen=True)
class FillCurve:
    """Exponential fill-intensity curve ``lambda(delta) = lambda0 e^{-k delta}``.

    ``lambda0`` is the at-touch intensity in fills per hour, ``k`` the decay
    rate per quote-currency unit, ``delta_min`` the minimum quote offset.
    Calibration always returns ``lambda0 > 0``; zero is admitted so no-fill
    solver test configurations can be expressed.
    """

    lambda0: float
    k: float
    delta_min: float = 0.0

    def __post_init__(self):
        if not (self.lambda0 >= 0 and math.isfinite(self.lambda0)):
            raise ValueError(f"lambda0 must be finite and >= 0, got {self.lambda0}")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"k must be finite and > 0, got {self.k}")
        if not (self.delta_min >= 0 and math.isfinite(self.delta_min)):
            raise ValueError(f"delta_min must be finite and >= 0, got {self.delta_min}")

    def intensity(self, delta):
        """Fill intensity at offset ``delta``, in fills per hour."""
        return self.lambda0 * np.exp(-self.k * np.asarray(delta, dtype=float))

    def fill_probability(self, delta, dt):
        """Probability of at least one fill over ``dt`` hours at ``delta``."""
        return -np.expm1(-self.intensity(delta) * dt)

    @property
    def max_intensity(self):
        """Intensity at the quote floor, ``lambda0 e^{-k delta_min}``."""
        return self.lambda0 * math.exp(-self.k * self.delta_min)


def default_thresholds(mid, n=8, lo_bps=0.5, hi_bps=50.0):
    """Log-spaced quote-distance thresholds from 0.5 to 50 bps of mid."""
    return mid * 1e-4 * np.geomspace(lo_bps, hi_bps, n)


def bucket_hits(minute_ids, distances, volumes, thresholds, mode, quote_size=1.0,
                n_minutes=None):
    """Count qualifying minutes per threshold from a long-format trade tape.

    Each tape row is a crossing event: during minute ``minute_ids[i]``
    trades swept to ``distances[i]`` from mid with ``volumes[i]`` crossed
    volume at that depth. Under ``volume_minute`` a minute hits threshold
    ``d`` when the cumulative volume of crossings at distance >= d reaches
    ``quote_size``; under ``minute_hit`` a single crossing at distance
    >= d suffices.

    ``n_minutes`` is the total number of observed minutes (the hit-rate
    denominator). The tape carries rows only for minutes with crossings,
    so when omitted it falls back to the count of distinct minutes in the
    tape, which is only correct for dense tapes.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.ndim != 1 or len(thresholds) == 0:
        raise ValueError("thresholds must be a non-empty 1-D array")
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly ascending")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "volume_minute" and not quote_size > 0:
        raise ValueError("quote_size must be positive for volume_minute")

    minute_ids = np.asarray(minute_ids)
    distances = np.asarray(distances, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if not (len(minute_ids) == len(distances) == len(volumes)):
        raise ValueError("tape columns must have equal length")

    unique_minutes, inverse = np.unique(minute_ids, return_inverse=True)
    n_crossed = len(unique_minutes)
    if n_minutes is None:
        n_minutes = n_crossed
    elif n_minutes < n_crossed:
        raise ValueError(
            f"n_minutes={n_minutes} is below the {n_crossed} distinct minutes in the tape"
        )
    hits = np.zeros(len(thresholds))
    for t_idx, thr in enumerate(thresholds):
        deep = distances >= thr
        if mode == "minute_hit":
            hit_minutes = np.zeros(n_crossed, dtype=bool)
            hit_minutes[inverse[deep]] = True
            hits[t_idx] = np.count_nonzero(hit_minutes)
        else:
            vol_at_depth = np.bincount(inverse[deep], weights=volumes[deep], minlength=n_crossed)
            hits[t_idx] = np.count_nonzero(vol_at_depth >= quote_size)
    return HitPanel(
        minutes=n_minutes,
        thresholds=thresholds,
        hits=hits,
        mode=mode,
        quote_size=quote_size,
    )


def fit_fill_curve(panel, delta_min=0.0):
    """Weighted least-squares exponential fit to a hit panel.

    Per-threshold rates are the exponential-waiting-time inversion
    ``lambda = -ln(1 - hits/minutes)`` per minute, scaled to per hour;
    ``(ln lambda0, -k)`` come from a least-squares line on
    ``(delta, ln lambda)`` with binomial variance weights
    ``hits * (1 - hits/minutes)``.
    """
    rate = panel.hits / panel.minutes
    usable = (panel.hits > 0) & (panel.hits < panel.minutes)
    if np.count_nonzero(usable) < 2:
        raise UninformativePanelError(
            "need at least 2 thresholds with 0 < hits < minutes to fit a curve"
        )
    delta = panel.thresholds[usable]
    lam_hour = -np.log1p(-rate[usable]) * 60.0
    weights = panel.hits[usable] * (1.0 - rate[usable])
    slope, intercept = np.polyfit(delta, np.log(lam_hour), 1, w=np.sqrt(weights))
    k = -float(slope)
    if k <= 0:
        raise NonDecayingFillsError(
            f"fitted decay rate k={k:.6g} is not positive; fills do not decay with distance"
        )
    return FillCurve(lambda0=float(np.exp(intercept)), k=k, delta_min=delta_min)


def fill_report(panel, curve):
    """Flat dict matching the fill-curve JSON schema (caller adds asset)."""
    return {
        "mode": panel.mode,
        "lambda0_per_hour": curve.lambda0,
        "k_per_quote_unit": curve.k,
        "delta_min": curve.delta_min,
        "thresholds": panel.thresholds.tolist(),
        "hit_rates": (panel.hits / panel.minutes).tolist(),
    }
