"""Synthetic market-data factory for tests, demos, and recovery checks.

Generates an internally consistent trio: minute mid prices (lognormal
steps), hourly fractional OU funding with optional Bernoulli-normal
jumps, and a minute trade tape whose deepest crossing per minute is drawn
by inverting the target fill curve (so ``minute_hit`` bucketing recovers
the ground-truth curve up to sampling noise). A fraction of crossings
carries sub-quote volume so the two counting modes genuinely diverge.
Ground-truth parameters are recorded in a sidecar dict for recovery
tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fills import FillCurve
from .funding import JumpParams, OUParams

__all__ = ["SyntheticSpec", "gen_price_minutes", "gen_funding_hours", "gen_tape", "generate"]


@dataclass
class SyntheticSpec:
    """Ground truth for one synthetic dataset.

    ``price_vol`` is lognormal volatility per sqrt(hour); ``funding`` are
    fractional per-hour OU parameters; ``fill`` is the target intensity
    curve in per-hour / per-quote-currency units.
    """

    days: float
    s0: float
    price_vol: float
    funding: OUParams
    fill: FillCurve
    jumps: JumpParams | None = None
    quote_size: float = 1.0
    sub_quote_fraction: float = 0.3
    second_crossing_prob: float = 0.3
    seed: int = 1
    start_hours: float = 0.0

    def __post_init__(self):
        if self.days <= 0 or self.s0 <= 0:
            raise ValueError("days and s0 must be positive")
        if self.price_vol < 0:
            raise ValueError("price_vol must be >= 0")
        if not (0 <= self.sub_quote_fraction < 1):
            raise ValueError("sub_quote_fraction must be in [0, 1)")


def gen_price_minutes(spec, rng):
    """Minute timestamps (hours) and lognormal mid prices."""
    n = int(round(spec.days * 24 * 60))
    ts = spec.start_hours + np.arange(n) / 60.0
    if spec.price_vol == 0.0:
        return ts, np.full(n, spec.s0)
    dt = 1.0 / 60.0
    steps = spec.price_vol * math.sqrt(dt) * rng.standard_normal(n - 1)
    steps -= 0.5 * spec.price_vol**2 * dt
    mid = spec.s0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    return ts, mid


def gen_funding_hours(spec, rng):
    """Hourly funding observations from exact OU transitions plus optional
    Bernoulli-normal jumps."""
    n = int(round(spec.days * 24))
    ts = spec.start_hours + np.arange(n, dtype=float)
    ou = spec.funding
    if ou.sigma == 0.0 and ou.kappa >= 0:
        values = np.full(n, ou.theta)
        return ts, values
    decay = math.exp(-ou.kappa)
    sd = math.sqrt(ou.sigma**2 * (1 - decay**2) / (2 * ou.kappa)) if ou.kappa > 0 else ou.sigma
    p_jump = 1.0 - math.exp(-spec.jumps.lambda_j) if spec.jumps else 0.0
    values = np.empty(n)
    values[0] = ou.theta
    for i in range(n - 1):
        nxt = ou.theta + (values[i] - ou.theta) * decay + sd * rng.standard_normal()
        if p_jump and rng.uniform() < p_jump:
            nxt += spec.jumps.mu_j + spec.jumps.sigma_j * rng.standard_normal()
        values[i + 1] = nxt
    return ts, values


def gen_tape(spec, rng, minute_ts):
    """Long-format crossing tape ``(minute_ts, distance, crossed_volume)``.

    Per minute, the deepest crossing depth D satisfies
    ``P(D >= d) = 1 - exp(-lambda(d)/60)`` under the ground-truth curve;
    volumes mix sub-quote and above-quote sizes, and occasional shallower
    secondary crossings exercise cumulative-volume counting.
    """
    lam0, k, qs = spec.fill.lambda0, spec.fill.k, spec.quote_size
    p_touch = 1.0 - math.exp(-lam0 / 60.0)
    rows_ts, rows_d, rows_v = [], [], []

    def draw_volume():
        if rng.uniform() < spec.sub_quote_fraction:
            return qs * rng.uniform(0.05, 0.95)
        return qs * (1.0 + rng.exponential(1.0))

    for ts in minute_ts:
        u = rng.uniform()
        if u >= p_touch:
            continue
        depth = -math.log(60.0 * (-math.log1p(-u)) / lam0) / k
        if depth <= 0:
            continue
        rows_ts.append(ts)
        rows_d.append(depth)
        rows_v.append(draw_volume())
        if rng.uniform() < spec.second_crossing_prob:
            rows_ts.append(ts)
            rows_d.append(depth * rng.uniform(0.2, 0.9))
            rows_v.append(draw_volume())
    return np.asarray(rows_ts), np.asarray(rows_d), np.asarray(rows_v)


def generate(spec):
    """All three legs plus the ground-truth sidecar dict.

    Returns ``(minute_ts, mid, funding_ts, funding, tape, truth)`` where
    ``tape`` is the ``(minute_ts, distance, volume)`` triple.
    """
    rng = np.random.default_rng(spec.seed)
    minute_ts, mid = gen_price_minutes(spec, rng)
    funding_ts, funding = gen_funding_hours(spec, rng)
    tape = gen_tape(spec, rng, minute_ts)
    truth = {
        "days": spec.days,
        "s0": spec.s0,
        "price_vol": spec.price_vol,
        "funding_kappa": spec.funding.kappa,
        "funding_theta": spec.funding.theta,
        "funding_sigma": spec.funding.sigma,
        "jump_lambda": spec.jumps.lambda_j if spec.jumps else 0.0,
        "jump_mu": spec.jumps.mu_j if spec.jumps else 0.0,
        "jump_sigma": spec.jumps.sigma_j if spec.jumps else 0.0,
        "fill_lambda0": spec.fill.lambda0,
        "fill_k": spec.fill.k,
        "fill_delta_min": spec.fill.delta_min,
        "quote_size": spec.quote_size,
        "seed": spec.seed,
    }
    return minute_ts, mid, funding_ts, funding, tape, truth
