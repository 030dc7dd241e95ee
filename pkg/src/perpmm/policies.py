"""Quoting policies behind one uniform interface.

Four policies share the ``quote(policy, t, q, S, F) -> QuoteDecision``
entry point:

``pure_as``
    funding-unaware baseline: looks up a table solved with the funding
    dimension collapsed to zero, so only inventory skews the quotes.
``pure_as_scaled``
    the same baseline with quote size and inventory limits multiplied by
    a scale factor (a risk-appetite diagnostic; the fill curve is
    unchanged).
``hjb_fd``
    funding-aware policy: converts the observed fractional funding to the
    cash signal ``f = S * F`` and looks up the full funding-aware table.
``risk_calibrated``
    practical benchmark quoting ``1/k`` with linear skew loadings on
    inventory and on the cash funding signal. This rule's functional form
    is a reconstruction (a simple linear skew), not a published formula.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fills import FillCurve
from .funding import OUParams
from .hjb import GridSpec, HJBParams, HJBTable, quote_lookup, solve

__all__ = [
    "QuoteDecision",
    "PolicyConfig",
    "POLICY_KINDS",
    "quote",
    "build_as_table",
    "collapse_grid",
    "calibrate_scaled_as",
    "calibrate_risk_rule",
]

POLICY_KINDS = ("pure_as", "pure_as_scaled", "hjb_fd", "risk_calibrated")


@dataclass(frozen=True)
class QuoteDecision:
    """One round of quotes: offsets from mid, per-side activity flags, and
    the quote size in contracts. Inactive sides carry an infinite offset."""

    bid_offset: float
    ask_offset: float
    bid_active: bool
    ask_active: bool
    quote_size: float


@dataclass
class PolicyConfig:
    """Configuration for one quoting policy.

    Table-based kinds carry a solved value table (funding-collapsed for
    ``pure_as``/``pure_as_scaled``); ``risk_calibrated`` instead needs the
    fill curve plus explicit inventory limits. ``quote_size`` defaults to
    one inventory grid step.
    """

    kind: str
    table: HJBTable | None = None
    fill: FillCurve | None = None
    scale: float = 1.0
    beta_q: float = 0.0
    beta_f: float = 0.0
    quote_size: float | None = None
    q_min: float | None = None
    q_max: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.kind in ("pure_as", "pure_as_scaled", "hjb_fd"):
            if self.table is None:
                raise ValueError(f"{self.kind} requires a solved table")
            if self.kind != "hjb_fd" and self.table.grid.n_f != 1:
                raise ValueError(f"{self.kind} requires a funding-collapsed table")
            if self.fill is None:
                self.fill = self.table.params.fill
            if self.quote_size is None:
                self.quote_size = self.table.grid.dq
        else:
            if self.fill is None:
                raise ValueError("risk_calibrated requires a fill curve")
            if self.q_min is None or self.q_max is None:
                raise ValueError("risk_calibrated requires explicit inventory limits")
            if self.quote_size is None:
                self.quote_size = 1.0
        if not (self.scale > 0):
            raise ValueError("scale must be positive")
        if self.label is None:
            self.label = self.kind

    @property
    def horizon(self):
        """Decision horizon in hours (1.0 for table-free policies)."""
        return self.table.grid.horizon_T if self.table is not None else 1.0

    def inventory_limits(self):
        """Effective (q_min, q_max) in contracts, scale applied."""
        if self.kind == "risk_calibrated":
            return self.q_min, self.q_max
        g = self.table.grid
        if self.kind == "pure_as_scaled":
            return g.q_min * self.scale, g.q_max * self.scale
        return g.q_min, g.q_max

    def effective_quote_size(self):
        if self.kind == "pure_as_scaled":
            return self.quote_size * self.scale
        return self.quote_size


def collapse_grid(grid):
    """The same inventory/time grid with the funding dimension at {0}."""
    return GridSpec(
        horizon_T=grid.horizon_T,
        n_time=grid.n_time,
        q_min=grid.q_min,
        q_max=grid.q_max,
        dq=grid.dq,
        f_min=0.0,
        f_max=0.0,
        n_f=1,
    )


def build_as_table(grid, params):
    """Solve the funding-unaware baseline table: same penalties and fill
    curve, funding state collapsed to zero."""
    zero_ou = OUParams(kappa=params.ou_cash.kappa, theta=0.0, sigma=0.0)
    return solve(collapse_grid(grid), HJBParams(zero_ou, params.fill, params.alpha, params.phi))


def quote(policy, t, q, S, F):
    """Quote decision for state (elapsed table time, inventory, mid price,
    fractional funding). Blocked or limit-breaching sides come back
    inactive; active offsets respect the quote floor."""
    qs = policy.effective_quote_size()
    if policy.kind == "pure_as":
        res = quote_lookup(policy.table, t, q, 0.0)
        return QuoteDecision(res.bid_offset, res.ask_offset,
                             not res.bid_blocked, not res.ask_blocked, qs)
    if policy.kind == "hjb_fd":
        res = quote_lookup(policy.table, t, q, S * F)
        return QuoteDecision(res.bid_offset, res.ask_offset,
                             not res.bid_blocked, not res.ask_blocked, qs)
    if policy.kind == "pure_as_scaled":
        res = quote_lookup(policy.table, t, q / policy.scale, 0.0)
        return QuoteDecision(res.bid_offset, res.ask_offset,
                             not res.bid_blocked, not res.ask_blocked, qs)
    # risk_calibrated
    fill = policy.fill
    skew = policy.beta_q * q + policy.beta_f * S * F
    bid = max(fill.delta_min, 1.0 / fill.k + skew)
    ask = max(fill.delta_min, 1.0 / fill.k - skew)
    bid_active = q + qs <= policy.q_max + 1e-12
    ask_active = q - qs >= policy.q_min - 1e-12
    return QuoteDecision(bid if bid_active else math.inf,
                         ask if ask_active else math.inf,
                         bid_active, ask_active, qs)


def _scaled_variant(base_policy, scale):
    return PolicyConfig(
        kind="pure_as_scaled",
        table=base_policy.table,
        fill=base_policy.fill,
        scale=scale,
        quote_size=base_policy.quote_size,
        label=f"pure_as_scaled[{scale:g}]",
    )


def _mean_rms_and_equity(policy, panel, fill, seeds, global_seed):
    from .simulator import run_backtest

    rms, finals = [], []
    for seed in seeds:
        path = run_backtest(panel, policy, fill, seed=seed, global_seed=global_seed)
        rms.append(math.sqrt(float(np.mean(path.inventory_path**2))))
        finals.append(path.equity_path[-1])
    return float(np.mean(rms)), float(np.mean(finals))


def calibrate_scaled_as(base_rms, target_rms, panel, base_policy, fill, seeds,
                        *, scales=None, global_seed=0):
    """Pick the size/limit scale whose mean inventory RMS best matches the
    target on the calibration seeds. Grid 0.10..2.00 step 0.05; ties go to
    the smaller scale; a flat or non-monotone RMS response only warns.
    ``base_rms`` (per-seed RMS of the unscaled baseline) is used for the
    response sanity check."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("calibration seed set must not be empty")
    if not (target_rms > 0):
        raise ValueError("target_rms must be positive")
    if scales is None:
        scales = [round(0.10 + 0.05 * i, 2) for i in range(39)]

    responses = []
    for scale in scales:
        rms, _ = _mean_rms_and_equity(_scaled_variant(base_policy, scale), panel, fill,
                                      seeds, global_seed)
        responses.append(rms)
    responses = np.asarray(responses)

    span = float(np.ptp(responses))
    if span <= 1e-12 * max(1.0, float(np.max(responses))):
        warnings.warn("scaled-baseline RMS response is flat across scales", RuntimeWarning)
    elif np.any(np.diff(responses) < -1e-9 * max(1.0, float(np.max(responses)))):
        warnings.warn("scaled-baseline RMS response is non-monotone in scale", RuntimeWarning)

    gaps = np.abs(responses - target_rms)
    best = int(np.argmin(gaps))  # argmin takes the first (smallest scale) on ties
    return float(scales[best])


def calibrate_risk_rule(panel, fill, target_rms, seed_set, *, q_min, q_max,
                        quote_size=1.0, beta_q_grid=None, beta_f_grid=None,
                        global_seed=0):
    """Grid-search the linear skew loadings of the practical benchmark.

    Admissible points hold mean inventory RMS at or below the target; the
    all-zero point is always admissible so the search is total. Among the
    admissible, maximize mean final equity; ties break toward
    (|beta_f|, |beta_q|) smallest.
    """
    seeds = list(seed_set)
    if not seeds:
        raise ValueError("calibration seed set must not be empty")
    if beta_q_grid is None:
        q_ref = max(abs(q_min), abs(q_max), 1.0)
        beta_q_grid = np.array([0.0, 0.02, 0.05, 0.1, 0.2, 0.5]) / (fill.k * q_ref)
    if beta_f_grid is None:
        beta_f_grid = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0])

    candidates = []
    for bq in beta_q_grid:
        for bf in beta_f_grid:
            policy = PolicyConfig(
                kind="risk_calibrated", fill=fill, beta_q=float(bq), beta_f=float(bf),
                quote_size=quote_size, q_min=q_min, q_max=q_max,
            )
            rms, equity = _mean_rms_and_equity(policy, panel, fill, seeds, global_seed)
            admissible = rms <= target_rms or (bq == 0.0 and bf == 0.0)
            if admissible:
                candidates.append((-equity, abs(bf), abs(bq), bf, bq))
    candidates.sort()
    _, _, _, bf, bq = candidates[0]
    return float(bq), float(bf)
