"""Minute-replay backtester with seeded fills and hourly funding.

Replays a minute mid-price panel plus hourly funding observations. Each
minute the policy quotes, both sides are filled independently with
probability ``1 - exp(-lambda(delta) * dt)``, fills settle at ``mid +/-
offset``, and funding is debited ``q * S * F`` whenever an hourly funding
timestamp is crossed. Exactly two uniforms are drawn per minute whether
or not sides are active, so runs on the same seed stay draw-aligned
across policies (paired comparisons by seed are then meaningful).

Cash is maintained as ``initial + ask proceeds - bid payments - funding``
so the conservation identity holds exactly by construction and is
re-checked on every path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .policies import quote

__all__ = [
    "MarketPanel",
    "SimState",
    "PathResult",
    "MetricsRow",
    "StressWindow",
    "sample_fills",
    "apply_funding",
    "run_backtest",
    "compute_metrics",
    "select_stress_windows",
]


@dataclass
class MarketPanel:
    """Minute mid prices plus hourly fractional funding observations.

    ``minute_ts`` and ``funding_ts`` are hours since epoch. At least one
    funding observation must exist at or before the first minute so the
    policy always sees a funding state. Gaps above ``max_gap_minutes``
    are rejected unless ``allow_gaps`` is set.
    """

    minute_ts: np.ndarray
    mid: np.ndarray
    funding_ts: np.ndarray
    funding: np.ndarray
    allow_gaps: bool = False
    max_gap_minutes: float = 10.0

    def __post_init__(self):
        self.minute_ts = np.asarray(self.minute_ts, dtype=float)
        self.mid = np.asarray(self.mid, dtype=float)
        self.funding_ts = np.asarray(self.funding_ts, dtype=float)
        self.funding = np.asarray(self.funding, dtype=float)
        if self.minute_ts.ndim != 1 or self.minute_ts.shape != self.mid.shape:
            raise ValueError("minute_ts and mid must be 1-D arrays of equal length")
        if len(self.minute_ts) < 2:
            raise ValueError("panel needs at least 2 minutes")
        if np.any(np.diff(self.minute_ts) <= 0):
            raise ValueError("minute timestamps must be strictly increasing")
        if np.any(self.mid <= 0) or not np.all(np.isfinite(self.mid)):
            raise ValueError("mid prices must be positive and finite")
        if self.funding_ts.ndim != 1 or self.funding_ts.shape != self.funding.shape:
            raise ValueError("funding_ts and funding must be 1-D arrays of equal length")
        if len(self.funding_ts) == 0:
            raise ValueError("panel needs at least one funding observation")
        if np.any(np.diff(self.funding_ts) <= 0):
            raise ValueError("funding timestamps must be strictly increasing")
        if self.funding_ts[0] > self.minute_ts[0]:
            raise ValueError("need a funding observation at or before the first minute")
        if not self.allow_gaps:
            worst = float(np.max(np.diff(self.minute_ts))) * 60.0
            if worst > self.max_gap_minutes:
                raise ValueError(
                    f"panel has a {worst:.1f}-minute gap; pass allow_gaps=True to accept"
                )

    @property
    def n_minutes(self):
        return len(self.minute_ts)

    @property
    def span_hours(self):
        return float(self.minute_ts[-1] - self.minute_ts[0])

    def slice_window(self, start_ts, end_ts):
        """Sub-panel covering ``[start_ts, end_ts)``; keeps the latest
        funding observation at or before the window start."""
        m = (self.minute_ts >= start_ts) & (self.minute_ts < end_ts)
        if np.count_nonzero(m) < 2:
            raise ValueError("window contains fewer than 2 minutes")
        first_minute = self.minute_ts[m][0]
        keep = self.funding_ts < end_ts
        f_ts, f_val = self.funding_ts[keep], self.funding[keep]
        before = np.nonzero(f_ts <= first_minute)[0]
        lo = before[-1] if len(before) else 0
        return MarketPanel(
            self.minute_ts[m], self.mid[m], f_ts[lo:], f_val[lo:],
            allow_gaps=self.allow_gaps, max_gap_minutes=self.max_gap_minutes,
        )


@dataclass(frozen=True)
class SimState:
    """Cash, inventory, and elapsed time of one simulation."""

    cash: float
    q: float
    t: float


@dataclass
class PathResult:
    """Per-seed simulation output."""

    equity_path: np.ndarray
    inventory_path: np.ndarray
    n_bid_fills: int
    n_ask_fills: int
    n_quotes: int
    funding_paid: float
    seed: int
    ask_proceeds: float = 0.0
    bid_payments: float = 0.0
    initial_cash: float = 0.0

    @property
    def final_equity(self):
        return float(self.equity_path[-1])

    @property
    def inventory_rms(self):
        return math.sqrt(float(np.mean(self.inventory_path**2)))

    @property
    def max_drawdown(self):
        peak = np.maximum.accumulate(self.equity_path)
        return float(np.max(peak - self.equity_path))


@dataclass(frozen=True)
class MetricsRow:
    """Aggregate paired statistics for one policy against the baseline."""

    mean_final_equity: float
    ci95: float
    delta_vs_baseline: float
    win_rate: float
    inventory_rms: float
    max_drawdown: float
    fill_rate: float

    def as_dict(self):
        return {
            "mean_final_equity": self.mean_final_equity,
            "ci95": self.ci95,
            "delta_vs_baseline": self.delta_vs_baseline,
            "win_rate": self.win_rate,
            "inventory_rms": self.inventory_rms,
            "max_drawdown": self.max_drawdown,
            "fill_rate": self.fill_rate,
        }


def sample_fills(decision, dt, fill, rng):
    """Independent Bernoulli fills for both sides over ``dt`` hours.

    Always consumes exactly two uniforms from ``rng`` (bid draw first), so
    the stream stays aligned across policies regardless of which sides
    are active. Inactive sides never fill.
    """
    if not (dt > 0):
        raise ValueError("dt must be positive")
    u_bid, u_ask = rng.random(2)
    bid_fill = bool(decision.bid_active and u_bid < fill.fill_probability(decision.bid_offset, dt))
    ask_fill = bool(decision.ask_active and u_ask < fill.fill_probability(decision.ask_offset, dt))
    return bid_fill, ask_fill


def apply_funding(state, S, F, dtau=1.0):
    """Hourly funding transfer: cash pays ``q * S * F * dtau``.

    Long inventory pays when funding is positive and receives when it is
    negative; inventory is unchanged.
    """
    if not (dtau > 0):
        raise ValueError("dtau must be positive")
    return SimState(cash=state.cash - state.q * S * F * dtau, q=state.q, t=state.t)


def run_backtest(panel, policy, fill, limits=None, seed=1, *, global_seed=0,
                 initial_cash=0.0, settle_on_next_mid=False):
    """Replay one seeded path of a policy over a market panel.

    Per-minute event order: read state and the latest funding observation,
    quote, sample fills and settle them at ``mid +/- offset``, apply any
    newly crossed hourly funding, record equity. Fills that would breach
    the inventory limits are blocked at quote time.
    """
    if seed < 1:
        raise ValueError("seed must be >= 1")
    q_lo, q_hi = limits if limits is not None else policy.inventory_limits()
    if not (q_lo <= 0 <= q_hi):
        raise ValueError("inventory limits must bracket 0")

    ts = panel.minute_ts
    mid = panel.mid
    n = panel.n_minutes
    span = panel.span_hours
    horizon = policy.horizon

    rng = np.random.default_rng([global_seed, seed])

    equity = np.empty(n)
    inventory = np.empty(n)
    q = 0.0
    ask_proceeds = 0.0
    bid_payments = 0.0
    funding_paid = 0.0
    cash_running = initial_cash  # independent event-order accumulation
    n_bid = n_ask = n_quotes = 0

    # funding observation pointers: f_obs trails the latest observation at
    # or before the minute; f_apply walks the ticks to debit (strictly
    # after the simulation start)
    f_ts, f_val = panel.funding_ts, panel.funding
    f_obs = int(np.searchsorted(f_ts, ts[0], side="right")) - 1
    f_apply = int(np.searchsorted(f_ts, ts[0], side="right"))

    for m in range(n):
        S = mid[m]
        while f_obs + 1 < len(f_ts) and f_ts[f_obs + 1] <= ts[m]:
            f_obs += 1
        F = f_val[f_obs]

        t_table = (ts[m] - ts[0]) / span * horizon
        decision = quote(policy, t_table, q, S, F)
        qs = decision.quote_size
        bid_ok = decision.bid_active and q + qs <= q_hi + 1e-9
        ask_ok = decision.ask_active and q - qs >= q_lo - 1e-9
        if (bid_ok, ask_ok) != (decision.bid_active, decision.ask_active):
            decision = replace(
                decision,
                bid_offset=decision.bid_offset if bid_ok else math.inf,
                ask_offset=decision.ask_offset if ask_ok else math.inf,
                bid_active=bid_ok,
                ask_active=ask_ok,
            )
        n_quotes += int(bid_ok) + int(ask_ok)

        dt_step = (ts[m] - ts[m - 1]) if m > 0 else (ts[1] - ts[0])
        bid_fill, ask_fill = sample_fills(decision, dt_step, fill, rng)

        settle_S = mid[m + 1] if (settle_on_next_mid and m + 1 < n) else S
        if ask_fill:
            proceeds = (settle_S + decision.ask_offset) * qs
            ask_proceeds += proceeds
            cash_running += proceeds
            q -= qs
            n_ask += 1
        if bid_fill:
            payment = (settle_S - decision.bid_offset) * qs
            bid_payments += payment
            cash_running -= payment
            q += qs
            n_bid += 1

        while f_apply < len(f_ts) and f_ts[f_apply] <= ts[m]:
            debit = q * S * f_val[f_apply] * 1.0
            funding_paid += debit
            cash_running -= debit
            f_apply += 1

        cash = initial_cash + ask_proceeds - bid_payments - funding_paid
        equity[m] = cash + q * S
        inventory[m] = q

    final_cash = initial_cash + ask_proceeds - bid_payments - funding_paid
    scale = max(1.0, abs(final_cash), ask_proceeds + bid_payments)
    if abs(cash_running - final_cash) > 1e-9 * scale:
        raise AssertionError("cash conservation identity violated")
    if not (q_lo - 1e-9 <= q <= q_hi + 1e-9):
        raise AssertionError("inventory left its limits")

    return PathResult(
        equity_path=equity,
        inventory_path=inventory,
        n_bid_fills=n_bid,
        n_ask_fills=n_ask,
        n_quotes=n_quotes,
        funding_paid=funding_paid,
        seed=seed,
        ask_proceeds=ask_proceeds,
        bid_payments=bid_payments,
        initial_cash=initial_cash,
    )


def compute_metrics(results, baseline):
    """Aggregate seed-paired statistics against the baseline runs."""
    if len(results) != len(baseline) or any(
        r.seed != b.seed for r, b in zip(results, baseline)
    ):
        raise ValueError("results and baseline must cover the same seeds in order")
    finals = np.array([r.final_equity for r in results])
    base_finals = np.array([b.final_equity for b in baseline])
    n = len(finals)
    sd = float(np.std(finals, ddof=1)) if n > 1 else 0.0
    total_fills = sum(r.n_bid_fills + r.n_ask_fills for r in results)
    total_quotes = sum(r.n_quotes for r in results)
    return MetricsRow(
        mean_final_equity=float(np.mean(finals)),
        ci95=1.96 * sd / math.sqrt(n) if n > 1 else 0.0,
        delta_vs_baseline=float(np.mean(finals - base_finals)),
        win_rate=float(np.mean(finals > base_finals)),
        inventory_rms=float(np.mean([r.inventory_rms for r in results])),
        max_drawdown=float(np.mean([r.max_drawdown for r in results])),
        fill_rate=total_fills / total_quotes if total_quotes else 0.0,
    )


@dataclass(frozen=True)
class StressWindow:
    label: str
    start_ts: float
    end_ts: float
    mean_funding: float
    realized_vol: float


def select_stress_windows(panel, window_days=3.0, stride_hours=1.0):
    """Pick four windows: extreme mean funding (both signs), highest
    realized volatility, and the calmest (min-max-normalized |funding| +
    volatility). Windows may overlap; ties go to the earliest start.
    """
    window_h = window_days * 24.0
    ts = panel.minute_ts
    if panel.span_hours < window_h:
        raise ValueError("panel is shorter than the stress window length")

    starts = []
    s = ts[0]
    while s + window_h <= ts[-1] + 1e-9:
        starts.append(s)
        s += stride_hours

    mean_f = np.empty(len(starts))
    vol = np.empty(len(starts))
    logmid = np.log(panel.mid)
    for i, s in enumerate(starts):
        e = s + window_h
        fm = (panel.funding_ts >= s) & (panel.funding_ts < e)
        mean_f[i] = float(np.mean(panel.funding[fm])) if np.any(fm) else 0.0
        mm = (ts >= s) & (ts < e)
        r = np.diff(logmid[mm])
        vol[i] = float(np.std(r, ddof=1)) if len(r) > 2 else 0.0

    def minmax(x):
        span = np.ptp(x)
        if span == 0:
            return np.zeros_like(x)
        return (x - np.min(x)) / span

    calm_score = minmax(np.abs(mean_f)) + minmax(vol)
    picks = {
        "high_funding": int(np.argmax(mean_f)),
        "low_funding": int(np.argmin(mean_f)),
        "high_vol": int(np.argmax(vol)),
        "calm": int(np.argmin(calm_score)),
    }
    return {
        label: StressWindow(
            label=label,
            start_ts=float(starts[i]),
            end_ts=float(starts[i] + window_h),
            mean_funding=float(mean_f[i]),
            realized_vol=float(vol[i]),
        )
        for label, i in picks.items()
    }
