"""Inventory-funding dynamic-programming solver and quote recovery.

Solves the reduced continuation value ``theta(t, q, f)`` backward in time
on a tensor grid with an explicit monotone scheme: the funding diffusion
is discretized as an upwind birth-death chain with nonnegative rates, the
quote controls enter through closed-form exponential-intensity
Hamiltonians, and a CFL bound on the time step guarantees monotonicity.
Bid/ask offsets are recovered from neighboring-inventory value
differences, ``delta = 1/k - dtheta``, floored at the quote floor.

Conventions: a bid fill moves inventory up by one grid step ``dq``, an
ask fill moves it down; value differences are per quote unit. At the
inventory bounds the breaching side is removed from the update and
reported as blocked by the lookup.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fills import FillCurve
from .funding import OUParams

__all__ = [
    "GridSpec",
    "HJBParams",
    "BirthDeathRates",
    "HJBTable",
    "CFLViolationError",
    "build_rates",
    "cfl_max_dt",
    "optimal_offset",
    "hamiltonian",
    "backward_step",
    "solve",
    "quote_lookup",
    "QuoteOffsets",
    "default_f_bounds",
    "save_table",
    "load_table",
]

_MAGIC = b"PERPMM-HJB-v1\n"


class CFLViolationError(ValueError):
    """Time step too large for a monotone explicit update.

    ``max_dt`` carries the largest admissible step in hours.
    """

    def __init__(self, dt, max_dt):
        super().__init__(
            f"time step {dt:.9g} h violates the monotonicity bound; "
            f"max admissible dt is {max_dt:.9g} h"
        )
        self.dt = dt
        self.max_dt = max_dt


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over (time, inventory, funding).

    Inventory nodes are ``q_min + j*dq`` and must include 0; funding nodes
    are uniform on ``[f_min, f_max]`` in cash units (quote currency per
    contract per hour). A collapsed funding dimension (``n_f == 1`` with
    ``f_min == f_max``) expresses the funding-unaware limit.
    """

    horizon_T: float
    n_time: int
    q_min: float
    q_max: float
    dq: float
    f_min: float
    f_max: float
    n_f: int

    def __post_init__(self):
        if not (self.horizon_T > 0):
            raise ValueError("horizon_T must be positive")
        if self.n_time < 1:
            raise ValueError("n_time must be at least 1")
        if not (self.dq > 0):
            raise ValueError("dq must be positive")
        steps = (self.q_max - self.q_min) / self.dq
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 2:
            raise ValueError("(q_max - q_min)/dq must be an integer >= 2")
        zero_pos = -self.q_min / self.dq
        if abs(zero_pos - round(zero_pos)) > 1e-9 or not (self.q_min <= 0 <= self.q_max):
            raise ValueError("the inventory grid must contain 0")
        if self.n_f == 1:
            if self.f_min != self.f_max:
                raise ValueError("a single funding node requires f_min == f_max")
        else:
            if self.n_f < 3:
                raise ValueError("n_f must be 1 (collapsed) or >= 3")
            if not (self.f_min < self.f_max):
                raise ValueError("f_min must be below f_max")

    @property
    def n_q(self):
        return int(round((self.q_max - self.q_min) / self.dq)) + 1

    @property
    def dt(self):
        return self.horizon_T / self.n_time

    @property
    def df(self):
        if self.n_f == 1:
            return 0.0
        return (self.f_max - self.f_min) / (self.n_f - 1)

    @property
    def q_axis(self):
        # integer multiples of dq so symmetric grids carry exact negations
        j0 = int(round(-self.q_min / self.dq))
        return (np.arange(self.n_q) - j0) * self.dq

    @property
    def f_axis(self):
        if self.n_f == 1:
            return np.array([self.f_min])
        center = 0.5 * (self.f_min + self.f_max)
        offsets = np.arange(self.n_f) - (self.n_f - 1) / 2.0
        return center + offsets * self.df

    @property
    def t_axis(self):
        return np.arange(self.n_time + 1) * self.dt


@dataclass(frozen=True)
class HJBParams:
    """Model inputs for a solve: cash-scaled funding dynamics, fill curve,
    terminal inventory penalty ``alpha`` and running penalty ``phi``."""

    ou_cash: OUParams
    fill: FillCurve
    alpha: float
    phi: float

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be finite and >= 0")
        if not (self.phi >= 0 and math.isfinite(self.phi)):
            raise ValueError("phi must be finite and >= 0")


@dataclass(frozen=True)
class BirthDeathRates:
    """Nonnegative up/down transition rates per funding node (1/hour)."""

    r_up: np.ndarray
    r_down: np.ndarray

    def __post_init__(self):
        if np.any(self.r_up < 0) or np.any(self.r_down < 0):
            raise ValueError("birth-death rates must be nonnegative")


@dataclass
class HJBTable:
    """Solved continuation values ``theta[t_i, q_j, f_l]`` plus the grid
    and parameters that produced them."""

    theta: np.ndarray
    grid: GridSpec
    params: HJBParams


def default_f_bounds(ou_cash, n_sd=5.0):
    """Funding-grid truncation at ``n_sd`` stationary standard deviations."""
    sd = ou_cash.stationary_std
    return ou_cash.theta - n_sd * sd, ou_cash.theta + n_sd * sd


def build_rates(grid, ou_cash):
    """Upwind birth-death rates approximating the funding diffusion.

    Interior: ``r_up = sigma^2/(2 df^2) + max(b, 0)/df`` and
    ``r_down = sigma^2/(2 df^2) + max(-b, 0)/df`` with drift
    ``b(f) = kappa (fbar - f)``; transitions that would leave the
    truncated domain are suppressed.
    """
    if grid.n_f == 1:
        zero = np.zeros(1)
        return BirthDeathRates(zero, zero.copy())
    f = grid.f_axis
    df = grid.df
    b = ou_cash.kappa * (ou_cash.theta - f)
    diff = ou_cash.sigma**2 / (2.0 * df * df)
    r_up = diff + np.maximum(b, 0.0) / df
    r_down = diff + np.maximum(-b, 0.0) / df
    r_up[-1] = 0.0
    r_down[0] = 0.0
    return BirthDeathRates(r_up, r_down)


def cfl_max_dt(rates, fill):
    """Largest time step keeping the explicit update monotone.

    ``1 / (max(r_up + r_down) + 2 lambda0 e^{-k delta_min})``; at most two
    quote sides are active, hence the factor 2. Returns ``inf`` when both
    the chain and the fill intensity vanish.
    """
    denom = float(np.max(rates.r_up + rates.r_down)) + 2.0 * fill.max_intensity
    if denom == 0.0:
        return math.inf
    return 1.0 / denom


def optimal_offset(value_diff, fill):
    """Floored first-order-condition offset ``max(delta_min, 1/k - value_diff)``."""
    out = np.maximum(fill.delta_min, 1.0 / fill.k - np.asarray(value_diff, dtype=float))
    if out.ndim == 0:
        return float(out)
    return out


def hamiltonian(value_diff, fill):
    """Optimized one-side fill reward ``lambda(delta*) (delta* + value_diff)``.

    Nonnegative whenever the floored offset keeps ``delta* + value_diff``
    nonnegative, and dominates the reward of any admissible offset.
    """
    vd = np.asarray(value_diff, dtype=float)
    delta = np.maximum(fill.delta_min, 1.0 / fill.k - vd)
    out = fill.lambda0 * np.exp(-fill.k * delta) * (delta + vd)
    if out.ndim == 0:
        return float(out)
    return out


def backward_step(theta_next, grid, params, rates, dt):
    """One explicit backward update of a ``(n_q, n_f)`` value slice.

    Inventory-boundary rows have the breaching side's Hamiltonian
    omitted. Monotone in ``theta_next`` whenever ``dt`` satisfies
    :func:`cfl_max_dt`.
    """
    th = theta_next
    q = grid.q_axis
    f = grid.f_axis
    fill = params.fill

    gen = np.zeros_like(th)
    if grid.n_f > 1:
        gen[:, :-1] += rates.r_up[:-1] * (th[:, 1:] - th[:, :-1])
        gen[:, 1:] += rates.r_down[1:] * (th[:, :-1] - th[:, 1:])

    rhs = gen + (-(q[:, None] * f[None, :]) - params.phi * (q * q)[:, None])

    ask_gain = np.zeros_like(th)
    ask_gain[1:, :] = hamiltonian(th[:-1, :] - th[1:, :], fill)
    bid_gain = np.zeros_like(th)
    bid_gain[:-1, :] = hamiltonian(th[1:, :] - th[:-1, :], fill)
    rhs += ask_gain
    rhs += bid_gain
    return th + dt * rhs


def solve(grid, params):
    """Full backward sweep; returns the (n_time+1, n_q, n_f) value tensor.

    Refuses grids whose time step violates the monotonicity bound and
    aborts on the first non-finite node.
    """
    rates = build_rates(grid, params.ou_cash)
    max_dt = cfl_max_dt(rates, params.fill)
    dt = grid.dt
    if dt > max_dt * (1.0 + 1e-12):
        raise CFLViolationError(dt, max_dt)

    q = grid.q_axis
    theta = np.empty((grid.n_time + 1, grid.n_q, grid.n_f))
    theta[-1] = np.broadcast_to((-params.alpha * (q * q))[:, None], (grid.n_q, grid.n_f))
    for i in range(grid.n_time - 1, -1, -1):
        theta[i] = backward_step(theta[i + 1], grid, params, rates, dt)
        if not np.all(np.isfinite(theta[i])):
            j, l = np.argwhere(~np.isfinite(theta[i]))[0]
            raise RuntimeError(
                f"non-finite value at time index {i}, inventory index {j}, funding index {l}"
            )
    return HJBTable(theta=theta, grid=grid, params=params)


class QuoteOffsets(NamedTuple):
    bid_offset: float
    ask_offset: float
    bid_blocked: bool
    ask_blocked: bool


def _interp_weights(x, axis_start, step, n):
    """Clamped linear interpolation index/weight along a uniform axis."""
    if n == 1:
        return 0, 0, 0.0
    pos = (x - axis_start) / step
    pos = min(max(pos, 0.0), n - 1.0)
    i0 = min(int(pos), n - 2)
    return i0, i0 + 1, pos - i0


def quote_lookup(table, t, q, f_cash):
    """Recover bid/ask offsets at state ``(t, q, f_cash)``.

    ``q`` must be an inventory grid node; ``theta`` is interpolated
    bilinearly in time and funding (funding clamped into its grid range).
    At ``q_max`` the bid side is blocked, at ``q_min`` the ask side; a
    blocked side reports an infinite offset plus its flag, and the
    simulator gives it zero fill probability.
    """
    grid = table.grid
    j_pos = (q - grid.q_min) / grid.dq
    j = int(round(j_pos))
    if abs(j_pos - j) > 1e-6 or not (0 <= j < grid.n_q):
        raise ValueError(f"inventory {q} is not on the grid")

    t = min(max(t, 0.0), grid.horizon_T)
    i0, i1, wt = _interp_weights(t, 0.0, grid.dt, grid.n_time + 1)
    f_axis = grid.f_axis
    l0, l1, wf = _interp_weights(f_cash, f_axis[0], grid.df, grid.n_f)

    def value(jj):
        block = table.theta[:, jj, :]
        v0 = block[i0, l0] * (1 - wf) + block[i0, l1] * wf
        v1 = block[i1, l0] * (1 - wf) + block[i1, l1] * wf
        return v0 * (1 - wt) + v1 * wt

    here = value(j)
    ask_blocked = j == 0
    bid_blocked = j == grid.n_q - 1
    fill = table.params.fill
    ask_offset = math.inf if ask_blocked else float(optimal_offset(value(j - 1) - here, fill))
    bid_offset = math.inf if bid_blocked else float(optimal_offset(value(j + 1) - here, fill))
    return QuoteOffsets(bid_offset, ask_offset, bid_blocked, ask_blocked)


# ---------------------------------------------------------------------------
# serialization: deterministic binary with embedded grid header and checksum
# ---------------------------------------------------------------------------


def _header_dict(table):
    g, p = table.grid, table.params
    return {
        "grid": {
            "horizon_T": g.horizon_T,
            "n_time": g.n_time,
            "q_min": g.q_min,
            "q_max": g.q_max,
            "dq": g.dq,
            "f_min": g.f_min,
            "f_max": g.f_max,
            "n_f": g.n_f,
        },
        "ou_cash": {"kappa": p.ou_cash.kappa, "theta": p.ou_cash.theta, "sigma": p.ou_cash.sigma},
        "fill": {"lambda0": p.fill.lambda0, "k": p.fill.k, "delta_min": p.fill.delta_min},
        "alpha": p.alpha,
        "phi": p.phi,
    }


def save_table(table, path):
    """Write a table to a deterministic binary file; returns the checksum."""
    raw = np.ascontiguousarray(table.theta, dtype="<f8").tobytes()
    checksum = hashlib.sha256(raw).hexdigest()
    header = _header_dict(table)
    header["shape"] = list(table.theta.shape)
    header["dtype"] = "<f8"
    header["checksum"] = checksum
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(raw)
    return checksum


def load_table(path):
    """Read a table written by :func:`save_table`, verifying its checksum."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a solver table file")
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    if hashlib.sha256(raw).hexdigest() != header["checksum"]:
        raise ValueError(f"{path}: checksum mismatch, file is corrupt")
    grid = GridSpec(**header["grid"])
    params = HJBParams(
        ou_cash=OUParams(**header["ou_cash"]),
        fill=FillCurve(**header["fill"]),
        alpha=header["alpha"],
        phi=header["phi"],
    )
    # frombuffer keeps the array read-only: loaded tables are immutable and
    # safe to share across concurrent backtest workers
    theta = np.frombuffer(raw, dtype=header["dtype"]).reshape(header["shape"])
    return HJBTable(theta=theta, grid=grid, params=params)
