"""Experiment configuration: one structured JSON file per asset per run.

The config is the single source of truth for a frozen-parameter
experiment (data paths, grid, penalties, fill-curve source, policy list,
seed range, holdout window); CLI flags may override scalar fields.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .data_io import iso_to_hours

__all__ = ["ConfigError", "RunConfig", "load_run_config"]

_POLICY_KINDS = ("pure_as", "pure_as_scaled", "hjb_fd", "risk_calibrated")


class ConfigError(ValueError):
    """Config schema violation; message carries the offending field."""


def _require(obj, key, kind, where):
    if key not in obj:
        raise ConfigError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def _optional_number(obj, key, where, default=None):
    if key not in obj or obj[key] is None:
        return default
    value = obj[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}.{key}: expected a number or null, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    asset: str
    mid_csv: Path
    funding_csv: Path
    tape_csv: Path | None
    holdout_start: float | None  # hours since epoch
    holdout_end: float | None
    horizon_hours: float | None  # None -> holdout span
    n_time: int
    q_min: float
    q_max: float
    dq: float
    n_f: int
    f_min: float | None
    f_max: float | None
    alpha: float
    phi: float
    funding_fit: bool
    funding_params: dict | None  # fractional kappa/theta/sigma when not fitting
    ref_price: float | None
    fill_file: Path | None
    fill_mode: str
    fill_quote_size: float
    fill_delta_min: float
    fill_thresholds: list | None
    policies: list = field(default_factory=list)
    seed_start: int = 1
    seed_end: int = 10
    stress_seeds: int = 10
    stress_window_days: float = 3.0
    output_dir: Path = Path("out")
    initial_cash: float = 0.0
    settle_on_next_mid: bool = False
    allow_gaps: bool = False
    max_gap_minutes: float = 10.0
    train_frac: float = 0.8

    @property
    def seeds(self):
        return range(self.seed_start, self.seed_end + 1)


def load_run_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    base = path.parent

    def resolve(p):
        return (base / p).resolve() if p is not None else None

    asset = _require(raw, "asset", str, "config")
    data = _require(raw, "data", dict, "config")
    mid_csv = resolve(_require(data, "mid_csv", str, "data"))
    funding_csv = resolve(_require(data, "funding_csv", str, "data"))
    tape_csv = resolve(data.get("tape_csv"))

    holdout = raw.get("holdout")
    holdout_start = holdout_end = None
    if holdout is not None:
        if not isinstance(holdout, dict):
            raise ConfigError("config.holdout: expected an object with start/end")
        try:
            holdout_start = iso_to_hours(_require(holdout, "start", str, "holdout"))
            holdout_end = iso_to_hours(_require(holdout, "end", str, "holdout"))
        except ValueError as exc:
            raise ConfigError(f"config.holdout: {exc}") from None
        if holdout_start >= holdout_end:
            raise ConfigError("config.holdout: start must precede end")

    grid = _require(raw, "grid", dict, "config")
    n_time = _require(grid, "n_time", int, "grid")
    if n_time < 1:
        raise ConfigError("grid.n_time must be >= 1")
    q_min = _require(grid, "q_min", float, "grid")
    q_max = _require(grid, "q_max", float, "grid")
    dq = _optional_number(grid, "dq", "grid", 1.0)
    n_f = grid.get("n_f", 61)
    if not isinstance(n_f, int) or (n_f != 1 and n_f < 3):
        raise ConfigError("grid.n_f must be 1 (collapsed) or an integer >= 3")
    steps = (q_max - q_min) / dq
    if abs(steps - round(steps)) > 1e-9 or round(steps) < 2 or not (q_min <= 0 <= q_max):
        raise ConfigError("grid: inventory range must contain 0 and be a multiple of dq")

    penalties = _require(raw, "penalties", dict, "config")
    alpha = _require(penalties, "alpha", float, "penalties")
    phi = _require(penalties, "phi", float, "penalties")
    if alpha < 0 or phi < 0:
        raise ConfigError("penalties must be nonnegative")

    fm = raw.get("funding_model", {"fit": True})
    if not isinstance(fm, dict):
        raise ConfigError("config.funding_model: expected an object")
    funding_fit = bool(fm.get("fit", "kappa" not in fm))
    funding_params = None
    if not funding_fit:
        funding_params = {
            "kappa": _require(fm, "kappa", float, "funding_model"),
            "theta": _require(fm, "theta", float, "funding_model"),
            "sigma": _require(fm, "sigma", float, "funding_model"),
        }
        if funding_params["kappa"] <= 0 or funding_params["sigma"] < 0:
            raise ConfigError("funding_model: kappa must be > 0 and sigma >= 0")

    fill = _require(raw, "fill", dict, "config")
    fill_file = resolve(fill.get("file"))
    fill_mode = fill.get("mode", "volume_minute")
    if fill_mode not in ("volume_minute", "minute_hit"):
        raise ConfigError("fill.mode must be volume_minute or minute_hit")
    fill_quote_size = _optional_number(fill, "quote_size", "fill", 1.0)
    fill_delta_min = _optional_number(fill, "delta_min", "fill", 0.0)
    thresholds = fill.get("thresholds")
    if thresholds is not None:
        if not isinstance(thresholds, list) or any(
            not isinstance(x, (int, float)) for x in thresholds
        ):
            raise ConfigError("fill.thresholds must be a list of numbers")
        if sorted(thresholds) != thresholds or len(thresholds) < 2:
            raise ConfigError("fill.thresholds must be >= 2 ascending numbers")

    policies = _require(raw, "policies", list, "config")
    if not policies:
        raise ConfigError("config.policies must not be empty")
    for i, p in enumerate(policies):
        if not isinstance(p, dict) or "kind" not in p:
            raise ConfigError(f"policies[{i}]: expected an object with a 'kind'")
        if p["kind"] not in _POLICY_KINDS:
            raise ConfigError(f"policies[{i}].kind: unknown kind {p['kind']!r}")
        if p["kind"] == "pure_as_scaled" and not p.get("scale", 1.0) > 0:
            raise ConfigError(f"policies[{i}].scale must be positive")

    seeds = raw.get("seeds", {"start": 1, "end": 10})
    seed_start = _require(seeds, "start", int, "seeds")
    seed_end = _require(seeds, "end", int, "seeds")
    if seed_start < 1 or seed_end < seed_start:
        raise ConfigError("seeds: need 1 <= start <= end (contiguous range)")

    sim = raw.get("sim", {})
    if not isinstance(sim, dict):
        raise ConfigError("config.sim: expected an object")

    out = RunConfig(
        asset=asset,
        mid_csv=mid_csv,
        funding_csv=funding_csv,
        tape_csv=tape_csv,
        holdout_start=holdout_start,
        holdout_end=holdout_end,
        horizon_hours=_optional_number(grid, "horizon_hours", "grid"),
        n_time=n_time,
        q_min=q_min,
        q_max=q_max,
        dq=dq,
        n_f=n_f,
        f_min=_optional_number(grid, "f_min", "grid"),
        f_max=_optional_number(grid, "f_max", "grid"),
        alpha=alpha,
        phi=phi,
        funding_fit=funding_fit,
        funding_params=funding_params,
        ref_price=_optional_number(fm, "ref_price", "funding_model"),
        fill_file=fill_file,
        fill_mode=fill_mode,
        fill_quote_size=fill_quote_size,
        fill_delta_min=fill_delta_min,
        fill_thresholds=thresholds,
        policies=policies,
        seed_start=seed_start,
        seed_end=seed_end,
        stress_seeds=int(raw.get("stress_seeds", 10)),
        stress_window_days=float(raw.get("stress_window_days", 3.0)),
        output_dir=resolve(raw.get("output_dir", "out")),
        initial_cash=_optional_number(sim, "initial_cash", "sim", 0.0),
        settle_on_next_mid=bool(sim.get("settle_on_next_mid", False)),
        allow_gaps=bool(sim.get("allow_gaps", False)),
        max_gap_minutes=_optional_number(sim, "max_gap_minutes", "sim", 10.0),
        train_frac=float(raw.get("train_frac", 0.8)),
    )
    if not math.isfinite(out.alpha + out.phi):
        raise ConfigError("penalties must be finite")
    return out
