"""Command-line front door.

Subcommands: ``calibrate`` (funding + fill reports), ``solve`` (write a
value table), ``backtest`` (per-seed CSV + aggregate JSON, paired against
the funding-unaware baseline), ``stress`` (four extreme sub-windows),
``synth`` (synthetic dataset factory), ``verify`` (validate config and
data without computing).

Exit codes: 0 success, 1 runtime failure, 2 input/validation failure.
All report outputs are deterministic; wall-clock timing goes only to
``.log`` files.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data_io, synth
from .config import ConfigError, load_run_config
from .data_io import DataValidationError
from .fills import FillCurve, bucket_hits, default_thresholds, fill_report, fit_fill_curve
from .funding import (
    OUParams,
    JumpParams,
    calibration_report,
    cash_scale,
    fit_ou,
    innovation_price_correlation,
)
from .hjb import (
    CFLViolationError,
    GridSpec,
    HJBParams,
    build_rates,
    cfl_max_dt,
    default_f_bounds,
    load_table,
    quote_lookup,
    save_table,
    solve,
)
from .policies import PolicyConfig, build_as_table
from .simulator import compute_metrics, run_backtest, select_stress_windows

__all__ = ["main", "verify_as_limit"]


# ---------------------------------------------------------------------------
# shared build steps
# ---------------------------------------------------------------------------


def _load_panel(cfg):
    panel = data_io.load_panel(
        cfg.mid_csv, cfg.funding_csv,
        allow_gaps=cfg.allow_gaps, max_gap_minutes=cfg.max_gap_minutes,
    )
    if cfg.holdout_start is not None:
        lo, hi = cfg.holdout_start, cfg.holdout_end
        if lo < panel.minute_ts[0] - 1e-9 or hi > panel.minute_ts[-1] + 1.0 / 60 + 1e-9:
            raise ConfigError("config.holdout: window is outside panel coverage")
        panel = panel.slice_window(lo, hi)
    return panel


def _fill_curve(cfg, mid_for_thresholds=None):
    if cfg.fill_file is not None:
        spec = _read_fill_file(cfg.fill_file)
        return spec, None
    if cfg.tape_csv is None:
        raise ConfigError("config.fill: need either fill.file or data.tape_csv")
    tape_ts, dist, vol = data_io.load_tape_csv(cfg.tape_csv)
    if cfg.fill_thresholds is not None:
        thresholds = np.asarray(cfg.fill_thresholds, dtype=float)
    else:
        ref = float(np.median(mid_for_thresholds)) if mid_for_thresholds is not None else 100.0
        thresholds = default_thresholds(ref)
    minute_ids = np.floor(tape_ts * 60.0 + 1e-9).astype(np.int64)
    # the tape only carries crossing minutes; the hit-rate denominator is
    # the tape's full minute span
    n_minutes = int(minute_ids.max() - minute_ids.min()) + 1
    panel = bucket_hits(minute_ids, dist, vol, thresholds, cfg.fill_mode,
                        cfg.fill_quote_size, n_minutes=n_minutes)
    curve = fit_fill_curve(panel, delta_min=cfg.fill_delta_min)
    return curve, panel


def _read_fill_file(path):
    import json

    try:
        raw = json.loads(Path(path).read_text())
        return FillCurve(
            lambda0=float(raw["lambda0_per_hour"]),
            k=float(raw["k_per_quote_unit"]),
            delta_min=float(raw["delta_min"]),
        )
    except FileNotFoundError:
        raise ConfigError(f"fill file not found: {path}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: bad fill file ({exc})") from None


def _funding_fractional(cfg):
    """Fractional-series OU parameters: fitted on pre-holdout data when
    available, or taken verbatim from the config."""
    if not cfg.funding_fit:
        p = cfg.funding_params
        return OUParams(p["kappa"], p["theta"], p["sigma"])
    series = data_io.load_funding_csv(cfg.funding_csv)
    if cfg.holdout_start is not None:
        n_train = int(np.searchsorted(series.timestamps, cfg.holdout_start, side="left"))
        if n_train >= 10:
            series = series.slice(0, n_train)
    return fit_ou(series)


def _cash_model(cfg, frac, panel):
    ref = cfg.ref_price if cfg.ref_price is not None else float(np.median(panel.mid))
    return OUParams(frac.kappa, cash_scale(frac.theta, ref), frac.sigma * ref), ref


def _grid(cfg, panel, ou_cash):
    horizon = cfg.horizon_hours if cfg.horizon_hours is not None else panel.span_hours
    if cfg.n_f == 1:
        f_lo = f_hi = 0.0
    elif cfg.f_min is not None and cfg.f_max is not None:
        f_lo, f_hi = cfg.f_min, cfg.f_max
    else:
        if ou_cash.kappa <= 0 or ou_cash.sigma <= 0:
            raise ConfigError("grid: f_min/f_max required when the funding model is degenerate")
        f_lo, f_hi = default_f_bounds(ou_cash)
    return GridSpec(horizon, cfg.n_time, cfg.q_min, cfg.q_max, cfg.dq, f_lo, f_hi, cfg.n_f)


def _tables(cfg, grid, params, log):
    table_path = cfg.output_dir / f"{cfg.asset}_hjb.table"
    table = None
    if table_path.exists():
        cached = load_table(table_path)
        if cached.grid == grid and cached.params == params:
            table = cached
            log.append(f"loaded table {table_path}")
    if table is None:
        t0 = time.perf_counter()
        table = solve(grid, params)
        log.append(f"solved full table in {time.perf_counter() - t0:.3f}s")
    t0 = time.perf_counter()
    as_table = build_as_table(grid, params)
    log.append(f"solved collapsed baseline table in {time.perf_counter() - t0:.3f}s")
    return table, as_table


def _policies(cfg, table, as_table, fill):
    out = []
    for spec in cfg.policies:
        kind = spec["kind"]
        label = spec.get("label", kind)
        if kind == "pure_as":
            out.append(PolicyConfig(kind=kind, table=as_table, label=label))
        elif kind == "pure_as_scaled":
            out.append(PolicyConfig(kind=kind, table=as_table,
                                    scale=float(spec.get("scale", 1.0)), label=label))
        elif kind == "hjb_fd":
            out.append(PolicyConfig(kind=kind, table=table, label=label))
        else:
            out.append(PolicyConfig(
                kind=kind, fill=fill,
                beta_q=float(spec.get("beta_q", 0.0)),
                beta_f=float(spec.get("beta_f", 0.0)),
                quote_size=cfg.dq, q_min=cfg.q_min, q_max=cfg.q_max, label=label,
            ))
    return out


def _run_one(args):
    panel, policy, fill, seed, kwargs = args
    return run_backtest(panel, policy, fill, seed=seed, **kwargs)


def _run_seeds(panel, policy, fill, seeds, workers=1, **kwargs):
    if workers <= 1:
        return [run_backtest(panel, policy, fill, seed=s, **kwargs) for s in seeds]
    tasks = [(panel, policy, fill, s, kwargs) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, tasks))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_calibrate(args):
    cfg = load_run_config(args.config)
    if args.mode:
        cfg.fill_mode = args.mode
    outdir = Path(args.out) if args.out else cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)

    series = data_io.load_funding_csv(cfg.funding_csv)
    report = calibration_report(series, train_frac=cfg.train_frac)
    report["asset"] = cfg.asset
    minute_ts, mid = data_io.load_mid_csv(cfg.mid_csv)
    rho = innovation_price_correlation(series, minute_ts, mid)
    report["funding_price_rho"] = None if math.isnan(rho) else rho
    funding_path = outdir / f"{cfg.asset}_funding.json"
    data_io.write_json(funding_path, report)
    print(f"wrote {funding_path}")

    if cfg.tape_csv is not None:
        curve, panel = _fill_curve(cfg, mid_for_thresholds=mid)
        rep = fill_report(panel, curve)
        rep["asset"] = cfg.asset
        fill_path = outdir / f"{cfg.asset}_fill_{cfg.fill_mode}.json"
        data_io.write_json(fill_path, rep)
        print(f"wrote {fill_path}")
    return 0


def verify_as_limit(fill, core_half_width=5, tol=1e-8):
    """Check the funding-collapsed no-penalty limit: recovered offsets must
    equal 1/k wherever the inventory bounds cannot influence the solve.

    Uses a short probe horizon and an inventory grid padded beyond the
    reach of the fill process so bound effects stay below ``tol``.
    Returns the max relative deviation over the probed core.
    """
    lam = fill.max_intensity
    if lam <= 0:
        return 0.0
    T = min(30.0 / lam, 24.0)
    lam_T = lam * T
    pad = int(math.ceil(lam_T + 12.0 * math.sqrt(max(lam_T, 1.0)) + 20))
    half = pad + core_half_width
    bound = 1.0 / (2.0 * lam)
    n_time = max(8, int(math.ceil(T / (0.9 * bound))))
    grid = GridSpec(T, n_time, -float(half), float(half), 1.0, 0.0, 0.0, 1)
    params = HJBParams(OUParams(0.0, 0.0, 0.0), fill, alpha=0.0, phi=0.0)
    table = solve(grid, params)
    target = 1.0 / fill.k
    worst = 0.0
    for t in np.linspace(0.0, T, 9):
        for q in range(-core_half_width, core_half_width + 1):
            res = quote_lookup(table, float(t), float(q), 0.0)
            worst = max(worst, abs(res.bid_offset - target) / target,
                        abs(res.ask_offset - target) / target)
    if worst > tol:
        raise RuntimeError(
            f"classical-limit check failed: max offset deviation {worst:.3e} > {tol:.1e}"
        )
    return worst


def cmd_solve(args):
    cfg = load_run_config(args.config)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_panel(cfg)
    fill, _ = _fill_curve(cfg, mid_for_thresholds=panel.mid)
    frac = _funding_fractional(cfg)
    ou_cash, ref = _cash_model(cfg, frac, panel)
    grid = _grid(cfg, panel, ou_cash)
    params = HJBParams(ou_cash, fill, cfg.alpha, cfg.phi)

    rates = build_rates(grid, ou_cash)
    bound = cfl_max_dt(rates, fill)
    if grid.dt > bound * (1.0 + 1e-12):
        print(
            f"error: grid violates the monotonicity bound: dt={grid.dt:.9g} h, "
            f"max admissible dt={bound:.9g} h (need n_time >= "
            f"{int(math.ceil(grid.horizon_T / bound))})",
            file=sys.stderr,
        )
        return 2

    log = [f"asset={cfg.asset}", f"grid={grid}", f"ref_price={ref}",
           f"cfl_bound_hours={bound!r}", f"dt_hours={grid.dt!r}"]
    t0 = time.perf_counter()
    table = solve(grid, params)
    log.append(f"solve_seconds={time.perf_counter() - t0:.3f}")

    table_path = Path(args.out) if args.out else cfg.output_dir / f"{cfg.asset}_hjb.table"
    checksum = save_table(table, table_path)
    log.append(f"table={table_path} sha256={checksum}")
    (cfg.output_dir / f"{cfg.asset}_solve.log").write_text("\n".join(log) + "\n")
    print(f"wrote {table_path} (sha256 {checksum[:12]}...)")

    if args.verify_as_limit:
        worst = verify_as_limit(fill)
        print(f"classical-limit check passed: max offset deviation {worst:.3e}")
    return 0


def _aggregate(cfg, panel, policies, fill, seeds, workers, global_seed=0):
    by_label = {}
    for policy in policies:
        by_label[policy.label] = _run_seeds(
            panel, policy, fill, seeds, workers=workers,
            global_seed=global_seed,
            initial_cash=cfg.initial_cash,
            settle_on_next_mid=cfg.settle_on_next_mid,
        )
    baseline_label = next(p.label for p in policies if p.kind == "pure_as")
    baseline = by_label[baseline_label]
    metrics = {
        label: compute_metrics(results, baseline).as_dict()
        for label, results in by_label.items()
    }
    return by_label, metrics, baseline_label


def cmd_backtest(args):
    cfg = load_run_config(args.config)
    if not any(p["kind"] == "pure_as" for p in cfg.policies):
        raise ConfigError("config.policies: pairing requires a pure_as baseline policy")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    panel = _load_panel(cfg)
    fill, _ = _fill_curve(cfg, mid_for_thresholds=panel.mid)
    frac = _funding_fractional(cfg)
    ou_cash, _ = _cash_model(cfg, frac, panel)
    grid = _grid(cfg, panel, ou_cash)
    params = HJBParams(ou_cash, fill, cfg.alpha, cfg.phi)
    log = []
    table, as_table = _tables(cfg, grid, params, log)
    policies = _policies(cfg, table, as_table, fill)

    seeds = list(cfg.seeds)
    by_label, metrics, baseline_label = _aggregate(
        cfg, panel, policies, fill, seeds, args.workers
    )

    rows = []
    for policy in policies:
        for r in by_label[policy.label]:
            rows.append([
                r.seed, policy.label, r.final_equity, r.inventory_rms,
                r.max_drawdown, r.n_bid_fills + r.n_ask_fills, r.funding_paid,
            ])
    per_seed_path = cfg.output_dir / f"{cfg.asset}_per_seed.csv"
    data_io.write_per_seed_csv(per_seed_path, rows)

    aggregate = {
        "asset": cfg.asset,
        "baseline": baseline_label,
        "fill_mode": cfg.fill_mode,
        "seeds": {"start": cfg.seed_start, "end": cfg.seed_end},
        "policies": metrics,
    }
    agg_path = cfg.output_dir / f"{cfg.asset}_aggregate.json"
    data_io.write_json(agg_path, aggregate)
    (cfg.output_dir / f"{cfg.asset}_backtest.log").write_text("\n".join(log) + "\n")
    print(f"wrote {per_seed_path}")
    print(f"wrote {agg_path}")

    if args.stress:
        return _stress(cfg, panel, policies, fill, args.workers)
    return 0


def _stress(cfg, panel, policies, fill, workers):
    windows = select_stress_windows(panel, window_days=cfg.stress_window_days)
    seeds = list(range(1, cfg.stress_seeds + 1))
    report = {"asset": cfg.asset, "seeds": cfg.stress_seeds, "windows": {}}
    for label, window in windows.items():
        sub = panel.slice_window(window.start_ts, window.end_ts)
        by_label, metrics, baseline_label = _aggregate(cfg, sub, policies, fill, seeds, workers)
        base_rms = metrics[baseline_label]["inventory_rms"]
        report["windows"][label] = {
            "start": data_io.hours_to_iso(window.start_ts),
            "end": data_io.hours_to_iso(window.end_ts),
            "mean_funding": window.mean_funding,
            "realized_vol": window.realized_vol,
            "policies": {
                plabel: {
                    "delta_vs_baseline": m["delta_vs_baseline"],
                    "win_rate": m["win_rate"],
                    "inventory_rms_ratio": (
                        m["inventory_rms"] / base_rms if base_rms > 0 else None
                    ),
                }
                for plabel, m in metrics.items()
            },
        }
    path = cfg.output_dir / f"{cfg.asset}_stress.json"
    data_io.write_json(path, report)
    print(f"wrote {path}")
    return 0


def cmd_stress(args):
    cfg = load_run_config(args.config)
    if not any(p["kind"] == "pure_as" for p in cfg.policies):
        raise ConfigError("config.policies: pairing requires a pure_as baseline policy")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_panel(cfg)
    fill, _ = _fill_curve(cfg, mid_for_thresholds=panel.mid)
    frac = _funding_fractional(cfg)
    ou_cash, _ = _cash_model(cfg, frac, panel)
    grid = _grid(cfg, panel, ou_cash)
    params = HJBParams(ou_cash, fill, cfg.alpha, cfg.phi)
    table, as_table = _tables(cfg, grid, params, [])
    policies = _policies(cfg, table, as_table, fill)
    return _stress(cfg, panel, policies, fill, args.workers)


def cmd_synth(args):
    jumps = None
    if args.jump_lambda > 0:
        jumps = JumpParams(args.jump_lambda, args.jump_mu, args.jump_sigma)
    spec = synth.SyntheticSpec(
        days=args.days,
        s0=args.s0,
        price_vol=args.price_vol,
        funding=OUParams(args.kappa, args.theta, args.sigma),
        fill=FillCurve(args.lambda0, args.k, args.delta_min),
        jumps=jumps,
        quote_size=args.quote_size,
        seed=args.seed,
        start_hours=data_io.iso_to_hours(args.start),
    )
    minute_ts, mid, funding_ts, funding, tape, truth = synth.generate(spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    data_io.write_mid_csv(outdir / "mids.csv", minute_ts, mid)
    data_io.write_funding_csv(outdir / "funding.csv", funding_ts, funding)
    data_io.write_tape_csv(outdir / "tape.csv", *tape)
    data_io.write_json(outdir / "ground_truth.json", truth)
    print(f"wrote {outdir}/mids.csv funding.csv tape.csv ground_truth.json")
    return 0


def cmd_verify(args):
    cfg = load_run_config(args.config)
    panel = _load_panel(cfg)
    fill, _ = _fill_curve(cfg, mid_for_thresholds=panel.mid)
    if cfg.funding_fit:
        data_io.load_funding_csv(cfg.funding_csv)
    print(
        f"ok: {cfg.asset}: {panel.n_minutes} minutes, "
        f"{len(panel.funding_ts)} funding observations, fill lambda0={fill.lambda0:.4g}/h "
        f"k={fill.k:.4g}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="perpmm",
        description="Funding-aware perpetual market-making toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit funding and fill models, write JSON reports")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["volume_minute", "minute_hit"],
                   help="override the fill counting mode")
    p.add_argument("--out", help="output directory override")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("solve", help="solve and serialize the value table")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="table file path override")
    p.add_argument("--verify-as-limit", action="store_true",
                   help="check the zero-funding, zero-penalty quote recovery equals 1/k")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("backtest", help="seeded policy comparison on the holdout panel")
    p.add_argument("--config", required=True)
    p.add_argument("--stress", action="store_true", help="also run the four stress windows")
    p.add_argument("--workers", type=int, default=1, help="parallel seed workers")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("stress", help="run only the four stress windows")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("synth", help="generate a synthetic dataset trio")
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=float, default=10.0)
    p.add_argument("--s0", type=float, default=100.0)
    p.add_argument("--price-vol", type=float, default=0.002, dest="price_vol")
    p.add_argument("--kappa", type=float, default=0.125)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.002)
    p.add_argument("--jump-lambda", type=float, default=0.0, dest="jump_lambda")
    p.add_argument("--jump-mu", type=float, default=0.0, dest="jump_mu")
    p.add_argument("--jump-sigma", type=float, default=0.0, dest="jump_sigma")
    p.add_argument("--lambda0", type=float, default=60.0)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--delta-min", type=float, default=0.01, dest="delta_min")
    p.add_argument("--quote-size", type=float, default=1.0, dest="quote_size")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--start", default="2026-01-01T00:00:00Z")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="validate config and data files, no compute")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataValidationError, CFLViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
