"""Funding-aware market making for perpetual contracts.

Calibrates mean-reverting (plus jump-diagnostic) funding models and
exponential fill curves from minute-level data, solves the reduced
inventory-funding control problem with a monotone finite-difference
scheme, recovers bid/ask quote offsets from the value table, and replays
market panels under seeded simulated fills to compare funding-aware and
funding-unaware quoting policies.
"""

from .fills import FillCurve, HitPanel, bucket_hits, default_thresholds, fit_fill_curve
from .funding import (
    FundingSeries,
    JumpParams,
    OUParams,
    ResidualDiagnostics,
    calibration_report,
    cash_scale,
    fit_ou,
    fit_ou_jump,
    half_life,
    jump_mixture_loglik,
    ou_loglik,
    ou_moments,
    residual_diagnostics,
)
from .hjb import (
    BirthDeathRates,
    CFLViolationError,
    GridSpec,
    HJBParams,
    HJBTable,
    backward_step,
    build_rates,
    cfl_max_dt,
    default_f_bounds,
    hamiltonian,
    load_table,
    optimal_offset,
    quote_lookup,
    save_table,
    solve,
)
from .policies import (
    PolicyConfig,
    QuoteDecision,
    build_as_table,
    calibrate_risk_rule,
    calibrate_scaled_as,
    quote,
)
from .simulator import (
    MarketPanel,
    MetricsRow,
    PathResult,
    SimState,
    apply_funding,
    compute_metrics,
    run_backtest,
    sample_fills,
    select_stress_windows,
)
from .synth import SyntheticSpec, generate

__version__ = "0.1.0"
