import math

import numpy as np
import pytest

from perpmm.fills import (
    FillCurve,
    HitPanel,
    NonDecayingFillsError,
    UninformativePanelError,
    bucket_hits,
    default_thresholds,
    fit_fill_curve,
)


def exact_panel(lambda0, k, thresholds, minutes, mode="minute_hit", quote_size=1.0):
    """Panel whose (possibly fractional) hits equal expected counts exactly."""
    p = 1.0 - np.exp(-lambda0 * np.exp(-k * np.asarray(thresholds)) / 60.0)
    return HitPanel(minutes=minutes, thresholds=np.asarray(thresholds, float),
                    hits=minutes * p, mode=mode, quote_size=quote_size)


# ---------------------------------------------------------------------------
# bucket_hits
# ---------------------------------------------------------------------------


def test_single_deep_crossing_full_volume():
    d1 = 0.5
    panel = bucket_hits([0], [2 * d1], [1.0], [d1, 2 * d1], "volume_minute", quote_size=1.0)
    assert panel.hits.tolist() == [1.0, 1.0]


def test_mode_divergence_on_small_volume():
    d1 = 0.5
    args = ([0], [2 * d1], [0.5], [d1, 2 * d1])
    vm = bucket_hits(*args, "volume_minute", quote_size=1.0)
    mh = bucket_hits(*args, "minute_hit", quote_size=1.0)
    assert vm.hits.tolist() == [0.0, 0.0]
    assert mh.hits.tolist() == [1.0, 1.0]


def test_volume_accumulates_within_minute():
    # two crossings at different depths; cumulative volume counts at the
    # shallower threshold but only one crossing reaches the deeper one
    panel = bucket_hits(
        [5, 5], [1.0, 3.0], [0.6, 0.6], [0.5, 2.0], "volume_minute", quote_size=1.0
    )
    assert panel.hits.tolist() == [1.0, 0.0]


def test_bucket_hits_matches_brute_force_recount():
    rng = np.random.default_rng(123)
    n_rows = 4000
    minute_ids = rng.integers(0, 1000, n_rows)
    distances = rng.exponential(1.0, n_rows)
    volumes = rng.exponential(0.8, n_rows)
    thresholds = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    qs = 1.0

    for mode in ("volume_minute", "minute_hit"):
        panel = bucket_hits(minute_ids, distances, volumes, thresholds, mode, qs,
                            n_minutes=1000)
        # brute-force oracle: python dict per minute
        per_minute = {}
        for m, d, v in zip(minute_ids, distances, volumes):
            per_minute.setdefault(int(m), []).append((d, v))
        expected = np.zeros(len(thresholds))
        for rows in per_minute.values():
            for i, thr in enumerate(thresholds):
                deep = [(d, v) for d, v in rows if d >= thr]
                if mode == "minute_hit":
                    expected[i] += bool(deep)
                else:
                    expected[i] += sum(v for _, v in deep) >= qs
        assert panel.minutes == 1000
        assert panel.hits.tolist() == expected.tolist()
        assert np.all(np.diff(panel.hits) <= 0)


def test_bucket_hits_rejects_undersized_minute_count():
    with pytest.raises(ValueError):
        bucket_hits([0, 1, 2], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.5],
                    "minute_hit", n_minutes=2)


def test_bucket_hits_rejects_unsorted_thresholds():
    with pytest.raises(ValueError):
        bucket_hits([0], [1.0], [1.0], [2.0, 1.0], "minute_hit")


# ---------------------------------------------------------------------------
# fit_fill_curve
# ---------------------------------------------------------------------------


def test_exact_recovery_from_noiseless_panel():
    thresholds = default_thresholds(3000.0)
    panel = exact_panel(7200.0, 0.5, thresholds, minutes=10_000)
    curve = fit_fill_curve(panel, delta_min=0.01)
    assert curve.lambda0 == pytest.approx(7200.0, rel=1e-6)
    assert curve.k == pytest.approx(0.5, rel=1e-6)
    assert curve.delta_min == 0.01


def test_rate_invariance_under_count_scaling():
    thresholds = np.array([0.5, 1.0, 2.0, 4.0])
    base = exact_panel(600.0, 0.8, thresholds, minutes=1000)
    doubled = HitPanel(2000, thresholds, 2 * base.hits, base.mode)
    a, b = fit_fill_curve(base), fit_fill_curve(doubled)
    assert a.lambda0 == pytest.approx(b.lambda0, rel=1e-12)
    assert a.k == pytest.approx(b.k, rel=1e-12)


def test_threshold_scale_consistency():
    thresholds = np.array([0.5, 1.0, 2.0, 4.0])
    base = exact_panel(600.0, 0.8, thresholds, minutes=1000)
    c = 7.5
    scaled = HitPanel(1000, thresholds * c, base.hits, base.mode)
    a, b = fit_fill_curve(base), fit_fill_curve(scaled)
    assert b.k == pytest.approx(a.k / c, rel=1e-9)
    assert b.lambda0 == pytest.approx(a.lambda0, rel=1e-9)


def test_uninformative_panels_rejected():
    thresholds = np.array([0.5, 1.0, 2.0])
    with pytest.raises(UninformativePanelError):
        fit_fill_curve(HitPanel(100, thresholds, [0.0, 0.0, 0.0], "minute_hit"))
    with pytest.raises(UninformativePanelError):
        fit_fill_curve(HitPanel(100, thresholds, [100.0, 100.0, 100.0], "minute_hit"))


def test_non_decaying_fit_rejected():
    # constant hit counts => zero slope => k <= 0
    thresholds = np.array([0.5, 1.0, 2.0])
    panel = HitPanel(100, thresholds, [40.0, 40.0, 40.0], "minute_hit")
    with pytest.raises(NonDecayingFillsError):
        fit_fill_curve(panel)


def test_minute_hit_dominates_volume_minute_on_shared_tape():
    # paired synthetic tape: some crossings carry sub-quote volume
    rng = np.random.default_rng(7)
    lambda0, k, qs = 120.0, 1.2, 1.0
    n_minutes = 40_000
    rows_m, rows_d, rows_v = [], [], []
    p_touch = 1.0 - math.exp(-lambda0 / 60.0)
    for m in range(n_minutes):
        u = rng.uniform()
        if u >= p_touch:
            continue
        depth = -math.log(60.0 * (-math.log1p(-u)) / lambda0) / k
        if depth <= 0:
            continue
        rows_m.append(m)
        rows_d.append(depth)
        rows_v.append(qs * rng.exponential(1.2))
    thresholds = np.geomspace(0.05, 2.0, 8)
    vm = bucket_hits(rows_m, rows_d, rows_v, thresholds, "volume_minute", qs,
                     n_minutes=n_minutes)
    mh = bucket_hits(rows_m, rows_d, rows_v, thresholds, "minute_hit", qs,
                     n_minutes=n_minutes)
    assert np.all(mh.hits >= vm.hits)
    curve_vm = fit_fill_curve(vm)
    curve_mh = fit_fill_curve(mh)
    assert curve_mh.lambda0 >= curve_vm.lambda0
    # the generation-consistent mode recovers the ground truth
    assert curve_mh.lambda0 == pytest.approx(lambda0, rel=0.05)
    assert curve_mh.k == pytest.approx(k, rel=0.05)


def test_implied_minute_probability_in_unit_interval():
    thresholds = default_thresholds(3000.0)
    panel = exact_panel(300.0, 0.5, thresholds, minutes=10_000)
    curve = fit_fill_curve(panel)
    fitted = (panel.hits > 0) & (panel.hits < panel.minutes)
    p = curve.fill_probability(thresholds[fitted], 1.0 / 60.0)
    assert np.all(p > 0) and np.all(p < 1)


def test_empirical_rate_monotone_on_valid_panel():
    thresholds = np.array([0.5, 1.0, 2.0, 4.0])
    panel = exact_panel(600.0, 0.8, thresholds, minutes=1000)
    lam = -np.log(1 - panel.hits / panel.minutes)
    assert np.all(np.diff(lam) <= 0)


def test_panel_validation():
    with pytest.raises(ValueError):
        HitPanel(100, [1.0, 2.0], [10.0, 20.0], "minute_hit")  # increasing hits
    with pytest.raises(ValueError):
        HitPanel(100, [2.0, 1.0], [20.0, 10.0], "minute_hit")  # unsorted
    with pytest.raises(ValueError):
        HitPanel(100, [1.0, 2.0], [120.0, 10.0], "minute_hit")  # hits > minutes
    with pytest.raises(ValueError):
        HitPanel(100, [1.0, 2.0], [20.0, 10.0], "bogus")


def test_curve_validation_and_helpers():
    with pytest.raises(ValueError):
        FillCurve(-1.0, 0.5)
    with pytest.raises(ValueError):
        FillCurve(100.0, 0.0)
    with pytest.raises(ValueError):
        FillCurve(100.0, 0.5, -0.1)
    curve = FillCurve(100.0, 0.5, 0.2)
    assert curve.intensity(0.0) == 100.0
    assert curve.max_intensity == pytest.approx(100.0 * math.exp(-0.1), rel=1e-12)
    delta = np.linspace(curve.delta_min, 10 / curve.k, 50)
    lam = curve.intensity(delta)
    assert np.all(lam > 0) and np.all(np.isfinite(lam))
