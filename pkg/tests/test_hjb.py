import math

import numpy as np
import pytest

from perpmm.fills import FillCurve
from perpmm.funding import OUParams
from perpmm.hjb import (
    BirthDeathRates,
    CFLViolationError,
    GridSpec,
    HJBParams,
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


def naive_solve(grid, params):
    """Independent plain-loop recursion (no vectorization), same scheme."""
    q = grid.q_axis
    f = grid.f_axis
    nq, nf = grid.n_q, grid.n_f
    if nf == 1:
        rup, rdn = [0.0], [0.0]
    else:
        df = grid.df
        rup, rdn = [], []
        for l in range(nf):
            b = params.ou_cash.kappa * (params.ou_cash.theta - f[l])
            diff = params.ou_cash.sigma**2 / (2.0 * df * df)
            rup.append(diff + max(b, 0.0) / df)
            rdn.append(diff + max(-b, 0.0) / df)
        rup[-1] = 0.0
        rdn[0] = 0.0

    lam0, k, dmin = params.fill.lambda0, params.fill.k, params.fill.delta_min

    def ham(vd):
        d = max(dmin, 1.0 / k - vd)
        return lam0 * np.exp(-k * d) * (d + vd)

    dt = grid.dt
    theta = np.empty((grid.n_time + 1, nq, nf))
    for j in range(nq):
        for l in range(nf):
            theta[-1, j, l] = -params.alpha * (q[j] * q[j])
    for i in range(grid.n_time - 1, -1, -1):
        nxt = theta[i + 1]
        for j in range(nq):
            for l in range(nf):
                gen = 0.0
                if l < nf - 1:
                    gen += rup[l] * (nxt[j, l + 1] - nxt[j, l])
                if l > 0:
                    gen = gen + rdn[l] * (nxt[j, l - 1] - nxt[j, l])
                rhs = gen + (-(q[j] * f[l]) - params.phi * (q[j] * q[j]))
                if j > 0:
                    rhs = rhs + ham(nxt[j - 1, l] - nxt[j, l])
                if j < nq - 1:
                    rhs = rhs + ham(nxt[j + 1, l] - nxt[j, l])
                theta[i, j, l] = nxt[j, l] + dt * rhs
    return theta


def small_grid(n_time=8, n_f=3, f_half=1.0, T=0.12):
    return GridSpec(
        horizon_T=T, n_time=n_time, q_min=-2.0, q_max=2.0, dq=1.0,
        f_min=-f_half, f_max=f_half, n_f=n_f,
    )


SMALL_FILL = FillCurve(lambda0=30.0, k=2.0, delta_min=0.05)
SMALL_OU = OUParams(kappa=0.8, theta=0.0, sigma=0.3)


# ---------------------------------------------------------------------------
# rates and CFL
# ---------------------------------------------------------------------------


def test_rates_at_long_run_level():
    grid = GridSpec(1.0, 4, -1.0, 1.0, 1.0, -1.0, 1.0, 5)
    ou = OUParams(0.8, 0.0, 0.3)
    rates = build_rates(grid, ou)
    center = 2  # f = 0 = fbar
    expected = ou.sigma**2 / (2 * grid.df**2)
    assert rates.r_up[center] == pytest.approx(expected, rel=1e-14)
    assert rates.r_down[center] == pytest.approx(expected, rel=1e-14)


def test_rates_pure_upwind_drift():
    grid = GridSpec(1.0, 4, -1.0, 1.0, 1.0, -1.0, 1.0, 5)
    ou = OUParams(0.8, 0.5, 0.0)
    rates = build_rates(grid, ou)
    f = grid.f_axis
    # below the long-run level: drift is up, down rate vanishes
    l = 1
    assert f[l] < ou.theta
    assert rates.r_down[l] == 0.0
    assert rates.r_up[l] == pytest.approx(ou.kappa * (ou.theta - f[l]) / grid.df, rel=1e-14)


def test_rates_boundary_suppression():
    grid = GridSpec(1.0, 4, -1.0, 1.0, 1.0, -1.0, 1.0, 5)
    rates = build_rates(grid, SMALL_OU)
    assert rates.r_up[-1] == 0.0
    assert rates.r_down[0] == 0.0
    assert np.all(rates.r_up >= 0) and np.all(rates.r_down >= 0)


def test_generator_reproduces_drift_on_linear_function():
    grid = GridSpec(1.0, 4, -1.0, 1.0, 1.0, -2.0, 2.0, 9)
    ou = OUParams(1.3, 0.17, 0.42)
    rates = build_rates(grid, ou)
    f = grid.f_axis
    df = grid.df
    for l in range(1, grid.n_f - 1):
        drift = rates.r_up[l] * df + rates.r_down[l] * (-df)
        assert drift == pytest.approx(ou.kappa * (ou.theta - f[l]), rel=1e-12, abs=1e-15)


def test_cfl_flat_rates():
    r = 3.7
    rates = BirthDeathRates(np.array([0.0, r, r, 0.0]), np.array([0.0, r, r, 0.0]))
    assert cfl_max_dt(rates, FillCurve(0.0, 1.0)) == pytest.approx(1.0 / (2 * r), rel=1e-14)


def test_cfl_arithmetic_example():
    grid = GridSpec(1.0, 4, -1.0, 1.0, 1.0, 0.0, 0.0, 1)
    rates = build_rates(grid, OUParams(0.0, 0.0, 0.0))
    fill = FillCurve(3600.0, 1.0, 0.0)
    assert cfl_max_dt(rates, fill) == pytest.approx(1.0 / 7200.0, rel=1e-14)


def test_solve_refuses_cfl_violation():
    grid = small_grid(n_time=1, T=1.0)  # dt = 1 h, far too large
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    rates = build_rates(grid, SMALL_OU)
    bound = cfl_max_dt(rates, SMALL_FILL)
    with pytest.raises(CFLViolationError) as exc:
        solve(grid, params)
    assert exc.value.max_dt == pytest.approx(bound, rel=1e-12)
    # hand computation of the bound
    hand = 1.0 / (
        max(rates.r_up[i] + rates.r_down[i] for i in range(grid.n_f))
        + 2 * SMALL_FILL.lambda0 * math.exp(-SMALL_FILL.k * SMALL_FILL.delta_min)
    )
    assert exc.value.max_dt == pytest.approx(hand, rel=1e-12)


# ---------------------------------------------------------------------------
# offsets and Hamiltonians
# ---------------------------------------------------------------------------


def test_offset_zero_value_diff():
    fill = FillCurve(100.0, 2.5, 0.01)
    assert optimal_offset(0.0, fill) == pytest.approx(1 / 2.5, rel=1e-14)


def test_offset_floor_boundary():
    fill = FillCurve(100.0, 2.5, 0.07)
    vd = 1 / fill.k - fill.delta_min
    assert optimal_offset(vd, fill) == fill.delta_min


def test_offset_floored_case_matches_dense_argmax():
    k = 2.5
    fill = FillCurve(100.0, k, delta_min=0.01 / k)
    vd = 10.0 / k
    delta = optimal_offset(vd, fill)
    assert delta == fill.delta_min
    grid = np.linspace(fill.delta_min, 10 / k, 200_001)
    rewards = np.exp(-k * grid) * (grid + vd)
    assert grid[np.argmax(rewards)] == pytest.approx(delta, abs=1e-4)


def test_hamiltonian_zero_value_diff():
    fill = FillCurve(100.0, 2.5, 0.01)
    assert hamiltonian(0.0, fill) == pytest.approx(100.0 * math.exp(-1) / 2.5, rel=1e-14)


def test_hamiltonian_very_negative_value_diff():
    # For very negative value differences the optimum moves far from the
    # mid (the floor cannot bind: a binding floor forces
    # delta_min + vd > 1/k > 0), leaving a tiny positive reward that must
    # match the dense-grid supremum.
    fill = FillCurve(100.0, 2.5, 0.2)
    for vd in (-1.0, -2.0, -1 / fill.k - fill.delta_min, -10 / fill.k):
        delta = optimal_offset(vd, fill)
        assert delta > fill.delta_min  # interior optimum
        h = hamiltonian(vd, fill)
        assert h > 0
        grid = np.linspace(fill.delta_min, fill.delta_min + 40 / fill.k, 400_001)
        rewards = fill.lambda0 * np.exp(-fill.k * grid) * (grid + vd)
        assert h >= np.max(rewards) - 1e-15
        assert h == pytest.approx(np.max(rewards), rel=1e-6)


def test_hamiltonian_floored_branch_total_positive():
    # When the floor binds (vd >= 1/k - delta_min) the evaluated total
    # delta_min + vd stays above 1/k, so floored rewards are positive too.
    fill = FillCurve(50.0, 1.0, delta_min=2.0)  # 1/k = 1 < delta_min
    for vd in (-0.9, 0.0, 1.5):
        assert optimal_offset(vd, fill) == fill.delta_min
        h = hamiltonian(vd, fill)
        expected = fill.lambda0 * math.exp(-fill.k * fill.delta_min) * (fill.delta_min + vd)
        assert h == pytest.approx(expected, rel=1e-12)
        assert h > 0
        grid = np.linspace(fill.delta_min, fill.delta_min + 40, 400_001)
        rewards = fill.lambda0 * np.exp(-fill.k * grid) * (grid + vd)
        assert h == pytest.approx(np.max(rewards), rel=1e-6)


def test_hamiltonian_monotone_in_value_diff():
    rng = np.random.default_rng(5)
    fill = FillCurve(40.0, 1.7, 0.05)
    for _ in range(100):
        a, b = sorted(rng.normal(0, 2, 2))
        assert hamiltonian(a, fill) <= hamiltonian(b, fill) + 1e-14


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_matches_naive_recursion():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    expected = naive_solve(grid, params)
    assert np.max(np.abs(table.theta - expected)) <= 1e-12


def test_solve_analytic_no_fill():
    f0 = 0.3
    grid = GridSpec(2.0, 64, -5.0, 5.0, 1.0, f0, f0, 1)
    params = HJBParams(OUParams(0.0, 0.0, 0.0), FillCurve(0.0, 1.0), alpha=0.7, phi=0.25)
    table = solve(grid, params)
    q = grid.q_axis
    t = grid.t_axis
    expected = (
        -params.alpha * q[None, :] ** 2
        - (grid.horizon_T - t[:, None]) * (q[None, :] * f0 + params.phi * q[None, :] ** 2)
    )
    assert np.max(np.abs(table.theta[:, :, 0] - expected)) <= 1e-9


def test_terminal_slice_exact():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=1.3, phi=0.0)
    table = solve(grid, params)
    q = grid.q_axis
    assert np.array_equal(table.theta[-1], np.broadcast_to((-1.3 * q * q)[:, None], (grid.n_q, grid.n_f)))


def test_as_limit_interior_offsets():
    # funding collapsed, no penalties: offsets equal 1/k in the region the
    # inventory bounds cannot influence (padded grid, probed core)
    fill = FillCurve(10.0, 1.0, delta_min=0.1)
    grid = GridSpec(1.0, 32, -40.0, 40.0, 1.0, 0.0, 0.0, 1)
    params = HJBParams(OUParams(0.0, 0.0, 0.0), fill, alpha=0.0, phi=0.0)
    table = solve(grid, params)
    for t in np.linspace(0, 1.0, 9):
        for q in range(-5, 6):
            res = quote_lookup(table, t, float(q), 0.0)
            assert abs(res.bid_offset - 1 / fill.k) <= 1e-10 / fill.k
            assert abs(res.ask_offset - 1 / fill.k) <= 1e-10 / fill.k


def test_scheme_monotonicity_on_random_pairs():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    rates = build_rates(grid, params.ou_cash)
    dt = 0.9 * cfl_max_dt(rates, params.fill)
    rng = np.random.default_rng(17)
    for _ in range(100):
        v = rng.normal(0, 1.0, (grid.n_q, grid.n_f))
        u = v + rng.uniform(0, 1.0, (grid.n_q, grid.n_f))
        u_next = backward_step(u, grid, params, rates, dt)
        v_next = backward_step(v, grid, params, rates, dt)
        assert np.all(u_next >= v_next)


def test_penalty_comparison():
    grid = small_grid()
    base = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    more_alpha = HJBParams(SMALL_OU, SMALL_FILL, alpha=1.0, phi=0.1)
    more_phi = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.3)
    t0 = solve(grid, base).theta
    assert np.all(solve(grid, more_alpha).theta <= t0 + 1e-12)
    assert np.all(solve(grid, more_phi).theta <= t0 + 1e-12)


def test_funding_sign_skew_and_reflection():
    grid = GridSpec(0.5, 64, -3.0, 3.0, 1.0, -1.0, 1.0, 9)
    params = HJBParams(OUParams(0.8, 0.0, 0.3), SMALL_FILL, alpha=0.2, phi=0.05)
    table = solve(grid, params)

    # reflection symmetry theta(t, q, f) == theta(t, -q, -f)
    mirrored = table.theta[:, ::-1, ::-1]
    assert np.max(np.abs(table.theta - mirrored)) <= 1e-10

    # ask offset non-increasing in f for q > 0 (selling tightens as funding
    # turns against long inventory)
    f_axis = grid.f_axis
    for q in (1.0, 2.0):
        offs = [quote_lookup(table, 0.1, q, f).ask_offset for f in f_axis]
        assert np.all(np.diff(offs) <= 1e-12)

    # bid/ask swap under the reflection
    for q in (-2.0, -1.0, 0.0, 1.0, 2.0):
        for f in (-0.75, 0.0, 0.75):
            a = quote_lookup(table, 0.2, q, f)
            b = quote_lookup(table, 0.2, -q, -f)
            assert a.bid_offset == pytest.approx(b.ask_offset, rel=1e-10)
            assert a.ask_offset == pytest.approx(b.bid_offset, rel=1e-10)


def test_grid_refinement_cauchy_trend():
    ou = OUParams(0.8, 0.0, 0.3)
    params = HJBParams(ou, SMALL_FILL, alpha=0.2, phi=0.05)
    values = []
    for n_time, n_f in ((64, 5), (128, 9), (256, 17)):
        grid = GridSpec(0.5, n_time, -3.0, 3.0, 1.0, -1.0, 1.0, n_f)
        table = solve(grid, params)
        j0 = int(round(-grid.q_min / grid.dq))
        values.append(table.theta[0, j0, (n_f - 1) // 2])
    change1 = abs(values[1] - values[0])
    change2 = abs(values[2] - values[1])
    assert change2 < change1


def test_solve_is_deterministic():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    a = solve(grid, params).theta
    b = solve(grid, params).theta
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# quote lookup
# ---------------------------------------------------------------------------


def test_lookup_zero_funding_collapsed_table():
    fill = FillCurve(10.0, 2.0, delta_min=0.05)
    grid = GridSpec(1.0, 32, -30.0, 30.0, 1.0, 0.0, 0.0, 1)
    params = HJBParams(OUParams(0.0, 0.0, 0.0), fill, alpha=0.0, phi=0.0)
    table = solve(grid, params)
    res = quote_lookup(table, 0.37, 0.0, 0.0)
    assert res == (pytest.approx(0.5, rel=1e-10), pytest.approx(0.5, rel=1e-10), False, False)


def test_lookup_blocking_flags():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    top = quote_lookup(table, 0.05, grid.q_max, 0.0)
    assert top.bid_blocked and not top.ask_blocked
    assert top.bid_offset == math.inf
    bottom = quote_lookup(table, 0.05, grid.q_min, 0.0)
    assert bottom.ask_blocked and not bottom.bid_blocked
    assert bottom.ask_offset == math.inf


def test_lookup_exact_node_has_no_interpolation_error():
    grid = small_grid(n_time=16, n_f=5)
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    i, j, l = 7, 2, 3
    t, q, f = grid.t_axis[i], grid.q_axis[j], grid.f_axis[l]
    res = quote_lookup(table, t, q, f)
    direct_ask = optimal_offset(table.theta[i, j - 1, l] - table.theta[i, j, l], params.fill)
    direct_bid = optimal_offset(table.theta[i, j + 1, l] - table.theta[i, j, l], params.fill)
    assert res.ask_offset == direct_ask
    assert res.bid_offset == direct_bid


def test_lookup_clamps_out_of_range_funding():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    inside = quote_lookup(table, 0.05, 0.0, grid.f_max)
    outside = quote_lookup(table, 0.05, 0.0, grid.f_max + 10.0)
    assert inside == outside


def test_lookup_rejects_off_grid_inventory():
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    with pytest.raises(ValueError):
        quote_lookup(table, 0.05, 0.5, 0.0)
    with pytest.raises(ValueError):
        quote_lookup(table, 0.05, 7.0, 0.0)


# ---------------------------------------------------------------------------
# grid validation, bounds helper, serialization
# ---------------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(1.0, 4, -2.0, 2.0, 1.0, 1.0, -1.0, 5)  # f_min > f_max
    with pytest.raises(ValueError):
        GridSpec(1.0, 4, -2.0, 2.0, 1.0, -1.0, 1.0, 2)  # n_f = 2
    with pytest.raises(ValueError):
        GridSpec(1.0, 4, -2.0, 2.0, 3.0, -1.0, 1.0, 5)  # dq not a divisor
    with pytest.raises(ValueError):
        GridSpec(1.0, 4, 0.5, 2.5, 1.0, -1.0, 1.0, 5)  # grid misses 0
    with pytest.raises(ValueError):
        GridSpec(1.0, 4, -1.0, 1.0, 1.0, 0.1, 0.2, 1)  # collapsed but f_min != f_max
    grid = GridSpec(1.0, 4, -2.0, 2.0, 1.0, -1.0, 1.0, 5)
    assert grid.n_q == 5
    assert grid.q_axis.tolist() == [-2.0, -1.0, 0.0, 1.0, 2.0]


def test_default_f_bounds():
    ou = OUParams(0.5, 0.2, 0.3)
    lo, hi = default_f_bounds(ou)
    sd = 0.3 / math.sqrt(1.0)
    assert lo == pytest.approx(0.2 - 5 * sd, rel=1e-12)
    assert hi == pytest.approx(0.2 + 5 * sd, rel=1e-12)


def test_table_roundtrip_and_checksum(tmp_path):
    grid = small_grid()
    params = HJBParams(SMALL_OU, SMALL_FILL, alpha=0.5, phi=0.1)
    table = solve(grid, params)
    path = tmp_path / "table.hjb"
    checksum1 = save_table(table, path)
    loaded = load_table(path)
    assert np.array_equal(loaded.theta, table.theta)
    assert loaded.grid == grid
    assert loaded.params.fill == params.fill
    assert loaded.params.ou_cash == params.ou_cash

    # identical solve and save => byte-identical file
    path2 = tmp_path / "table2.hjb"
    checksum2 = save_table(solve(grid, params), path2)
    assert checksum1 == checksum2
    assert path.read_bytes() == path2.read_bytes()

    # corruption detected
    blob = bytearray(path.read_bytes())
    blob[-5] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="corrupt"):
        load_table(path)


def test_solve_aborts_on_non_finite_values():
    # an overflowing terminal slice must be caught at the first bad node
    grid = GridSpec(0.1, 8, -2.0, 2.0, 1.0, 0.0, 0.0, 1)
    params = HJBParams(OUParams(0.0, 0.0, 0.0), SMALL_FILL, alpha=1e308, phi=0.0)
    with np.errstate(all="ignore"):
        with pytest.raises(RuntimeError, match="non-finite value at time index"):
            solve(grid, params)


def _simulate_table_policy(table, fill, ou, params, n_paths, n_steps, seed):
    """Monte Carlo of the realized reduced objective under the recovered
    policy: exact OU funding substeps, Bernoulli-thinned fills at the
    table's own offsets, running/terminal penalties accumulated pathwise."""
    grid = table.grid
    dt = grid.horizon_T / n_steps
    rng = np.random.default_rng(seed)
    decay = math.exp(-ou.kappa * dt)
    csd = ou.sigma * math.sqrt((1 - decay**2) / (2 * ou.kappa))
    f = np.full(n_paths, ou.theta)
    q = np.zeros(n_paths)
    reduced = np.zeros(n_paths)
    f_axis = grid.f_axis
    th = table.theta
    j_of_path = np.zeros(n_paths, dtype=np.int64) + int(round(-grid.q_min / grid.dq))
    for step in range(n_steps):
        t = step * dt
        i_pos = min(max(t / grid.dt, 0.0), grid.n_time - 1e-9)
        i0 = int(i_pos)
        wt = i_pos - i0
        fc = np.clip(f, f_axis[0], f_axis[-1])
        pos = (fc - f_axis[0]) / grid.df
        l0 = np.minimum(pos.astype(int), grid.n_f - 2)
        wf = pos - l0
        # interpolated theta for every inventory row at once: (n_q, n_paths)
        v0 = th[i0][:, l0] * (1 - wf) + th[i0][:, l0 + 1] * wf
        v1 = th[i0 + 1][:, l0] * (1 - wf) + th[i0 + 1][:, l0 + 1] * wf
        v = v0 * (1 - wt) + v1 * wt
        here = v[j_of_path, np.arange(n_paths)]
        bid = np.full(n_paths, np.inf)
        ask = np.full(n_paths, np.inf)
        can_buy = j_of_path < grid.n_q - 1
        can_sell = j_of_path > 0
        up = v[np.minimum(j_of_path + 1, grid.n_q - 1), np.arange(n_paths)]
        dn = v[np.maximum(j_of_path - 1, 0), np.arange(n_paths)]
        bid[can_buy] = np.maximum(params.fill.delta_min,
                                  1 / params.fill.k - (up - here))[can_buy]
        ask[can_sell] = np.maximum(params.fill.delta_min,
                                   1 / params.fill.k - (dn - here))[can_sell]
        u = rng.random((2, n_paths))
        bf = u[0] < -np.expm1(-fill.intensity(bid) * dt)
        af = u[1] < -np.expm1(-fill.intensity(ask) * dt)
        reduced += np.where(bf, bid, 0.0) + np.where(af, ask, 0.0)
        q += bf * 1.0 - af * 1.0
        j_of_path += bf.astype(np.int64) - af.astype(np.int64)
        reduced -= (q * f + params.phi * q * q) * dt
        f = ou.theta + (f - ou.theta) * decay + csd * rng.standard_normal(n_paths)
    reduced -= params.alpha * q * q
    return float(reduced.mean()), float(reduced.std(ddof=1) / math.sqrt(n_paths))


def test_solver_value_consistent_with_policy_simulation():
    # The solved value must match the Monte Carlo realized objective of its
    # own recovered policy, with the gap shrinking under joint refinement
    # (first-order scheme). This checks the scheme approximates the control
    # problem, not merely that the code matches its own recursion.
    fill = FillCurve(lambda0=30.0, k=2.0, delta_min=0.05)
    ou = OUParams(kappa=0.8, theta=0.1, sigma=0.3)
    sd = ou.stationary_std
    gaps = []
    for n_f, n_time, n_steps in ((21, 2048, 1200), (41, 4096, 2400)):
        grid = GridSpec(4.0, n_time, -3.0, 3.0, 1.0, ou.theta - 5 * sd, ou.theta + 5 * sd, n_f)
        params = HJBParams(ou, fill, alpha=0.05, phi=0.02)
        table = solve(grid, params)
        j0 = int(round(-grid.q_min / grid.dq))
        theta0 = table.theta[0, j0, (n_f - 1) // 2]
        mc, se = _simulate_table_policy(table, fill, ou, params, 10_000, n_steps, seed=7)
        assert se < 0.01 * abs(theta0)
        gaps.append((mc - theta0) / abs(theta0))
    assert abs(gaps[-1]) < 0.015
    assert abs(gaps[-1]) < abs(gaps[0])
