"""Shared synthetic-data helpers for the test suite."""

import numpy as np

from perpmm.funding import FundingSeries


def gen_ou_values(kappa, theta, sigma, n, rng, dt=1.0, x0=None):
    """Exact-transition OU sample path (textbook recursion, loop form)."""
    decay = np.exp(-kappa * dt)
    sd = sigma * np.sqrt((1.0 - np.exp(-2.0 * kappa * dt)) / (2.0 * kappa))
    x = np.empty(n)
    x[0] = theta if x0 is None else x0
    shocks = rng.standard_normal(n - 1)
    for i in range(n - 1):
        x[i + 1] = theta + (x[i] - theta) * decay + sd * shocks[i]
    return x


def gen_ou_series(kappa, theta, sigma, n, seed, dt=1.0, x0=None):
    rng = np.random.default_rng(seed)
    values = gen_ou_values(kappa, theta, sigma, n, rng, dt=dt, x0=x0)
    return FundingSeries(np.arange(n, dtype=float) * dt, values)


def gen_ou_jump_series(kappa, theta, sigma, lambda_j, mu_j, sigma_j, n, seed, dt=1.0):
    """OU path with Bernoulli-normal jumps added to each transition."""
    rng = np.random.default_rng(seed)
    decay = np.exp(-kappa * dt)
    sd = sigma * np.sqrt((1.0 - np.exp(-2.0 * kappa * dt)) / (2.0 * kappa))
    p = 1.0 - np.exp(-lambda_j * dt)
    x = np.empty(n)
    x[0] = theta
    for i in range(n - 1):
        nxt = theta + (x[i] - theta) * decay + sd * rng.standard_normal()
        if rng.uniform() < p:
            nxt += mu_j + sigma_j * rng.standard_normal()
        x[i + 1] = nxt
    return FundingSeries(np.arange(n, dtype=float) * dt, x)
