"""Shared generators and slow reference implementations used as oracles.

Every reference here rescans the raw event history and never touches the
decayed-count machinery, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from corrcascades import EventLog, LinearMark, ModelParams, SoftMaxMark


def random_log(rng, n_users=None, n_products=None, max_events=30, horizon=None):
    n = n_users if n_users is not None else int(rng.integers(1, 6))
    m = n_products if n_products is not None else int(rng.integers(1, 4))
    k = int(rng.integers(0, max_events + 1))
    t = horizon if horizon is not None else float(rng.uniform(2.0, 10.0))
    times = np.sort(rng.uniform(0.0, t, size=k))
    users = rng.integers(0, n, size=k)
    products = rng.integers(0, m, size=k)
    return EventLog(zip(times, users, products), t, n, m)


def random_params(rng, n_users, n_products, beta=1.0, mu_high=0.8, alpha_high=0.3):
    mu = rng.uniform(0.05, mu_high, size=(n_users, n_products))
    alpha = rng.uniform(0.0, alpha_high, size=(n_users, n_users))
    mark = SoftMaxMark(beta) if beta is not None else LinearMark()
    return ModelParams(mu, alpha, mark)


def brute_tendency(log, params, user, product, t):
    """g_u^p(t) by a full rescan over events strictly before t."""
    mask = (log.times < t) & (log.products == product)
    return float(
        params.mu[user, product]
        + (params.alpha[log.users[mask], user] * np.exp(-(t - log.times[mask]))).sum()
    )


def brute_intensity(log, params, user, t):
    mask = log.times < t
    return float(
        params.mu_user[user]
        + (params.alpha[log.users[mask], user] * np.exp(-(t - log.times[mask]))).sum()
    )


def brute_mark_density(log, params, user, t):
    g = np.array(
        [brute_tendency(log, params, user, p, t) for p in range(params.n_products)]
    )
    if isinstance(params.mark, SoftMaxMark):
        z = params.mark.beta * g
        w = np.exp(z - z.max())
        return w / w.sum()
    return g / g.sum()


def quad_compensator(log, params, user, t_end, tol=1e-10):
    """Integral of the intensity by adaptive quadrature between event times."""
    knots = np.concatenate([[0.0], log.times[log.times < t_end], [t_end]])
    knots = np.unique(knots)
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = quad(
            lambda s: brute_intensity(log, params, user, s), a, b,
            epsabs=tol, epsrel=tol, limit=200,
        )
        total += val
    return total


def brute_total_nll(log, params, use_quad=True):
    """Whole-log NLL from the likelihood product: rescanned intensities and
    mark densities at each event, survival term by quadrature."""
    event_ll = 0.0
    for t, u, p in zip(log.times, log.users, log.products):
        lam = brute_intensity(log, params, int(u), float(t))
        f = brute_mark_density(log, params, int(u), float(t))[int(p)]
        event_ll += np.log(lam) + np.log(f)
    comp = 0.0
    for u in range(params.n_users):
        if use_quad:
            comp += quad_compensator(log, params, u, log.horizon)
        else:
            mask = log.times < log.horizon
            comp += params.mu_user[u] * log.horizon + float(
                (params.alpha[log.users[mask], u] * (1 - np.exp(-(log.horizon - log.times[mask])))).sum()
            )
    return comp - event_ll
