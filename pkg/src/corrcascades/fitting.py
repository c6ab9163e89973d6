"""Constrained MLE per user via a log-barrier interior-point scheme.

Each user's problem (minimize the per-user NLL over theta >= 0) is convex
and independent of every other user's, so the full fit is a map over users
that may run in parallel with bit-identical results to a sequential run.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import EventLog
from .likelihood import (
    EventFeatures,
    InfeasibleLikelihoodError,
    UserParams,
    _diag_hessian_from_eval,
    _eval_features,
    _gradient_from_eval,
    build_all_features,
    nll_from_features,
    nll_gradient_from_features,
    window_nll,
)
from .model import ModelParams, SoftMaxMark

WORKERS_ENV_VAR = "CORRCASCADES_WORKERS"


@dataclass(frozen=True)
class FitConfig:
    """Barrier-solver controls; defaults are standard interior-point choices."""

    beta: float = 1.0
    barrier_t0: float = 1.0
    barrier_mult: float = 10.0
    barrier_gap_tol: float = 1e-6
    inner_grad_tol: float = 1e-7
    inner_max_iter: int = 500
    ls_shrink: float = 0.5
    ls_decrease: float = 1e-4
    init_value: float = 0.01
    n_workers: int = 1

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.barrier_mult <= 1:
            raise ValueError("barrier_mult must exceed 1")
        for name in ("barrier_t0", "barrier_gap_tol", "inner_grad_tol", "init_value"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class UserFitEntry:
    user: int
    nll: float
    outer_iterations: int
    inner_iterations: int
    converged: bool
    grad_norm: float
    wall_time: float


@dataclass
class FitReport:
    entries: list[UserFitEntry] = field(default_factory=list)

    @property
    def total_inner_iterations(self) -> int:
        return sum(e.inner_iterations for e in self.entries)

    @property
    def total_wall_time(self) -> float:
        return sum(e.wall_time for e in self.entries)

    @property
    def all_converged(self) -> bool:
        return all(e.converged for e in self.entries)


def _barrier_eval(features, theta, beta, t_weight):
    """(value, g, lam) of the barrier objective; value inf when infeasible."""
    if np.any(theta <= 0):
        return np.inf, None, None
    try:
        nll, g, lam = _eval_features(
            features, theta[: features.n_users], theta[features.n_users :], beta
        )
    except InfeasibleLikelihoodError:
        return np.inf, None, None
    return nll - np.log(theta).sum() / t_weight, g, lam


def _barrier_value(features, theta, beta, t_weight):
    return _barrier_eval(features, theta, beta, t_weight)[0]


def _minimize_barrier(features, theta, beta, t_weight, config, fixed=None):
    """Preconditioned descent with backtracking on nll - (1/t) * sum(log theta).

    The direction scales the gradient by the analytic diagonal NLL curvature
    plus the exact barrier curvature 1/(t * theta^2); without that scaling
    the tiny floored coordinates cap the step size and the free coordinates
    stall.  Coordinates in `fixed` are held in place: the likelihood does
    not depend on them, so the barrier alone would run them to infinity.
    Stops at the gradient tolerance, the iteration cap, or after the
    objective stagnates (three consecutive relative decreases below 1e-12).
    """
    value, g, lam = _barrier_eval(features, theta, beta, t_weight)
    iterations = 0
    grad_norm = np.inf
    stagnant = 0
    for _ in range(config.inner_max_iter):
        grad = _gradient_from_eval(features, beta, g, lam) - 1.0 / (t_weight * theta)
        if fixed is not None:
            grad[fixed] = 0.0
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= config.inner_grad_tol:
            break
        # the max() guards against theta**2 underflowing at absurd inits
        curvature = _diag_hessian_from_eval(features, beta, g, lam) + 1.0 / np.maximum(
            t_weight * theta**2, 1e-250
        )
        direction = -grad / curvature
        dmax = float(np.abs(direction).max())
        if dmax > 1e3:  # keep the trial point and slope finite at wild inits
            direction *= 1e3 / dmax
        slope = float(grad @ direction)
        step = 1.0
        accepted = False
        while step * float(np.abs(direction).max()) > 1e-18:
            cand = theta + step * direction
            cand_value, cand_g, cand_lam = _barrier_eval(features, cand, beta, t_weight)
            if cand_value <= value + config.ls_decrease * step * slope:
                decrease = value - cand_value
                theta, value, g, lam = cand, cand_value, cand_g, cand_lam
                accepted = True
                stagnant = stagnant + 1 if decrease <= 1e-12 * (1.0 + abs(value)) else 0
                break
            step *= config.ls_shrink
        iterations += 1
        if not accepted or stagnant >= 3:
            break
    return theta, value, grad_norm, iterations


def fit_user(
    log: EventLog,
    user: int,
    config: FitConfig,
    features: EventFeatures | None = None,
) -> tuple[UserParams, UserFitEntry]:
    """Barrier-method MLE of one user's packed parameters over theta >= 0."""
    if features is None:
        features = build_all_features(log)[user]
    start = time.perf_counter()
    n_dim = features.n_users + features.n_products
    init = config.init_value
    theta = np.full(n_dim, init)
    while not np.isfinite(
        _barrier_value(features, theta, config.beta, config.barrier_t0)
    ):
        init *= 10.0
        theta = np.full(n_dim, init)

    # alpha coordinates with a zero excitation integral never enter the
    # likelihood (their source is silent before the horizon); pin them at a
    # tiny positive value instead of letting the barrier push them upward
    dead = np.concatenate(
        [features.excite_integrals == 0.0, np.zeros(features.n_products, dtype=bool)]
    )
    theta[dead] = 1e-8

    t_weight = config.barrier_t0
    outer = 0
    total_inner = 0
    while True:
        theta, _, _, inner = _minimize_barrier(
            features, theta, config.beta, t_weight, config, fixed=dead
        )
        outer += 1
        total_inner += inner
        if n_dim / t_weight < config.barrier_gap_tol:
            break
        t_weight *= config.barrier_mult

    params = UserParams(theta[: features.n_users], theta[features.n_users :])
    nll = nll_from_features(features, params.alpha_col, params.mu_row, config.beta)
    # KKT certificate: at coordinates pinned to the constraint floor only an
    # outward (negative) NLL gradient counts as unfinished business
    grad = nll_gradient_from_features(features, params.alpha_col, params.mu_row, config.beta)
    pinned = theta <= 1e-6
    grad[pinned] = np.minimum(grad[pinned], 0.0)
    grad[dead] = 0.0
    proj_norm = float(np.linalg.norm(grad))
    converged = proj_norm <= 1e-4 * max(1.0, abs(float(nll)))
    entry = UserFitEntry(
        user=user,
        nll=float(nll),
        outer_iterations=outer,
        inner_iterations=total_inner,
        converged=converged,
        grad_norm=proj_norm,
        wall_time=time.perf_counter() - start,
    )
    return params, entry


def _fit_user_task(args):
    features, user, config = args
    return user, fit_user(None, user, config, features=features)


def default_worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def fit_all(log: EventLog, config: FitConfig) -> tuple[ModelParams, FitReport]:
    """Fit every user; parallel execution matches sequential bit for bit."""
    features = build_all_features(log)
    n, m = log.n_users, log.n_products
    mu = np.zeros((n, m))
    alpha = np.zeros((n, n))
    report = FitReport()
    results: dict[int, tuple[UserParams, UserFitEntry]] = {}
    if config.n_workers > 1:
        tasks = [(features[u], u, config) for u in range(n)]
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            for user, res in pool.map(_fit_user_task, tasks):
                results[user] = res
    else:
        for u in range(n):
            results[u] = fit_user(log, u, config, features=features[u])
    for u in range(n):
        params_u, entry = results[u]
        alpha[:, u] = params_u.alpha_col
        mu[u] = params_u.mu_row
        report.entries.append(entry)
    return ModelParams(mu, alpha, SoftMaxMark(config.beta)), report


def cross_validate_beta(
    log: EventLog,
    grid,
    holdout_fraction: float,
    config: FitConfig | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Pick beta by held-out predictive likelihood on the trailing time window.

    Fits on [0, (1 - holdout) * T) and scores the per-event NLL of the tail
    conditioned on the full head history.  Lowest score wins; ties go to the
    earlier grid entry.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("beta grid must be nonempty")
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in (0, 1)")
    if config is None:
        config = FitConfig()
    if len(grid) == 1:
        return float(grid[0]), [(float(grid[0]), np.nan)]
    t_split = log.horizon * (1.0 - holdout_fraction)
    head_mask = log.times < t_split
    n_tail = int(len(log) - head_mask.sum())
    if head_mask.sum() == 0 or n_tail == 0:
        raise ValueError("degenerate split: empty train head or test tail")
    head = log.before(t_split).with_horizon(t_split)
    scores = []
    best_beta, best_score = None, np.inf
    for beta in grid:
        params, _ = fit_all(head, replace(config, beta=float(beta)))
        score = window_nll(log, params, t_split, log.horizon) / n_tail
        scores.append((float(beta), float(score)))
        if score < best_score:
            best_beta, best_score = float(beta), float(score)
    return best_beta, scores
