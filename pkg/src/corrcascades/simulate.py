"""Exact sampling by Ogata thinning, the incentivization scenario, and
event-stream summaries (market share, binned intensity).

The dominating rate is refreshed at every proposal from the current total
intensity, which is a valid bound because every intensity only decays
between events under the exponential kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Event, EventLog
from .model import (
    DecayState,
    MarkModel,
    ModelParams,
    branching_column_sums,
    mark_density_from_tendencies,
)


class SubcriticalityWarning(UserWarning):
    """Some user's total incoming influence is >= 1: the cascade may explode."""


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    seed: int
    initial_history: EventLog | None = None
    max_events: int = 10_000_000

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.max_events <= 0:
            raise ValueError("max_events must be positive")


@dataclass(frozen=True)
class Scenario:
    """Mid-run incentivization: boost one product's baselines, swap marks."""

    switch_time: float
    boosted_product: int
    boost_factor: float = 2.0
    pre_switch_mark: MarkModel = None
    post_switch_mark: MarkModel = None

    def __post_init__(self):
        if self.switch_time <= 0:
            raise ValueError("switch_time must be positive")
        if self.boost_factor <= 0:
            raise ValueError("boost_factor must be positive")


@dataclass
class ScenarioResult:
    log: EventLog
    switch_time: float
    boosted_product: int
    n_pre_switch_events: int
    cap_exhausted: bool = False


def _check_subcritical(params: ModelParams) -> None:
    rho = branching_column_sums(params).max() if params.n_users else 0.0
    if rho >= 1.0:
        warnings.warn(
            f"max incoming influence {rho:.3f} >= 1: simulation may not be stationary",
            SubcriticalityWarning,
            stacklevel=3,
        )


def _thinning_schedule(schedule, state: DecayState, rng, events: list, cap: int) -> bool:
    """Run Ogata thinning over consecutive (end_time, params) segments.

    An in-flight proposal is carried across a segment boundary whenever the
    refreshed bound under the new parameters does not exceed the bound it
    was drawn against; a no-op boundary therefore consumes exactly the same
    random stream as an unsegmented run.  Returns True if the event cap was
    exhausted before the final horizon.
    """
    pending_time = None
    pending_bound = None
    for seg_end, params in schedule:
        mu_user = params.mu.sum(axis=1)
        mu_total = float(mu_user.sum())
        row_sums = params.alpha.sum(axis=1)
        if pending_time is not None:
            bound_here = mu_total + float(row_sums @ state.b_total)
            if bound_here <= pending_bound:
                pass  # carried proposal still dominated; keep it
            else:
                pending_time = None
        while True:
            s = state.current_time
            if pending_time is None:
                lam_bar = mu_total + float(row_sums @ state.b_total)
                if lam_bar <= 0.0:
                    state.advance(seg_end)
                    break
                t_prop = s + rng.exponential(1.0 / lam_bar)
            else:
                t_prop, lam_bar = pending_time, pending_bound
                pending_time = None
            if t_prop >= seg_end:
                state.advance(seg_end)
                pending_time, pending_bound = t_prop, lam_bar
                break
            decay = math.exp(-(t_prop - s))
            lam_total = mu_total + decay * float(row_sums @ state.b_total)
            if rng.uniform() * lam_bar <= lam_total:
                state.advance(t_prop)
                lam_users = mu_user + params.alpha.T @ state.b_total
                cum = np.cumsum(lam_users)
                u = int(np.searchsorted(cum, rng.uniform() * cum[-1], side="right"))
                u = min(u, len(lam_users) - 1)
                g = params.mu[u] + params.alpha[:, u] @ state.b
                density = mark_density_from_tendencies(g, params.mark)
                p = int(np.searchsorted(np.cumsum(density), rng.uniform(), side="right"))
                p = min(p, params.n_products - 1)
                state.b[u, p] += 1.0
                events.append((t_prop, u, p))
                if len(events) >= cap:
                    return True
            else:
                state.advance(t_prop)
    return False


def _absorb_history(state: DecayState, history: EventLog) -> None:
    for t, u, p in zip(history.times, history.users, history.products):
        state.advance(float(t))
        state.b[u, p] += 1.0


def simulate(params: ModelParams, config: SimConfig) -> EventLog:
    """Sample the process on [0, horizon]; returns only newly generated events.

    With `initial_history` set, its events are absorbed at their recorded
    times first and generation starts from the later of 0 and the last
    history time.
    """
    _check_subcritical(params)
    state = DecayState(params.n_users, params.n_products)
    if config.initial_history is not None:
        _absorb_history(state, config.initial_history)
        state.current_time = max(0.0, state.current_time)
    rng = np.random.default_rng(config.seed)
    events: list = []
    exhausted = _thinning_schedule(
        [(config.horizon, params)], state, rng, events, config.max_events
    )
    if exhausted:
        warnings.warn(
            f"event cap {config.max_events} exhausted at t={events[-1][0]:.3f}; log is partial",
            RuntimeWarning,
            stacklevel=2,
        )
    return EventLog(events, config.horizon, params.n_users, params.n_products)


def run_scenario(params: ModelParams, scenario: Scenario, config: SimConfig) -> ScenarioResult:
    """Simulate with a mid-run baseline boost and mark-model switch.

    The decay state and the random stream both carry across the switch, so a
    no-op scenario (boost 1, identical marks) reproduces `simulate` exactly.
    """
    if not 0 < scenario.switch_time < config.horizon:
        raise ValueError("switch_time must fall inside (0, horizon)")
    if not 0 <= scenario.boosted_product < params.n_products:
        raise IndexError("boosted product out of range")
    pre_mark = scenario.pre_switch_mark if scenario.pre_switch_mark is not None else params.mark
    post_mark = scenario.post_switch_mark if scenario.post_switch_mark is not None else params.mark
    pre_params = ModelParams(params.mu, params.alpha, pre_mark)
    boosted_mu = params.mu.copy()
    boosted_mu[:, scenario.boosted_product] *= scenario.boost_factor
    post_params = ModelParams(boosted_mu, params.alpha, post_mark)
    _check_subcritical(post_params)

    state = DecayState(params.n_users, params.n_products)
    if config.initial_history is not None:
        _absorb_history(state, config.initial_history)
        state.current_time = max(0.0, state.current_time)
    rng = np.random.default_rng(config.seed)
    events: list = []
    exhausted = _thinning_schedule(
        [(scenario.switch_time, pre_params), (config.horizon, post_params)],
        state,
        rng,
        events,
        config.max_events,
    )
    n_pre = sum(1 for t, _, _ in events if t < scenario.switch_time)
    log = EventLog(events, config.horizon, params.n_users, params.n_products)
    return ScenarioResult(
        log=log,
        switch_time=scenario.switch_time,
        boosted_product=scenario.boosted_product,
        n_pre_switch_events=n_pre,
        cap_exhausted=exhausted,
    )


def market_share(log: EventLog, grid) -> list:
    """Cumulative per-product share N^p(0, t] / sum_q N^q(0, t] on a time grid.

    NaN wherever no event has happened yet.  Returns one CurveSeries per
    product.
    """
    from .metrics import CurveSeries

    grid = np.asarray(grid, dtype=float)
    total = np.searchsorted(log.times, grid, side="right").astype(float)
    out = []
    for p in range(log.n_products):
        t_p = log.times[log.products == p]
        counts = np.searchsorted(t_p, grid, side="right").astype(float)
        values = np.where(total > 0, counts / np.maximum(total, 1.0), np.nan)
        out.append(CurveSeries(grid=grid, values=values, label=f"product_{p}"))
    return out


def _bin_edges(horizon: float, bin_width: float) -> np.ndarray:
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    n_full = int(math.floor(horizon / bin_width + 1e-12))
    edges = [i * bin_width for i in range(n_full + 1)]
    if edges[-1] < horizon:
        edges.append(horizon)
    if len(edges) < 2:
        edges = [0.0, horizon]
    return np.asarray(edges)


def binned_intensity(log: EventLog, bin_width: float, by_product: bool = False):
    """Event counts per bin divided by bin width (the empirical intensity).

    The last partial bin is normalized by its true width.  With
    `by_product`, returns one CurveSeries per product whose values sum to
    the pooled series exactly.
    """
    from .metrics import CurveSeries

    edges = _bin_edges(log.horizon, bin_width)
    widths = np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    per_product = []
    for p in range(log.n_products):
        counts, _ = np.histogram(log.times[log.products == p], bins=edges)
        per_product.append(
            CurveSeries(grid=centers, values=counts / widths, label=f"product_{p}")
        )
    if by_product:
        return per_product
    total = np.sum([s.values for s in per_product], axis=0)
    return CurveSeries(grid=centers, values=total, label="all_products")


def rescaled_interevent_times(log: EventLog, params: ModelParams) -> np.ndarray:
    """Integral of the total intensity over each interevent gap of the pooled log.

    Under the generating model these are iid Exponential(1) by the random
    time-change theorem.
    """
    mu_total = float(params.mu_user.sum())
    row_sums = params.alpha.sum(axis=1)
    state = DecayState(params.n_users, params.n_products)
    gaps = []
    prev = 0.0
    for t, u, p in zip(log.times, log.users, log.products):
        delta = float(t) - prev
        s_excite = float(row_sums @ state.b_total)
        gaps.append(mu_total * delta + s_excite * (1.0 - math.exp(-delta)))
        state.advance(float(t))
        state.b[u, p] += 1.0
        prev = float(t)
    return np.asarray(gaps)
