"""Event-driven, bias-free simulation of the finite spiking network.

Between spikes every potential decays as exp(-beta*t) and every calcium
value as exp(-lam*t), so the state is advanced in closed form rather than
time-stepped. Spike times come from Ogata thinning: candidate times are
drawn from a dominating Poisson process and accepted with probability
(true total rate) / (dominating rate).

Two dominating strategies are offered. GLOBAL proposes at N*K, which is
always valid because the rate function is bounded by K. MONOTONE proposes
at the current total rate sum_i phi(U_i), valid for nondecreasing rate
functions since potentials only decay between jumps; it is far cheaper
once activity dies down, because the proposal rate dies with the network.

The per-event work is O(1): a spike adds the same kick alpha*r/N to every
potential, so potentials are stored as an affine map of their initial
values, and calcium is stored per neuron with a last-touch timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import InitSpec, ModelParams, sample_init

GLOBAL = "global"
MONOTONE = "monotone"
STRATEGIES = (GLOBAL, MONOTONE)

#: Whole-network rate bound below which a run is declared extinct. With
#: N*phi(max U) below this, the expected number of further spikes over any
#: horizon up to 1e12 time units is at most one.
RATE_FLOOR = 1e-12

#: Spikes between exact recomputations of the running calcium sum.
REBUILD_EVERY = 1_000_000

DEFAULT_MAX_EVENTS = 100_000

_BLOCK = 8192


class _UniformStream:
    """Blocked uniform draws; exponentials come from the inverse CDF so a
    single stream drives the whole event loop (documented for replay)."""

    __slots__ = ("rng", "block", "buf", "i")

    def __init__(self, rng: np.random.Generator, block: int = _BLOCK):
        self.rng = rng
        self.block = block
        self.buf = None
        self.i = 0

    def uniform(self) -> float:
        if self.block == 1:
            return float(self.rng.random())
        if self.buf is None or self.i >= self.block:
            self.buf = self.rng.random(self.block)
            self.i = 0
        v = self.buf[self.i]
        self.i += 1
        return float(v)


@dataclass(frozen=True)
class Event:
    """One spike: when, who, and the spiker's pre-jump state."""

    time: float
    neuron: int
    r_before: float
    u_before: float


@dataclass
class Trajectory:
    """Observables of one run sampled on a time grid, plus the event log
    (capped at a configurable maximum; ``spike_count`` counts them all)."""

    grid: np.ndarray
    mean_u: np.ndarray
    mean_r: np.ndarray
    events: list
    spike_count: int
    last_spike_time: float
    extinct: bool
    n: int
    snapshots_u: Optional[np.ndarray] = None
    snapshots_r: Optional[np.ndarray] = None


class ParticleState:
    """Lazily decayed network state at a simulation clock.

    Potentials decode as ``u_scale * u_base + u_offset``; decay rescales
    both coefficients and a spike shifts the offset, each in O(1).
    Calcium decodes as ``r_value * exp(-lam*(t - r_stamp))`` per neuron.
    ``r_sum`` tracks the decayed sum of all calcium values incrementally
    and is rebuilt exactly every REBUILD_EVERY spikes to cap float drift.
    """

    __slots__ = (
        "t", "n", "u_base", "u_scale", "u_offset", "r_value", "r_stamp",
        "r_sum", "spike_count", "last_spike_time", "uniform_potentials",
        "_u_base_mean", "_u_base_max", "_events_since_rebuild",
    )

    def __init__(self, u_init: np.ndarray, r_init: np.ndarray, t: float = 0.0):
        u_init = np.ascontiguousarray(u_init, dtype=float)
        r_init = np.ascontiguousarray(r_init, dtype=float)
        if u_init.ndim != 1 or u_init.shape != r_init.shape or u_init.size == 0:
            raise ConfigError("state needs one potential and one calcium value per neuron")
        if np.any(u_init < 0.0) or np.any(r_init < 0.0):
            raise ConfigError("potentials and calcium values must be nonnegative")
        self.t = float(t)
        self.n = u_init.size
        self.u_base = u_init
        self.u_scale = 1.0
        self.u_offset = 0.0
        self.r_value = r_init.copy()
        self.r_stamp = np.full(self.n, float(t))
        self.r_sum = float(r_init.sum())
        self.spike_count = 0
        self.last_spike_time = 0.0
        self.uniform_potentials = bool(np.ptp(u_init) == 0.0)
        self._u_base_mean = float(u_init.mean())
        self._u_base_max = float(u_init.max())
        self._events_since_rebuild = 0

    # -- decoded views ---------------------------------------------------
    def potentials(self) -> np.ndarray:
        return self.u_scale * self.u_base + self.u_offset

    def calcium(self, params: ModelParams) -> np.ndarray:
        return self.r_value * np.exp(-params.lam * (self.t - self.r_stamp))

    def mean_potential(self) -> float:
        return self.u_scale * self._u_base_mean + self.u_offset

    def max_potential(self) -> float:
        return self.u_scale * self._u_base_max + self.u_offset

    def mean_calcium(self) -> float:
        return self.r_sum / self.n

    # -- evolution -------------------------------------------------------
    def advance_to(self, t_new: float, params: ModelParams) -> None:
        """Apply the closed-form decay from the current clock to ``t_new``."""
        dt = t_new - self.t
        if dt < 0.0:
            raise ConfigError("cannot advance the state backwards in time")
        if dt > 0.0:
            du = math.exp(-params.beta * dt)
            self.u_scale *= du
            self.u_offset *= du
            self.r_sum *= math.exp(-params.lam * dt)
            self.t = t_new

    def apply_spike(self, i: int, params: ModelParams) -> tuple[float, float]:
        """Jump map at the current clock: every potential gains
        alpha*r_i/N and the spiker's calcium jumps by one. Returns the
        spiker's pre-jump (r, u)."""
        rb = float(self.r_value[i]) * math.exp(-params.lam * (self.t - float(self.r_stamp[i])))
        ub = self.u_scale * float(self.u_base[i]) + self.u_offset
        self.u_offset += params.alpha * rb / self.n
        self.r_value[i] = rb + 1.0
        self.r_stamp[i] = self.t
        self.r_sum += 1.0
        self.spike_count += 1
        self.last_spike_time = self.t
        self._events_since_rebuild += 1
        if self._events_since_rebuild >= REBUILD_EVERY:
            self.rebuild(params)
        return rb, ub

    def rebuild(self, params: ModelParams) -> None:
        """Recompute the running aggregates exactly from the decoded state."""
        self.r_sum = float(self.calcium(params).sum())
        self._events_since_rebuild = 0


def init_state(n: int, init: InitSpec, rng: np.random.Generator) -> ParticleState:
    """Fresh state at t=0 with the requested initial law."""
    if n < 1:
        raise ConfigError(f"need at least one neuron, got n={n}")
    u0, r0 = sample_init(init, int(n), rng)
    return ParticleState(u0, r0)


def _check_strategy(strategy: str, params: ModelParams) -> None:
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == MONOTONE and not params.rate.is_nondecreasing:
        raise ConfigError("the monotone strategy requires a nondecreasing rate function")


def _run_segment(
    state: ParticleState,
    params: ModelParams,
    stop: float,
    strategy: str,
    draws: _UniformStream,
    phi,
    events: Optional[list],
    max_events: int,
    rate_floor: float,
    first_only: bool = False,
) -> Optional[Event]:
    """Thinning loop from the state clock up to ``stop``.

    Processes every accepted spike on the way (appending to ``events``
    while below ``max_events``); with ``first_only`` it returns right
    after the first accepted spike instead. Returns the last accepted
    event, or None when the segment ends at ``stop`` (including the case
    where the whole-network rate bound fell below ``rate_floor`` and the
    remaining stretch was fast-forwarded in one exact decay).

    State scalars are mirrored into locals for the duration of the loop
    and written back on every exit path.
    """
    n = state.n
    alpha, beta, lam = params.alpha, params.beta, params.lam
    monotone = strategy == MONOTONE
    global_bar = n * params.rate.bound
    uniform_u = state.uniform_potentials
    rate_vec = params.rate
    u_base = state.u_base
    u_base_mean = state._u_base_mean
    u_base_max = state._u_base_max
    r_value = state.r_value
    r_stamp = state.r_stamp
    uni = draws.uniform
    exp = math.exp
    log1p = math.log1p

    t = state.t
    u_scale = state.u_scale
    u_offset = state.u_offset
    r_sum = state.r_sum
    spike_count = state.spike_count
    last_spike = state.last_spike_time
    since_rebuild = state._events_since_rebuild
    last_event: Optional[Event] = None

    def sync() -> None:
        state.t = t
        state.u_scale = u_scale
        state.u_offset = u_offset
        state.r_sum = r_sum
        state.spike_count = spike_count
        state.last_spike_time = last_spike
        state._events_since_rebuild = since_rebuild

    # rates at the current clock; reused across rejected candidates (pure
    # decay in between keeps them exact), refreshed after every jump
    refresh = True
    total_now = 0.0
    while True:
        if refresh:
            if uniform_u:
                total_now = n * phi(u_scale * u_base_mean + u_offset)
            else:
                total_now = float(np.asarray(rate_vec(u_scale * u_base + u_offset)).sum())
            refresh = False
        if uniform_u:
            ceiling = total_now
        else:
            ceiling = n * phi(u_scale * u_base_max + u_offset)
        if ceiling < rate_floor:
            d = exp(-beta * (stop - t))
            u_scale *= d
            u_offset *= d
            r_sum *= exp(-lam * (stop - t))
            t = stop
            sync()
            return None
        bar = total_now if monotone else global_bar
        t_cand = t - log1p(-uni()) / bar
        if t_cand > stop:
            d = exp(-beta * (stop - t))
            u_scale *= d
            u_offset *= d
            r_sum *= exp(-lam * (stop - t))
            t = stop
            sync()
            return None
        d = exp(-beta * (t_cand - t))
        u_scale *= d
        u_offset *= d
        r_sum *= exp(-lam * (t_cand - t))
        t = t_cand
        if uniform_u:
            rates_cand = None
            total_cand = n * phi(u_scale * u_base_mean + u_offset)
        else:
            rates_cand = np.asarray(rate_vec(u_scale * u_base + u_offset))
            total_cand = float(rates_cand.sum())
        if uni() * bar > total_cand:
            # rejected: the freshly computed rates describe the new clock
            total_now = total_cand
            continue
        v = uni()
        if rates_cand is None:
            i = min(int(v * n), n - 1)
        else:
            # smallest i with cumulative rate >= v * total (ties break low)
            i = min(int(np.searchsorted(np.cumsum(rates_cand), v * total_cand, side="left")), n - 1)
        rb = float(r_value[i]) * exp(-lam * (t - float(r_stamp[i])))
        if first_only or (events is not None and len(events) < max_events):
            ub = u_scale * float(u_base[i]) + u_offset
            last_event = Event(time=t, neuron=i, r_before=rb, u_before=ub)
            if events is not None and len(events) < max_events:
                events.append(last_event)
        u_offset += alpha * rb / n
        r_value[i] = rb + 1.0
        r_stamp[i] = t
        r_sum += 1.0
        spike_count += 1
        last_spike = t
        since_rebuild += 1
        refresh = True
        if since_rebuild >= REBUILD_EVERY:
            sync()
            state.rebuild(params)
            r_sum = state.r_sum
            since_rebuild = 0
        if first_only:
            sync()
            return last_event


def next_event(state: ParticleState, params: ModelParams, horizon: float,
               rng: np.random.Generator, strategy: str = MONOTONE) -> Optional[Event]:
    """Advance the state through the next accepted spike at time <= horizon.

    Returns None with the state advanced to ``horizon`` when no spike is
    accepted before it. Candidate draws consume the generator one uniform
    at a time (inter-arrival via inverse CDF, then acceptance, then
    neuron selection).
    """
    if state.t > horizon:
        raise ConfigError("state clock is already past the horizon")
    _check_strategy(strategy, params)
    return _run_segment(state, params, horizon, strategy, _UniformStream(rng, block=1),
                        params.rate.scalar_fn(), events=None, max_events=0,
                        rate_floor=RATE_FLOOR, first_only=True)


def total_rate_bound(state: ParticleState, params: ModelParams) -> float:
    """Upper bound N * phi(max potential) on the whole-network spike rate."""
    return state.n * params.rate.value(max(state.max_potential(), 0.0))


def simulate(
    params: ModelParams,
    n: int,
    init: InitSpec,
    horizon: float,
    grid=None,
    strategy: str = MONOTONE,
    seed=None,
    *,
    snapshots: bool = False,
    max_events: int = DEFAULT_MAX_EVENTS,
    rate_floor: float = RATE_FLOOR,
) -> Trajectory:
    """Run the network to ``horizon`` recording observables on a grid.

    ``grid`` is a point count (linspace over [0, horizon], 201 default) or
    an array of times in [0, horizon]. Observables at grid times are
    decoded with a single closed-form decay from the last event, so the
    sampling introduces no discretisation error. The run is declared
    extinct as soon as N*phi(max U) falls below ``rate_floor``; the state
    is then decayed through the remaining grid exactly.

    Deterministic: a given (seed, configuration) reproduces the event log
    bit for bit.
    """
    if not horizon > 0.0:
        raise ConfigError(f"horizon must be positive, got {horizon!r}")
    _check_strategy(strategy, params)
    if grid is None:
        grid = 201
    if np.isscalar(grid):
        grid = np.linspace(0.0, horizon, int(grid))
    else:
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) < 0.0) or (grid.size and (grid[0] < 0.0 or grid[-1] > horizon)):
            raise ConfigError("grid must be sorted and lie within [0, horizon]")
    rng = np.random.default_rng(seed)
    state = init_state(n, init, rng)
    draws = _UniformStream(rng, _BLOCK)
    phi = params.rate.scalar_fn()
    beta, lam = params.beta, params.lam

    m = len(grid)
    mean_u = np.empty(m)
    mean_r = np.empty(m)
    snap_u = np.empty((m, state.n)) if snapshots else None
    snap_r = np.empty((m, state.n)) if snapshots else None
    events: list[Event] = []

    def record(g: int) -> None:
        """Read-only decode of the state at grid[g] >= state.t."""
        dt = grid[g] - state.t
        fu = math.exp(-beta * dt)
        fr = math.exp(-lam * dt)
        mean_u[g] = fu * state.mean_potential()
        mean_r[g] = fr * state.r_sum / state.n
        if snapshots:
            snap_u[g] = fu * state.potentials()
            snap_r[g] = fr * state.calcium(params)

    g = 0
    while g < m and grid[g] <= state.t:
        record(g)
        g += 1
    extinct = False
    event_sink = events if max_events > 0 else None
    while True:
        if total_rate_bound(state, params) < rate_floor:
            extinct = True
            break
        next_stop = grid[g] if g < m else horizon
        _run_segment(state, params, next_stop, strategy, draws, phi,
                     event_sink, max_events, rate_floor)
        while g < m and grid[g] <= state.t:
            record(g)
            g += 1
        if g >= m and state.t >= horizon:
            # the floor may have been crossed inside the final segment
            extinct = total_rate_bound(state, params) < rate_floor
            break
    if extinct:
        while g < m:
            record(g)
            g += 1
    return Trajectory(
        grid=grid,
        mean_u=mean_u,
        mean_r=mean_r,
        events=events,
        spike_count=state.spike_count,
        last_spike_time=state.last_spike_time if state.spike_count else 0.0,
        extinct=extinct,
        n=state.n,
        snapshots_u=snap_u,
        snapshots_r=snap_r,
    )


def extinction_time(trajectory: Trajectory) -> tuple[float, bool]:
    """Last spike time of a run and whether it hit the extinction cutoff
    before the horizon (0.0 when the run never spiked)."""
    return trajectory.last_spike_time, trajectory.extinct


@dataclass(frozen=True)
class ObservableFunction:
    """Test function f(u, r) on the full state with exact partials.

    ``value(u, r)`` returns a float; ``du(u, r)`` and ``dr(u, r)`` return
    the arrays of partial derivatives with respect to each potential and
    each calcium value (exact for polynomials, which the harness uses).
    """

    value: callable
    du: callable
    dr: callable


def generator_apply(f: ObservableFunction, state: ParticleState, params: ModelParams) -> float:
    """Evaluate the Markov generator on ``f`` at the decoded state:

        A f(u, r) = -sum_i (beta*u_i df/du_i + lam*r_i df/dr_i)
                    + sum_i phi(u_i) [f(jump_i(u, r)) - f(u, r)]

    where jump_i adds alpha*r_i/N to every potential and one unit to the
    spiker's calcium.
    """
    u = state.potentials()
    r = state.calcium(params)
    n = state.n
    rates = np.asarray(params.rate(u))
    drift_part = -float(np.sum(params.beta * u * np.asarray(f.du(u, r)))) \
        - float(np.sum(params.lam * r * np.asarray(f.dr(u, r))))
    base = float(f.value(u, r))
    jump_part = 0.0
    for i in range(n):
        if rates[i] == 0.0:
            continue
        u_post = u + params.alpha * r[i] / n
        r_post = r.copy()
        r_post[i] += 1.0
        jump_part += float(rates[i]) * (float(f.value(u_post, r_post)) - base)
    return drift_part + jump_part
