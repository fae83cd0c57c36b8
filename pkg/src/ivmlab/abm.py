"""Exact event-driven simulation of the finite-population opinion chain.

Events arrive on a Poisson clock with rate N/2 (inter-event times are
exponential with mean 2/N).  At each ring an ordered pair (listener,
persuader) is drawn uniformly among the N(N-1) ordered pairs; the listener
moves up one opinion step with probability (k + x_persuader)/(2k), otherwise
down, and moves at the boundary are absorbed (the ring is consumed, nothing
changes).  The two unanimous-extreme configurations are absorbing.

Randomness is consumed in a fixed documented order so that a run is a pure
function of its `SimConfig`: the initial sample (when drawn from a pmf) uses
the generator first, then events are drawn in blocks of ``_BLOCK`` as four
arrays (waiting times, listeners, co-indices, uniforms).  Per-trial
generators in ensembles derive from ``(master_seed, trial_index)`` through
`numpy.random.SeedSequence`, so aggregates are independent of scheduling
order and worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import OpinionSpace, Pmf, _freeze

_BLOCK = 4096

LEFT = "left"
RIGHT = "right"


def derive_seed(*parts: int) -> int:
    """64-bit seed derived from an integer key path via `SeedSequence`."""
    ss = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class PopulationState:
    """Opinions of the N agents plus the simulation clock.

    Snapshots taken during a run carry the observation time and the number
    of pair interactions applied up to that time.
    """

    space: OpinionSpace
    opinions: np.ndarray
    time: float = 0.0
    event_count: int = 0

    def __post_init__(self):
        ops = np.asarray(self.opinions, dtype=np.int64)
        if ops.ndim != 1 or len(ops) < 2:
            raise ValueError("need at least 2 agents")
        k = self.space.k
        if ops.min() < -k or ops.max() > k:
            raise ValueError(f"opinions must lie in [-{k}, {k}]")
        self.opinions = ops

    @property
    def n(self) -> int:
        return len(self.opinions)


@dataclass
class SimConfig:
    """Everything a single run depends on.

    ``initial`` is either a `Pmf` (agents drawn i.i.d. from it) or an
    explicit opinion vector.  At least one stopping rule (``horizon`` or
    ``max_events``) must be set; absorption always stops the run early.
    """

    space: OpinionSpace
    n: int
    initial: Pmf | np.ndarray | list
    horizon: float | None = None
    max_events: int | None = None
    seed: int = 0
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 agents, got n={self.n}")
        if self.horizon is None and self.max_events is None:
            raise ValueError("need a stopping rule: horizon or max_events")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.max_events is not None and self.max_events < 1:
            raise ValueError(f"max_events must be >= 1, got {self.max_events}")
        self.snapshot_times = tuple(sorted(float(t) for t in self.snapshot_times))
        if self.snapshot_times and self.snapshot_times[0] < 0:
            raise ValueError("snapshot times must be nonnegative")
        if not isinstance(self.initial, Pmf):
            ops = np.asarray(self.initial, dtype=np.int64)
            if ops.shape != (self.n,):
                raise ValueError(
                    f"explicit initial opinions must have length n={self.n}"
                )
            k = self.space.k
            if ops.min() < -k or ops.max() > k:
                raise ValueError(f"initial opinions must lie in [-{k}, {k}]")
            self.initial = ops


@dataclass
class AbsorptionRecord:
    """How (and whether) a run reached a unanimous extreme.

    ``discrete_steps`` counts embedded-chain steps and ``continuous_time``
    is the clock time of the absorbing event; for runs stopped by a cap or
    the horizon both fields hold the values at the stop and ``absorbed`` is
    False.
    """

    absorbed: bool
    target: str | None
    discrete_steps: int
    continuous_time: float


@dataclass
class SimResult:
    """A single trajectory: requested snapshots, final state, absorption."""

    config: SimConfig
    snapshots: list[PopulationState]
    final: PopulationState
    absorption: AbsorptionRecord


def sample_initial(space: OpinionSpace, n: int, q0: Pmf, seed) -> PopulationState:
    """Draw n i.i.d. opinions from q0 (shifted back to the signed scale).

    ``seed`` may be an integer or an existing `numpy.random.Generator`.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.choice(space.n_states, size=n, p=q0.weights)
    return PopulationState(space, idx.astype(np.int64) - space.k)


def _complete_pair(listener: int, co_index: int) -> int:
    """Map a draw from {0,...,N-2} to a persuader index distinct from the listener."""
    return co_index + (co_index >= listener)


def draw_interaction_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    """One ordered (listener, persuader) pair, uniform over the N(N-1) choices."""
    i = int(rng.integers(n))
    j = _complete_pair(i, int(rng.integers(n - 1)))
    return i, j


def _move(x_listener: int, x_persuader: float, u: float, k: int) -> int:
    """Listener displacement for uniform draw u: +1, -1, or 0 at a boundary."""
    if u < (k + x_persuader) / (2.0 * k):
        return 1 if x_listener < k else 0
    return -1 if x_listener > -k else 0


def step_embedded(state: PopulationState, rng: np.random.Generator) -> PopulationState:
    """One step of the embedded discrete-time chain (no clock advance).

    Draw order: listener, co-index, uniform.  Exactly one coordinate changes,
    by at most one unit.
    """
    i, j = draw_interaction_pair(rng, state.n)
    ops = state.opinions.copy()
    ops[i] += _move(ops[i], ops[j], float(rng.random()), state.space.k)
    return PopulationState(state.space, ops, state.time, state.event_count + 1)


def detect_absorption(state: PopulationState) -> str | None:
    """'left' / 'right' when all agents sit at -k / +k, else None."""
    k = state.space.k
    first = state.opinions[0]
    if first == -k and np.all(state.opinions == -k):
        return LEFT
    if first == k and np.all(state.opinions == k):
        return RIGHT
    return None


def empirical_pmf(state: PopulationState) -> Pmf:
    """Fraction of agents at each opinion, as a `Pmf`."""
    counts = np.bincount(state.opinions + state.space.k, minlength=state.space.n_states)
    return Pmf(state.space, _freeze(counts / state.n))


@dataclass
class _RawRun:
    snapshot_times: list[float]
    snapshot_events: list[int]
    snapshot_counts: list[np.ndarray]
    snapshot_opinions: list[np.ndarray]
    final_opinions: np.ndarray
    final_time: float
    final_events: int
    absorption: AbsorptionRecord


def _run_events(config: SimConfig, keep_opinions: bool) -> _RawRun:
    """Shared event loop; snapshots follow the cadlag convention.

    A snapshot at time s records the state after the last event at or
    before s.  When a run stops at the horizon or the event cap, snapshot
    times still ahead of the clock are dropped (unknowable); after
    absorption the state is constant, so all remaining snapshots record it.
    """
    space = config.space
    k = space.k
    n = config.n
    n_states = space.n_states
    rng = np.random.default_rng(config.seed)

    if isinstance(config.initial, Pmf):
        ops_arr = sample_initial(space, n, config.initial, rng).opinions
    else:
        ops_arr = config.initial.copy()
    ops = ops_arr.tolist()
    counts = np.bincount(ops_arr + k, minlength=n_states).tolist()

    snap_times = list(config.snapshot_times)
    run = _RawRun([], [], [], [], ops_arr, 0.0, 0, AbsorptionRecord(False, None, 0, 0.0))

    def record(s_time: float, events: int):
        run.snapshot_times.append(s_time)
        run.snapshot_events.append(events)
        run.snapshot_counts.append(np.array(counts, dtype=np.int64))
        if keep_opinions:
            run.snapshot_opinions.append(np.array(ops, dtype=np.int64))

    def finish(t: float, events: int, absorption: AbsorptionRecord, flush_all: bool):
        while snap_idx[0] < len(snap_times) and (
            flush_all or snap_times[snap_idx[0]] <= t
        ):
            record(snap_times[snap_idx[0]], events)
            snap_idx[0] += 1
        run.final_opinions = np.array(ops, dtype=np.int64)
        run.final_time = t
        run.final_events = events
        run.absorption = absorption
        return run

    snap_idx = [0]
    target = LEFT if counts[0] == n else (RIGHT if counts[-1] == n else None)
    if target is not None:
        return finish(0.0, 0, AbsorptionRecord(True, target, 0, 0.0), True)

    horizon = config.horizon
    max_events = config.max_events
    scale = 2.0 / n
    two_k = 2.0 * k
    t = 0.0
    events = 0
    while True:
        waits = rng.exponential(scale, size=_BLOCK)
        listeners = rng.integers(0, n, size=_BLOCK)
        co = rng.integers(0, n - 1, size=_BLOCK)
        us = rng.random(size=_BLOCK)
        for e in range(_BLOCK):
            t_next = t + waits[e]
            if horizon is not None and t_next > horizon:
                return finish(horizon, events, AbsorptionRecord(False, None, events, horizon), False)
            while snap_idx[0] < len(snap_times) and snap_times[snap_idx[0]] < t_next:
                record(snap_times[snap_idx[0]], events)
                snap_idx[0] += 1
            i = listeners[e]
            j = _complete_pair(i, co[e])
            xi = ops[i]
            d = _move(xi, ops[j], us[e], k)
            t = t_next
            events += 1
            if d:
                ops[i] = xi + d
                counts[xi + k] -= 1
                counts[xi + d + k] += 1
                if counts[0] == n or counts[-1] == n:
                    target = LEFT if counts[0] == n else RIGHT
                    return finish(t, events, AbsorptionRecord(True, target, events, t), True)
            if max_events is not None and events >= max_events:
                return finish(t, events, AbsorptionRecord(False, None, events, t), False)


def simulate_ctmc(config: SimConfig) -> SimResult:
    """Run the continuous-time chain; a pure function of the config."""
    raw = _run_events(config, keep_opinions=True)
    space = config.space
    snapshots = [
        PopulationState(space, ops, t, ev)
        for t, ev, ops in zip(raw.snapshot_times, raw.snapshot_events, raw.snapshot_opinions)
    ]
    final = PopulationState(space, raw.final_opinions, raw.final_time, raw.final_events)
    return SimResult(config, snapshots, final, raw.absorption)


@dataclass
class ParticlePath:
    """Jump path of a single agent driven by a prescribed mean-opinion curve."""

    space: OpinionSpace
    times: np.ndarray
    opinions: np.ndarray
    end_time: float

    def occupation(self) -> np.ndarray:
        """Time-weighted fraction spent in each state over [0, end_time]."""
        bounds = np.append(self.times, self.end_time)
        durations = np.diff(bounds)
        out = np.zeros(self.space.n_states)
        np.add.at(out, self.opinions + self.space.k, durations)
        return out / self.end_time


def simulate_meanfield_particle(
    space: OpinionSpace,
    q0: Pmf,
    mean_path,
    horizon: float,
    seed: int,
    max_events: int | None = None,
) -> ParticlePath:
    """Simulate the limiting single-agent process against a given mean curve.

    ``mean_path(t)`` must return the population mean on the shifted scale
    (values in [0, 2k]); internally it is recentred to the signed scale.
    Events ring at unit rate; at each ring the particle moves up with
    probability (k + m(t))/(2k), clamped at the boundaries.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    k = space.k
    rng = np.random.default_rng(seed)
    x = int(rng.choice(space.n_states, p=q0.weights)) - k
    times = [0.0]
    states = [x]
    t = 0.0
    events = 0
    while True:
        waits = rng.exponential(1.0, size=_BLOCK)
        us = rng.random(size=_BLOCK)
        for e in range(_BLOCK):
            t_next = t + waits[e]
            if t_next > horizon:
                return ParticlePath(
                    space, np.array(times), np.array(states, dtype=np.int64), horizon
                )
            big_m = float(mean_path(t_next))
            if not 0.0 <= big_m <= 2.0 * k:
                raise ValueError(f"mean path value {big_m!r} outside [0, {2*k}] at t={t_next!r}")
            x += _move(x, big_m - k, us[e], k)
            t = t_next
            events += 1
            times.append(t)
            states.append(x)
            if max_events is not None and events >= max_events:
                return ParticlePath(
                    space, np.array(times), np.array(states, dtype=np.int64), t
                )


@dataclass
class EnsembleStats:
    """Aggregated output of independent trials, keyed by trial seed.

    ``marginals[trial, snap]`` is the empirical distribution at the
    snapshot time (NaN where a capped run never reached it) and
    ``event_counts`` the matching interaction counts.
    """

    space: OpinionSpace
    master_seed: int
    snapshot_times: tuple[float, ...]
    trial_seeds: np.ndarray
    marginals: np.ndarray
    event_counts: np.ndarray
    absorption: list[AbsorptionRecord] = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.trial_seeds)

    def mean_marginals(self) -> np.ndarray:
        return np.nanmean(self.marginals, axis=0)

    def mean_event_counts(self) -> np.ndarray:
        return np.nanmean(self.event_counts, axis=0)

    def absorbed_fraction(self) -> float:
        return sum(r.absorbed for r in self.absorption) / self.trials

    def absorbed_right_fraction(self) -> float:
        return sum(r.target == RIGHT for r in self.absorption) / self.trials


def _trial_config(config: SimConfig, trial_seed: int) -> SimConfig:
    return SimConfig(
        space=config.space,
        n=config.n,
        initial=config.initial,
        horizon=config.horizon,
        max_events=config.max_events,
        seed=trial_seed,
        snapshot_times=config.snapshot_times,
    )


def run_ensemble(config: SimConfig, trials: int, threads: int = 1) -> EnsembleStats:
    """Run independent trials; trial i uses seed derived from (config.seed, i).

    Results are stored by trial index, so the aggregate is identical for any
    worker count.  A single trial reproduces `simulate_ctmc` under the
    derived seed exactly.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    space = config.space
    n_snaps = len(config.snapshot_times)
    seeds = np.array([derive_seed(config.seed, i) for i in range(trials)], dtype=np.uint64)
    marginals = np.full((trials, n_snaps, space.n_states), np.nan)
    event_counts = np.full((trials, n_snaps), np.nan)
    absorption: list[AbsorptionRecord | None] = [None] * trials

    def work(trial: int):
        raw = _run_events(_trial_config(config, int(seeds[trial])), keep_opinions=False)
        for s, (t, ev, counts) in enumerate(
            zip(raw.snapshot_times, raw.snapshot_events, raw.snapshot_counts)
        ):
            marginals[trial, s] = counts / config.n
            event_counts[trial, s] = ev
        absorption[trial] = raw.absorption

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(trials)))
    else:
        for trial in range(trials):
            work(trial)

    return EnsembleStats(
        space=space,
        master_seed=config.seed,
        snapshot_times=config.snapshot_times,
        trial_seeds=seeds,
        marginals=marginals,
        event_counts=event_counts,
        absorption=list(absorption),
    )
