"""Quantitative comparisons between the stochastic and deterministic layers.

Distances between distributions, empirical large-population scaling,
exponential-rate fitting for the proven decay bounds, and classification of
initial profiles by the consensus they are driven to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .abm import SimConfig, derive_seed, run_ensemble
from .core import OpinionSpace, Pmf, is_symmetric, mean_opinion
from .meanfield import OdeTrajectory, integrate_rk4


def w1_weights(a: np.ndarray, b: np.ndarray) -> float:
    """First Wasserstein distance between weight vectors on the integer line."""
    c = np.cumsum(a - b)
    return float(np.sum(np.abs(c[:-1])))


def wasserstein1(p: Pmf, q: Pmf) -> float:
    """W1 between two distributions on the same opinion space.

    On a one-dimensional integer support this is the sum of absolute CDF
    differences; it is a metric (the minimal-transport formulation agrees,
    see the verification harness for the cross-check).
    """
    if p.space != q.space:
        raise ValueError(f"opinion spaces differ: k={p.space.k} vs k={q.space.k}")
    return w1_weights(p.weights, q.weights)


@dataclass
class RateFit:
    """Least-squares exponential fit y ~ exp(log_intercept - rate * t)."""

    rate: float
    log_intercept: float
    r_squared: float
    window: tuple[float, float]


def fit_exponential_rate(times, values, window: tuple[float, float]) -> RateFit:
    """Fit log(values) linearly over the time window.

    Requires at least 10 samples inside the window, all positive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (times >= lo) & (times <= hi)
    if int(mask.sum()) < 10:
        raise ValueError(f"window [{lo}, {hi}] holds {int(mask.sum())} samples, need >= 10")
    y = values[mask]
    if np.any(y <= 0.0):
        raise ValueError(f"nonpositive values inside window [{lo}, {hi}]")
    t = times[mask]
    logs = np.log(y)
    slope, intercept = np.polyfit(t, logs, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return RateFit(-float(slope), float(intercept), r_squared, (float(lo), float(hi)))


def consensus_gap_series(traj: OdeTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Distance of the mean from the nearer consensus value, per grid point.

    Defined for k=1, where the gap min(2 - M, M) controls the proven
    exponential approach to consensus.
    """
    if traj.space.k != 1:
        raise ValueError(f"gap series is defined for k=1, got k={traj.space.k}")
    gaps = np.minimum(2.0 - traj.means, traj.means)
    return traj.times, gaps


def rate_window_start(traj: OdeTrajectory, margin: float = 0.05) -> float | None:
    """Default fit-window start: first grid time with the mean outside
    [1 - margin, 2k - 1 + margin]; None when the mean never leaves it."""
    lo = 1.0 - margin
    hi = 2.0 * traj.space.k - 1.0 + margin
    outside = (traj.means < lo) | (traj.means > hi)
    idx = np.flatnonzero(outside)
    return float(traj.times[idx[0]]) if len(idx) else None


@dataclass
class EnvelopeFit:
    """Fitted envelope value <= C * exp(-rate * t) valid from the onset time.

    ``peak_fraction`` locates the grid position where value * exp(rate t)
    peaks; a peak well inside the grid certifies that the series genuinely
    decays at least at ``rate`` from the onset onward (a peak at the end
    would mean the constant is still growing).
    """

    constant: float
    onset: float
    rate: float
    peak_fraction: float


def fit_decay_envelope(times, values, rate: float) -> EnvelopeFit:
    """Fit (C, T) such that values <= C exp(-rate t) holds on the whole grid,
    with T the time where the compensated series values * exp(rate t) peaks."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    compensated = values * np.exp(rate * times)
    idx = int(np.argmax(compensated))
    return EnvelopeFit(
        constant=float(compensated[idx]),
        onset=float(times[idx]),
        rate=float(rate),
        peak_fraction=idx / max(len(times) - 1, 1),
    )


def envelope_holds(times, values, fit: EnvelopeFit, slack: float = 1e-12) -> bool:
    """Pointwise check values(t) <= C exp(-rate t) for grid times >= onset."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = times >= fit.onset
    bound = fit.constant * np.exp(-fit.rate * times[mask]) * (1.0 + slack)
    return bool(np.all(values[mask] <= bound))


LABEL_LEFT = "left"
LABEL_RIGHT = "right"
LABEL_SYMMETRIC = "symmetric"
LABEL_CONJECTURED_LEFT = "conjectured_left"
LABEL_CONJECTURED_RIGHT = "conjectured_right"
LABEL_UNKNOWN = "unknown"


@dataclass(frozen=True)
class BasinVerdict:
    """Which consensus (if any) an initial profile is known or expected to reach."""

    label: str
    reason: str


def classify_basin(q0: Pmf) -> BasinVerdict:
    """Classify an initial profile by proven conditions first, conjectures second.

    Proven: mean above 2k-1 (right consensus), mean below 1 (left consensus),
    exact symmetry (uniform equilibrium).  Conjectured: support confined to
    one half of the opinion range, labelled but never asserted as a theorem.
    """
    k = q0.space.k
    m = mean_opinion(q0)
    w = q0.weights
    if m > 2.0 * k - 1.0:
        return BasinVerdict(LABEL_RIGHT, f"mean {m:.6g} above 2k-1={2*k-1}: proven right basin")
    if m < 1.0:
        return BasinVerdict(LABEL_LEFT, f"mean {m:.6g} below 1: proven left basin")
    if is_symmetric(q0, 1e-12):
        return BasinVerdict(LABEL_SYMMETRIC, "symmetric profile: converges to the uniform equilibrium")
    if float(w[k + 1 :].sum()) <= 1e-12 and w[k] < 1.0:
        return BasinVerdict(
            LABEL_CONJECTURED_LEFT,
            "support confined to the lower half (conjectured; not proven)",
        )
    if float(w[:k].sum()) <= 1e-12 and w[k] < 1.0:
        return BasinVerdict(
            LABEL_CONJECTURED_RIGHT,
            "support confined to the upper half (conjectured; not proven)",
        )
    return BasinVerdict(LABEL_UNKNOWN, "no proven or conjectured condition applies")


def verify_against_equilibrium(
    traj: OdeTrajectory, target: Pmf, min_horizon: float = 0.0
) -> float:
    """Max-norm distance between the final grid state and a target distribution."""
    if traj.times[-1] < min_horizon:
        raise ValueError(
            f"trajectory ends at t={traj.times[-1]:g}, required horizon {min_horizon:g}"
        )
    return float(np.max(np.abs(traj.weights[-1] - target.weights)))


@dataclass
class PocRow:
    """Mean single-site W1 between empirical and limiting marginals."""

    n: int
    t: float
    w1_mean: float
    w1_stderr: float
    trials: int


@dataclass
class PocResult:
    """Scaling table of the empirical-marginal W1 against population size.

    The distance measured is the single-site marginal W1 (empirical
    distribution of one run versus the limiting distribution), which lower
    bounds the full-configuration coupling distance by exchangeability and
    is the computable surrogate reported here.
    """

    space: OpinionSpace
    q0: Pmf
    n_list: tuple[int, ...]
    t_list: tuple[float, ...]
    trials: int
    seed: int
    rows: list[PocRow]
    slopes: dict[float, float]

    def slope_at(self, t: float) -> float:
        return self.slopes[float(t)]


def poc_experiment(
    space: OpinionSpace,
    q0: Pmf,
    n_list,
    t_list,
    trials: int,
    seed: int,
    dt: float = 0.01,
    threads: int = 1,
) -> PocResult:
    """Estimate how fast empirical marginals approach the deterministic limit.

    For each population size, ``trials`` independent runs start i.i.d. from
    q0; at each requested time the W1 distance between the run's empirical
    marginal and the integrated limit is averaged over trials.  The log-log
    slope of the mean distance against N (per time) is the scaling estimate;
    the expected order is -1/2.
    """
    n_list = tuple(int(n) for n in n_list)
    t_list = tuple(float(t) for t in t_list)
    if len(n_list) < 2:
        raise ValueError("need at least two population sizes for a slope")
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    horizon = max(max(t_list), dt)  # t=0 alone still needs one step to integrate
    traj = integrate_rk4(q0, dt=dt, horizon=horizon)
    targets = {t: traj.weights[traj.index_at(t)] for t in t_list}

    rows = []
    means = np.empty((len(n_list), len(t_list)))
    for ni, n in enumerate(n_list):
        config = SimConfig(
            space=space,
            n=n,
            initial=q0,
            horizon=horizon,
            seed=derive_seed(seed, n),
            snapshot_times=t_list,
        )
        stats = run_ensemble(config, trials, threads=threads)
        for ti, t in enumerate(t_list):
            dists = np.array(
                [w1_weights(stats.marginals[trial, ti], targets[t]) for trial in range(trials)]
            )
            mean = float(dists.mean())
            stderr = float(dists.std(ddof=1) / math.sqrt(trials))
            rows.append(PocRow(n, t, mean, stderr, trials))
            means[ni, ti] = mean

    slopes = {}
    log_n = np.log(np.array(n_list, dtype=float))
    for ti, t in enumerate(t_list):
        slope = float(np.polyfit(log_n, np.log(means[:, ti]), 1)[0])
        slopes[t] = slope
    return PocResult(space, q0, n_list, t_list, trials, seed, rows, slopes)
