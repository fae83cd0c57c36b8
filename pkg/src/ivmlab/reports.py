"""Delimited and JSON report emission, with parsers that round-trip exactly.

Reals are written with 17 significant digits and a '.' decimal point, so
every emitted value re-parses to the identical float64; rows end with a
bare newline regardless of platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abm import AbsorptionRecord, EnsembleStats
from .analysis import PocResult, PocRow, RateFit
from .meanfield import OdeTrajectory


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_rows(path, expected_header: list[str]) -> list[list[str]]:
    with open(path, "r", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if header != expected_header:
        raise ValueError(f"{path}: header {header} != expected {expected_header}")
    return [line.split(",") for line in lines[1:] if line]


def q_columns(n_states: int) -> list[str]:
    return [f"q_{i}" for i in range(n_states)]


# --- deterministic trajectories -------------------------------------------

def write_ode_csv(path, traj: OdeTrajectory) -> None:
    """Columns t,q_0,...,q_{2k},M — one row per grid point."""
    header = ["t"] + q_columns(traj.space.n_states) + ["M"]
    rows = (
        [fmt(traj.times[i])] + [fmt(x) for x in traj.weights[i]] + [fmt(traj.means[i])]
        for i in range(len(traj))
    )
    _write_rows(path, header, rows)


@dataclass
class OdeTable:
    times: np.ndarray
    weights: np.ndarray
    means: np.ndarray


def read_ode_csv(path) -> OdeTable:
    with open(path, "r", newline="") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    if header[0] != "t" or header[-1] != "M":
        raise ValueError(f"{path}: not an ODE table header: {header}")
    n_states = len(header) - 2
    if header[1 : 1 + n_states] != q_columns(n_states):
        raise ValueError(f"{path}: unexpected weight columns in {header}")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:] if line])
    return OdeTable(data[:, 0], data[:, 1 : 1 + n_states], data[:, -1])


# --- stochastic trajectories -----------------------------------------------

def write_trajectory_csv(path, times, event_counts, marginals) -> None:
    """Columns t,event_count,q_0,...,q_{2k} — empirical marginal snapshots.

    For ensembles the rows carry trial means, so event_count may be
    fractional.
    """
    marginals = np.asarray(marginals, dtype=float)
    header = ["t", "event_count"] + q_columns(marginals.shape[1])
    rows = (
        [fmt(t), fmt(ev)] + [fmt(x) for x in marg]
        for t, ev, marg in zip(times, event_counts, marginals)
    )
    _write_rows(path, header, rows)


@dataclass
class TrajectoryTable:
    times: np.ndarray
    event_counts: np.ndarray
    marginals: np.ndarray


def read_trajectory_csv(path) -> TrajectoryTable:
    with open(path, "r", newline="") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    if header[:2] != ["t", "event_count"]:
        raise ValueError(f"{path}: not a trajectory header: {header}")
    n_states = len(header) - 2
    if header[2:] != q_columns(n_states):
        raise ValueError(f"{path}: unexpected weight columns in {header}")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:] if line])
    if data.size == 0:
        data = data.reshape(0, len(header))
    return TrajectoryTable(data[:, 0], data[:, 1], data[:, 2:])


def ensemble_trajectory(stats: EnsembleStats):
    """Snapshot times, mean event counts, and mean marginals of an ensemble."""
    return (
        np.asarray(stats.snapshot_times),
        stats.mean_event_counts(),
        stats.mean_marginals(),
    )


# --- absorption --------------------------------------------------------------

_ABSORPTION_HEADER = ["trial", "absorbed", "target", "steps", "time"]


def write_absorption_csv(path, records: list[AbsorptionRecord]) -> None:
    rows = (
        [
            str(trial),
            "true" if rec.absorbed else "false",
            rec.target or "",
            str(rec.discrete_steps),
            fmt(rec.continuous_time),
        ]
        for trial, rec in enumerate(records)
    )
    _write_rows(path, _ABSORPTION_HEADER, rows)


def read_absorption_csv(path) -> list[AbsorptionRecord]:
    rows = _read_rows(path, _ABSORPTION_HEADER)
    records = []
    for trial, absorbed, target, steps, time in rows:
        records.append(
            AbsorptionRecord(absorbed == "true", target or None, int(steps), float(time))
        )
    return records


# --- single-particle paths ------------------------------------------------------

_PARTICLE_HEADER = ["t", "opinion"]


def write_particle_csv(path, times, opinions) -> None:
    rows = ([fmt(t), str(int(x))] for t, x in zip(times, opinions))
    _write_rows(path, _PARTICLE_HEADER, rows)


def read_particle_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_rows(path, _PARTICLE_HEADER)
    times = np.array([float(t) for t, _ in rows])
    opinions = np.array([int(x) for _, x in rows], dtype=np.int64)
    return times, opinions


# --- basin verdicts ----------------------------------------------------------------

@dataclass
class BasinRow:
    label: str
    reason: str
    mean: float
    weights: np.ndarray


def write_basin_csv(path, label: str, reason: str, mean: float, weights) -> None:
    weights = np.asarray(weights, dtype=float)
    header = ["label", "reason", "M"] + q_columns(len(weights))
    row = [label, reason, fmt(mean)] + [fmt(x) for x in weights]
    _write_rows(path, header, [row])


def read_basin_csv(path) -> BasinRow:
    with open(path, "r", newline="") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    if header[:3] != ["label", "reason", "M"]:
        raise ValueError(f"{path}: not a basin header: {header}")
    parts = lines[1].split(",")
    return BasinRow(
        parts[0], parts[1], float(parts[2]), np.array([float(x) for x in parts[3:]])
    )


# --- scaling experiment -------------------------------------------------------

_POC_HEADER = ["N", "t", "w1_mean", "w1_stderr", "trials"]
_SLOPES_HEADER = ["t", "slope"]


def write_poc_csv(path, rows: list[PocRow]) -> None:
    out = (
        [str(r.n), fmt(r.t), fmt(r.w1_mean), fmt(r.w1_stderr), str(r.trials)]
        for r in rows
    )
    _write_rows(path, _POC_HEADER, out)


def read_poc_csv(path) -> list[PocRow]:
    return [
        PocRow(int(n), float(t), float(m), float(s), int(tr))
        for n, t, m, s, tr in _read_rows(path, _POC_HEADER)
    ]


def write_slopes_csv(path, slopes: dict[float, float]) -> None:
    rows = ([fmt(t), fmt(s)] for t, s in sorted(slopes.items()))
    _write_rows(path, _SLOPES_HEADER, rows)


def read_slopes_csv(path) -> dict[float, float]:
    return {float(t): float(s) for t, s in _read_rows(path, _SLOPES_HEADER)}


def poc_json_payload(result: PocResult) -> dict:
    return {
        "k": result.space.k,
        "n_list": list(result.n_list),
        "t_list": list(result.t_list),
        "trials": result.trials,
        "seed": result.seed,
        "rows": [
            {
                "N": r.n,
                "t": r.t,
                "w1_mean": r.w1_mean,
                "w1_stderr": r.w1_stderr,
                "trials": r.trials,
            }
            for r in result.rows
        ],
        "slopes": [{"t": t, "slope": s} for t, s in sorted(result.slopes.items())],
    }


# --- rate fits ----------------------------------------------------------------

_RATE_HEADER = ["quantity", "window_start", "window_end", "rate", "r_squared"]


@dataclass
class RateRow:
    """One line of the rate report."""

    quantity: str
    window_start: float
    window_end: float
    rate: float
    r_squared: float


def rate_row(quantity: str, fit: RateFit) -> RateRow:
    return RateRow(quantity, fit.window[0], fit.window[1], fit.rate, fit.r_squared)


def write_rate_csv(path, rows: list[RateRow]) -> None:
    out = (
        [r.quantity, fmt(r.window_start), fmt(r.window_end), fmt(r.rate), fmt(r.r_squared)]
        for r in rows
    )
    _write_rows(path, _RATE_HEADER, out)


def read_rate_csv(path) -> list[RateRow]:
    return [
        RateRow(name, float(lo), float(hi), float(rate), float(r2))
        for name, lo, hi, rate, r2 in _read_rows(path, _RATE_HEADER)
    ]


# --- verification report --------------------------------------------------------

_VERIFY_HEADER = ["criterion", "slug", "passed", "seconds", "detail"]


@dataclass
class VerifyRow:
    criterion: int
    slug: str
    passed: bool
    seconds: float
    detail: str


def write_verify_csv(path, results) -> None:
    """One row per criterion; commas inside details become semicolons."""
    rows = (
        [
            str(r.id),
            r.slug,
            "true" if r.passed else "false",
            fmt(r.seconds),
            r.detail.replace(",", ";"),
        ]
        for r in results
    )
    _write_rows(path, _VERIFY_HEADER, rows)


def read_verify_csv(path) -> list[VerifyRow]:
    return [
        VerifyRow(int(c), slug, passed == "true", float(secs), detail)
        for c, slug, passed, secs, detail in _read_rows(path, _VERIFY_HEADER)
    ]


# --- generic JSON ---------------------------------------------------------------

def write_json(path, payload) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r") as fh:
        return json.load(fh)


def with_suffix(path, suffix: str) -> Path:
    return Path(path).with_suffix(suffix)
