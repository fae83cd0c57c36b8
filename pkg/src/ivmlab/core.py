"""Shared vocabulary: opinion spaces, probability vectors, and their basic ops.

Opinions live on the signed grid {-k, ..., k}.  Everything internal works in
the shifted layout (indices 0..2k, index n holding the mass of opinion n - k),
which is also the order used in config files and CSV columns (q_0 first).
The signed layout appears only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Constructors accept decimal input whose total mass is off by up to
# MASS_TOL_INPUT and renormalize it; everything downstream maintains
# MASS_TOL_INTERNAL.  Renormalization is skipped when the deviation is
# already below MASS_TOL_INTERNAL, so validated vectors round-trip
# bit-for-bit through the constructors.
MASS_TOL_INTERNAL = 1e-12
MASS_TOL_INPUT = 1e-9


@dataclass(frozen=True)
class OpinionSpace:
    """The admissible opinions {-k, ..., k} for a fixed parameter k >= 1."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def n_states(self) -> int:
        return 2 * self.k + 1


@lru_cache(maxsize=None)
def _index_grid(n_states: int) -> np.ndarray:
    grid = np.arange(n_states, dtype=float)
    grid.flags.writeable = False
    return grid


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over an opinion space, lowest opinion first.

    Instances are immutable values (the weight array is read-only) and safe
    to share across workers.  Use :func:`make_pmf` to construct one from
    untrusted input.
    """

    space: OpinionSpace
    weights: np.ndarray

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Pmf)
            and self.space == other.space
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        return f"Pmf(k={self.space.k}, weights=[{pmf_text(self)}])"


def _freeze(weights: np.ndarray) -> np.ndarray:
    weights = np.ascontiguousarray(weights, dtype=float)
    weights.flags.writeable = False
    return weights


def make_pmf(space: OpinionSpace, weights) -> Pmf:
    """Validate a weight sequence and return it as a `Pmf`.

    Rejects wrong lengths, negative weights, and total mass further than
    ``MASS_TOL_INPUT`` from one.  Smaller deviations (typical for decimal
    literals such as ``0.1, 0.25, 0.3, 0.25, 0.1``) are renormalized.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (space.n_states,):
        raise ValueError(
            f"expected {space.n_states} weights for k={space.k}, got {w.shape}"
        )
    if np.any(w < 0.0):
        bad = float(w.min())
        raise ValueError(f"negative weight {bad!r} in pmf")
    mass = math.fsum(w.tolist())
    deviation = abs(mass - 1.0)
    if deviation > MASS_TOL_INPUT:
        raise ValueError(f"total mass {mass!r} deviates from 1 by more than {MASS_TOL_INPUT}")
    if deviation > MASS_TOL_INTERNAL:
        w = w / mass
    return Pmf(space, _freeze(w))


def uniform_pmf(space: OpinionSpace) -> Pmf:
    """The flat distribution 1/(2k+1) on every state."""
    n = space.n_states
    return make_pmf(space, np.full(n, 1.0 / n))


def point_mass(space: OpinionSpace, index: int) -> Pmf:
    """Unit mass on shifted index ``index`` (opinion ``index - k``)."""
    if not 0 <= index < space.n_states:
        raise ValueError(f"index {index} outside 0..{space.n_states - 1}")
    w = np.zeros(space.n_states)
    w[index] = 1.0
    return Pmf(space, _freeze(w))


def mean_opinion(q: Pmf) -> float:
    """Mean opinion on the shifted scale, in [0, 2k].

    The signed-scale mean is this value minus k (see
    :func:`mean_opinion_signed`).
    """
    m = float(np.dot(_index_grid(q.space.n_states), q.weights))
    return min(max(m, 0.0), 2.0 * q.space.k)


def mean_opinion_signed(q: Pmf) -> float:
    """Mean opinion on the signed scale {-k, ..., k}."""
    return mean_opinion(q) - q.space.k


def relabel_p_to_q(space: OpinionSpace, p_weights) -> Pmf:
    """Re-index a signed-scale weight vector (opinion -k first) to a `Pmf`.

    The shifted index n holds the mass of opinion n - k, so with both layouts
    listed lowest opinion first the array itself is unchanged; validated
    vectors round-trip bit-for-bit with :func:`relabel_q_to_p`.
    """
    return make_pmf(space, p_weights)


def relabel_q_to_p(q: Pmf) -> np.ndarray:
    """Weights indexed by signed opinion, -k first (inverse of `relabel_p_to_q`)."""
    return q.weights.copy()


def flip(q: Pmf) -> Pmf:
    """Mirror the distribution: state n gets the mass of state 2k - n.

    An involution; the mean of the result is 2k minus the original mean.
    """
    return Pmf(q.space, _freeze(q.weights[::-1]))


def is_symmetric(q: Pmf, tol: float) -> bool:
    """True iff max_n |q_n - q_{2k-n}| <= tol."""
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    return float(np.max(np.abs(q.weights - q.weights[::-1]))) <= tol


def pmf_text(q: Pmf) -> str:
    """Textual form: comma-separated decimals, lowest opinion first."""
    return ",".join(format(x, ".17g") for x in q.weights)


def parse_weight_text(text: str) -> list[float]:
    """Parse the comma-separated weight form used in configs and CSV."""
    parts = [p.strip() for p in text.split(",")]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"cannot parse weights {text!r}: {exc}") from None
