"""Deterministic population-level dynamics in the large-population limit.

The opinion distribution q(t) on shifted states {0, ..., 2k} evolves by

    q_0'  = ((2k-M)/2k) q_1     - (M/2k) q_0
    q_n'  = ((2k-M)/2k) q_{n+1} + (M/2k) q_{n-1} - q_n      for 0 < n < 2k
    q_2k' = (M/2k) q_{2k-1}     - ((2k-M)/2k) q_{2k}

with M(t) the mean of q(t).  The right-hand side is evaluated as a
telescoping difference of nearest-neighbour fluxes so that total mass is
conserved exactly, and is integrated with fixed-step classical RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    MASS_TOL_INTERNAL,
    OpinionSpace,
    Pmf,
    _freeze,
    _index_grid,
    point_mass,
    uniform_pmf,
)

# Net up-fluxes are snapped to this grid before the components are formed.
# Every flux then enters exactly two components with opposite signs and all
# partial sums stay on the grid, so the components sum to zero exactly in
# any summation order.  The snap perturbs the derivative by at most half a
# quantum per flux, far below every tolerance used downstream.
_FLUX_QUANTUM = 2.0**-52

# Weight validation thresholds for integrator output.
_NEG_TOL = 1e-12


def _mean_raw(w: np.ndarray) -> float:
    return float(np.dot(_index_grid(len(w)), w))


def _rhs_array(w: np.ndarray, k: int) -> np.ndarray:
    two_k = 2.0 * k
    m = _mean_raw(w)
    up = m / two_k
    down = (two_k - m) / two_k
    flux = up * w[:-1] - down * w[1:]
    flux = np.rint(flux / _FLUX_QUANTUM) * _FLUX_QUANTUM
    out = np.empty_like(w)
    out[0] = -flux[0]
    out[1:-1] = flux[:-1] - flux[1:]
    out[-1] = flux[-1]
    return out


def rhs(q: Pmf) -> np.ndarray:
    """Time derivative of the opinion distribution.

    The components sum to zero exactly (mass conservation is built into the
    flux grouping, not recovered numerically).
    """
    return _rhs_array(q.weights, q.space.k)


@dataclass
class OdeTrajectory:
    """Solution samples on the uniform grid times[i] = i * dt.

    ``weights[i]`` is the distribution at ``times[i]`` and ``means[i]`` its
    mean opinion; every row is a validated probability vector.
    """

    space: OpinionSpace
    dt: float
    times: np.ndarray
    weights: np.ndarray
    means: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> Pmf:
        return Pmf(self.space, _freeze(self.weights[i]))

    @property
    def final(self) -> Pmf:
        return self.state(len(self.times) - 1)

    def index_at(self, t: float) -> int:
        """Grid index of time t; t must lie on the grid within 1e-9."""
        i = int(round(t / self.dt))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} is not on the grid (dt={self.dt})")
        return i


def _validate_state(w: np.ndarray, t: float) -> np.ndarray:
    lo = float(w.min())
    if lo < -_NEG_TOL:
        raise ValueError(
            f"negative weight {lo!r} at t={t:g} beyond tolerance"
            " (step size too large?)"
        )
    if lo < 0.0:
        # clip roundoff dips to zero, taking the deficit from the largest
        # component: one-sided clipping would inflate the total mass a hair
        # every step, and near a consensus corner that feeds back through
        # the mean (M > 2k turns a transition rate negative) until the
        # conservation tolerance is breached
        w = w.copy()
        neg = w < 0.0
        deficit = float(w[neg].sum())
        w[neg] = 0.0
        w[int(np.argmax(w))] += deficit
    mass = math.fsum(w.tolist())
    if abs(mass - 1.0) > MASS_TOL_INTERNAL:
        raise ValueError(
            f"mass conservation violated at t={t:g}: total {mass!r}"
            " (step size too large?)"
        )
    return w


def integrate_rk4(q0: Pmf, dt: float = 0.01, horizon: float = 1.0) -> OdeTrajectory:
    """Integrate with classical fourth-order Runge-Kutta at fixed step dt.

    Every grid state is re-validated: total mass must stay within 1e-12 of
    one, and weights may dip below zero only by 1e-12 (dips are clipped to
    zero, with the deficit absorbed by the largest component so the total
    is untouched); larger violations raise, signalling an unstable step
    size.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise ValueError(f"horizon {horizon} shorter than one step dt={dt}")
    k = q0.space.k
    n_steps = int(round(horizon / dt))
    times = np.arange(n_steps + 1) * dt
    states = np.empty((n_steps + 1, q0.space.n_states))
    means = np.empty(n_steps + 1)
    w = q0.weights.astype(float)
    states[0] = w
    means[0] = _mean_raw(w)
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(n_steps):
        k1 = _rhs_array(w, k)
        k2 = _rhs_array(w + half * k1, k)
        k3 = _rhs_array(w + half * k2, k)
        k4 = _rhs_array(w + dt * k3, k)
        w = w + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        w = _validate_state(w, times[i + 1])
        states[i + 1] = w
        means[i + 1] = _mean_raw(w)
    return OdeTrajectory(q0.space, dt, times, states, means)


def equilibria(space: OpinionSpace) -> tuple[Pmf, Pmf, Pmf]:
    """The three stationary distributions: left consensus, uniform, right consensus."""
    return (
        point_mass(space, 0),
        uniform_pmf(space),
        point_mass(space, space.n_states - 1),
    )


def equilibrium_polynomial(r: float, space: OpinionSpace) -> float:
    """The degree-(2k+1) polynomial whose positive roots locate interior equilibria.

    f(r) = (2k-1) r^(2k+1) - (2k+1) r^(2k) + (2k+1) r - (2k-1).  It is
    strictly increasing on r > 0 with the single positive root r = 1, which
    pins the uniform distribution as the only non-consensus equilibrium.
    """
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    k = space.k
    a = 2.0 * k - 1.0
    b = 2.0 * k + 1.0
    return a * r ** (2 * k + 1) - b * r ** (2 * k) + b * r - a


def equilibrium_polynomial_root(
    space: OpinionSpace, lo: float = 1e-6, hi: float = 1e6, tol: float = 1e-12
) -> float:
    """Locate the unique positive root of `equilibrium_polynomial` by bisection.

    Bisection is unconditionally robust here because the polynomial is
    strictly increasing on the positive axis; the bracket signs are checked
    as a precondition.  ``tol`` bounds the bracket width, not the root
    error: the root at 1 is triple, so its location is only determined to
    roughly the cube root of the evaluation noise (about 1e-6 for k up
    to 10).
    """
    f_lo = equilibrium_polynomial(lo, space)
    f_hi = equilibrium_polynomial(hi, space)
    if not (f_lo < 0.0 < f_hi):
        raise ValueError(f"bracket [{lo}, {hi}] does not straddle the root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if equilibrium_polynomial(mid, space) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mean_derivative(q: Pmf) -> float:
    """Closed-form time derivative of the mean opinion.

    M' = (1/(2 k^2)) * sum_{j=1}^{2k-1} (k (j + M) - 2 k^2) q_j,
    which agrees with the first moment of :func:`rhs` to roundoff.
    """
    k = q.space.k
    m = _mean_raw(q.weights)
    j = np.arange(1, 2 * k, dtype=float)
    coeff = k * (j + m) - 2.0 * k * k
    return float(np.dot(coeff, q.weights[1 : 2 * k])) / (2.0 * k * k)


def closed_form_k1_critical(q0: Pmf, t: float) -> Pmf:
    """Exact solution for k=1 when the initial mean sits at the midpoint M=1.

    On that critical line the dynamics are linear and solve to
    q(t) = (1/3, 1/3, 1/3) + (q_0(0) - 1/3) e^(-3t/2) (1, -2, 1).
    """
    if q0.space.k != 1:
        raise ValueError(f"closed form requires k=1, got k={q0.space.k}")
    m0 = _mean_raw(q0.weights)
    if abs(m0 - 1.0) > MASS_TOL_INTERNAL:
        raise ValueError(f"closed form requires initial mean 1, got {m0!r}")
    amp = (q0.weights[0] - 1.0 / 3.0) * math.exp(-1.5 * t)
    third = 1.0 / 3.0
    return Pmf(q0.space, _freeze(np.array([third + amp, third - 2.0 * amp, third + amp])))


def reduced_rhs_k1(gap: float, q1: float) -> tuple[float, float]:
    """Right-hand side of the two-dimensional reduction for k=1.

    For trajectories on one side of the critical mean, the pair
    (gap, q1) = (distance of the mean from the nearer consensus, central
    mass) is autonomous:

        gap' = -(q1/2) (1 - gap)
        q1'  = -gap^2/2 + gap - (3/2) q1
    """
    return (
        -0.5 * q1 * (1.0 - gap),
        -0.5 * gap * gap + gap - 1.5 * q1,
    )


@dataclass(frozen=True)
class LinearOperator:
    """Tridiagonal generator of the dynamics on the symmetric subspace.

    Diagonal (-1/2, -1, ..., -1, -1/2) with constant 1/2 off-diagonals;
    symmetric, rows summing to zero.  For symmetric q the mean pins to k and
    the full right-hand side reduces to L q.
    """

    space: OpinionSpace
    diag: np.ndarray
    off: np.ndarray

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.diag.shape:
            raise ValueError(f"expected {self.diag.shape[0]} entries, got {x.shape}")
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def matrix(self) -> np.ndarray:
        """Dense form, mainly for tests and spectra."""
        return (
            np.diag(self.diag)
            + np.diag(self.off, k=1)
            + np.diag(self.off, k=-1)
        )


def linear_operator(space: OpinionSpace) -> LinearOperator:
    n = space.n_states
    diag = np.full(n, -1.0)
    diag[0] = diag[-1] = -0.5
    off = np.full(n - 1, 0.5)
    return LinearOperator(space, _freeze(diag), _freeze(off))


def dirichlet_form(operator: LinearOperator, x) -> float:
    """Quadratic form <-Lx, x> = (1/2) sum (x_{n+1} - x_n)^2.

    Evaluated from the difference sum, which is the sharper representation;
    it matches -<Lx, x> to roundoff and controls the decay rate on the
    symmetric subspace.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != operator.diag.shape:
        raise ValueError(f"expected {operator.diag.shape[0]} entries, got {x.shape}")
    diffs = np.diff(x)
    return 0.5 * float(np.dot(diffs, diffs))
