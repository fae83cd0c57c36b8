"""Verification harness: every quantitative claim as a runnable check.

Each criterion is a pure function of a seed (default 0) and reports pass or
fail with a one-line detail.  The harness backs both the ``verify`` CLI
subcommand and the acceptance test module, so the same code path produces
the shipped verdicts.

The minimal-transport cross-check for the CDF distance formula lives here
(solved as an explicit linear program), keeping the two routes to W1
independent of each other.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import itertools
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .abm import SimConfig, derive_seed, run_ensemble
from .analysis import (
    consensus_gap_series,
    envelope_holds,
    fit_decay_envelope,
    fit_exponential_rate,
    poc_experiment,
    verify_against_equilibrium,
    w1_weights,
)
from .core import OpinionSpace, make_pmf, uniform_pmf
from .meanfield import (
    closed_form_k1_critical,
    dirichlet_form,
    equilibria,
    integrate_rk4,
    linear_operator,
    mean_derivative,
    rhs,
)
from .reports import RateRow, rate_row, write_rate_csv, write_verify_csv

_MONOTONE_TOL = 1e-12


# --- minimal-transport oracle ------------------------------------------------

def wasserstein1_transport_lp(p_weights, q_weights) -> float:
    """W1 as the value of the explicit minimal-transport linear program.

    Independent of the CDF formula: the full coupling polytope is searched
    for the cheapest plan under the |i - j| ground cost.
    """
    p = np.asarray(p_weights, dtype=float)
    q = np.asarray(q_weights, dtype=float)
    n = len(p)
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).ravel().astype(float)
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n : (i + 1) * n] = 1.0  # row sums -> p
        a_eq[n + i, i :: n] = 1.0  # column sums -> q
    res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([p, q]), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def composition_pmfs(space: OpinionSpace, resolution: int):
    """All pmfs with weights on the grid {0, 1/resolution, ..., 1}."""
    n = space.n_states
    out = []
    for cuts in itertools.combinations(range(resolution + n - 1), n - 1):
        parts = []
        prev = -1
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(resolution + n - 2 - prev)
        out.append(np.array(parts, dtype=float) / resolution)
    return out


# --- harness scaffolding ------------------------------------------------------

@dataclass
class CheckContext:
    workdir: Path
    seed: int = 0
    threads: int = 1
    rate_rows: list[RateRow] = field(default_factory=list)


@dataclass(frozen=True)
class Criterion:
    id: int
    slug: str
    title: str
    budget: float | None
    tags: frozenset[str]
    fn: Callable[[CheckContext], tuple[bool, str]]


@dataclass
class CheckResult:
    id: int
    slug: str
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float | None

    @property
    def within_budget(self) -> bool:
        return self.budget is None or self.seconds < self.budget

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{self.id:2d}] {self.slug:<18s} {mark}  ({self.seconds:6.2f}s)  {self.detail}"


# --- criteria ----------------------------------------------------------------

def _check_equilibria(ctx: CheckContext):
    worst = 0.0
    for k in range(1, 11):
        for q in equilibria(OpinionSpace(k)):
            worst = max(worst, float(np.max(np.abs(rhs(q)))))
    return worst <= 1e-15, f"max |rhs| over all equilibria k=1..10: {worst:.3g} (tol 1e-15)"


def _check_k1_closed_form(ctx: CheckContext):
    space = OpinionSpace(1)
    q0 = make_pmf(space, (0.3, 0.4, 0.3))
    traj = integrate_rk4(q0, dt=0.01, horizon=10.0)
    exact = np.array([closed_form_k1_critical(q0, t).weights for t in traj.times])
    err = float(np.max(np.abs(traj.weights - exact)))
    return err <= 1e-8, f"max |RK4 - closed form| on [0;10]: {err:.3g} (tol 1e-8)"


def _check_k1_regimes(ctx: CheckContext):
    space = OpinionSpace(1)
    left, unif, right = equilibria(space)
    cases = [
        ((0.4, 0.3, 0.3), left, "left"),
        ((0.3, 0.4, 0.3), unif, "uniform"),
        ((0.3, 0.3, 0.4), right, "right"),
    ]
    worst = 0.0
    for weights, target, _name in cases:
        traj = integrate_rk4(make_pmf(space, weights), dt=0.01, horizon=200.0)
        worst = max(worst, verify_against_equilibrium(traj, target, min_horizon=200.0))
    return worst <= 1e-3, f"worst final distance to the three targets at T=200: {worst:.3g} (tol 1e-3)"


def _check_k1_rate_bound(ctx: CheckContext):
    space = OpinionSpace(1)
    traj = integrate_rk4(make_pmf(space, (0.3, 0.3, 0.4)), dt=0.01, horizon=60.0)
    times, gaps = consensus_gap_series(traj)
    fit = fit_exponential_rate(times, gaps, (20.0, 60.0))
    ctx.rate_rows.append(rate_row("k1_consensus_gap", fit))
    env = fit_decay_envelope(times, gaps, rate=0.125)
    holds = envelope_holds(times, gaps, env)
    interior = env.peak_fraction < 0.9
    passed = fit.rate >= 0.125 and holds and interior
    return passed, (
        f"fitted rate {fit.rate:.4f} (need >= 0.125); envelope C={env.constant:.3g}"
        f" from T={env.onset:.2f} holds={holds}; peak at {env.peak_fraction:.0%} of grid"
    )


_SYMMETRIC_CASES = {
    1: (0.3, 0.4, 0.3),
    2: (0.1, 0.25, 0.3, 0.25, 0.1),
    3: (0.05, 0.1, 0.15, 0.4, 0.15, 0.1, 0.05),
}


def _check_symmetric_decay(ctx: CheckContext):
    details = []
    ok = True
    for k, weights in _SYMMETRIC_CASES.items():
        space = OpinionSpace(k)
        traj = integrate_rk4(make_pmf(space, weights), dt=0.01, horizon=100.0)
        qu = uniform_pmf(space).weights
        dist = np.linalg.norm(traj.weights - qu, axis=1)
        rate = 1.0 / (8.0 * space.n_states**2)
        bound = np.exp(-rate * traj.times) * dist[0] * (1.0 + 1e-12)
        ok_k = bool(np.all(dist <= bound))
        ok = ok and ok_k
        margin = float(np.min(bound - dist))
        details.append(f"k={k}: ok={ok_k} min margin {margin:.3g}")
        fit = fit_exponential_rate(traj.times, np.maximum(dist, 1e-300), (0.0, 20.0))
        ctx.rate_rows.append(rate_row(f"symmetric_l2_k{k}", fit))
    return ok, "; ".join(details)


def _check_poincare(ctx: CheckContext):
    rng = np.random.default_rng(derive_seed(ctx.seed, 6))
    violations = 0
    worst_ratio = np.inf
    for k in range(1, 11):
        n = 2 * k + 1
        x = rng.standard_normal((10_000, n))
        x -= x.mean(axis=1, keepdims=True)
        diffs = np.diff(x, axis=1)
        forms = 0.5 * np.sum(diffs * diffs, axis=1)
        bounds = np.sum(x * x, axis=1) / (8.0 * n * n)
        violations += int(np.sum(forms < bounds))
        worst_ratio = min(worst_ratio, float(np.min(forms / bounds)))
    return violations == 0, (
        f"violations: {violations} over 10^4 vectors x k=1..10;"
        f" min form/bound ratio {worst_ratio:.2f}"
    )


def _check_k2_basins(ctx: CheckContext):
    space = OpinionSpace(2)
    left, _unif, right = equilibria(space)
    cases = [
        ((0.31, 0.54, 0.05, 0.05, 0.05), left, -1.0),
        ((0.05, 0.05, 0.05, 0.549, 0.301), right, +1.0),
    ]
    ok = True
    details = []
    for weights, target, direction in cases:
        traj = integrate_rk4(make_pmf(space, weights), dt=0.01, horizon=500.0)
        dist = verify_against_equilibrium(traj, target, min_horizon=500.0)
        steps = np.diff(traj.means) * direction
        monotone = bool(np.all(steps >= -_MONOTONE_TOL))
        ok = ok and dist <= 1e-2 and monotone
        details.append(f"M(0)={traj.means[0]:.3f}: final dist {dist:.3g} monotone={monotone}")
    return ok, "; ".join(details) + " (tol 1e-2)"


def _check_absorption(ctx: CheckContext):
    space = OpinionSpace(1)
    config = SimConfig(
        space=space,
        n=4,
        initial=uniform_pmf(space),
        max_events=10**6,
        seed=derive_seed(ctx.seed, 8),
    )
    stats = run_ensemble(config, 1000, threads=ctx.threads)
    frac = stats.absorbed_fraction()
    right = stats.absorbed_right_fraction()
    steps = [r.discrete_steps for r in stats.absorption if r.absorbed]
    mean_steps = float(np.mean(steps)) if steps else float("nan")
    passed = frac == 1.0 and 0.0 <= right <= 1.0
    return passed, (
        f"absorbed {frac:.1%} of 1000 trials (need 100%);"
        f" right fraction {right:.3f}; mean steps {mean_steps:.0f}"
    )


def _check_poc_scaling(ctx: CheckContext):
    space = OpinionSpace(1)
    result = poc_experiment(
        space,
        uniform_pmf(space),
        n_list=(100, 1000, 10_000),
        t_list=(1.0,),
        trials=200,
        seed=derive_seed(ctx.seed, 9),
        threads=ctx.threads,
    )
    slope = result.slope_at(1.0)
    passed = -0.7 <= slope <= -0.3
    w1s = {r.n: r.w1_mean for r in result.rows}
    return passed, (
        f"log-log slope {slope:.3f} (need in [-0.7; -0.3]);"
        f" mean W1 at t=1: " + " ".join(f"N={n}:{w:.4f}" for n, w in sorted(w1s.items()))
    )


def _check_w1_oracle(ctx: CheckContext):
    worst = 0.0
    pairs = 0
    for k, resolution in ((1, 5), (2, 3), (3, 2)):
        grid = composition_pmfs(OpinionSpace(k), resolution)
        for a, b in itertools.combinations(grid, 2):
            d_cdf = w1_weights(a, b)
            d_lp = wasserstein1_transport_lp(a, b)
            worst = max(worst, abs(d_cdf - d_lp))
            pairs += 1
    return worst <= 1e-12 and pairs >= 1000, (
        f"max |CDF - transport LP| over {pairs} grid pairs: {worst:.3g} (tol 1e-12)"
    )


def _check_mean_consistency(ctx: CheckContext):
    rng = np.random.default_rng(derive_seed(ctx.seed, 11))
    worst = 0.0
    for k in range(1, 6):
        space = OpinionSpace(k)
        grid = np.arange(space.n_states, dtype=float)
        for _ in range(1000):
            q = make_pmf(space, rng.dirichlet(np.ones(space.n_states)))
            diff = abs(mean_derivative(q) - float(np.dot(grid, rhs(q))))
            worst = max(worst, diff)
    return worst <= 1e-12, (
        f"max |closed-form M' - first moment of rhs| over 10^3 pmfs x k=1..5:"
        f" {worst:.3g} (tol 1e-12)"
    )


def _run_cli(args: list[str]) -> None:
    from . import cli  # deferred: cli imports this module

    with contextlib.redirect_stdout(io.StringIO()):
        code = cli.main(args)
    if code != 0:
        raise RuntimeError(f"cli exited with {code}: {' '.join(args)}")


def _check_determinism(ctx: CheckContext):
    diffs = []
    files_checked = []
    for name, argv in (
        (
            "simulate",
            [
                "simulate", "--k", "1", "--q0", "uniform", "--n", "64",
                "--horizon", "4", "--trials", "12", "--seed", "7",
                "--snapshots", "0,1,2,4",
            ],
        ),
        (
            "poc",
            [
                "poc", "--k", "1", "--q0", "uniform", "--n-list", "64,128",
                "--t-list", "0.5", "--trials", "12", "--seed", "7",
            ],
        ),
    ):
        outputs = []
        for threads in (1, 4):
            subdir = ctx.workdir / f"{name}_t{threads}"
            subdir.mkdir(parents=True, exist_ok=True)
            out = subdir / f"{name}.csv"
            _run_cli(argv + ["--threads", str(threads), "--out", str(out)])
            outputs.append(sorted(p for p in subdir.iterdir() if p.is_file()))
        names_a = [p.name for p in outputs[0]]
        names_b = [p.name for p in outputs[1]]
        if names_a != names_b:
            diffs.append(f"{name}: file sets differ {names_a} vs {names_b}")
            continue
        for a, b in zip(*outputs):
            if not filecmp.cmp(a, b, shallow=False):
                diffs.append(f"{name}: {a.name} differs between thread counts")
        files_checked.extend(names_a)
    if diffs:
        return False, "; ".join(diffs)
    return True, (
        "simulate and poc outputs byte-identical for --threads 1 vs 4"
        f" (checked incl. figures: {' '.join(files_checked)})"
    )


CRITERIA: tuple[Criterion, ...] = (
    Criterion(1, "equilibria", "stationary distributions annihilate the rhs", 1.0,
              frozenset({"meanfield", "equilibria"}), _check_equilibria),
    Criterion(2, "k1_closed_form", "RK4 matches the critical-line closed form", 1.0,
              frozenset({"meanfield", "k1"}), _check_k1_closed_form),
    Criterion(3, "k1_regimes", "three-state runs reach their consensus targets", 5.0,
              frozenset({"meanfield", "k1"}), _check_k1_regimes),
    Criterion(4, "k1_rate_bound", "consensus gap decays at least at rate 1/8", 5.0,
              frozenset({"meanfield", "k1"}), _check_k1_rate_bound),
    Criterion(5, "symmetric_decay", "symmetric profiles obey the spectral-gap bound", 10.0,
              frozenset({"meanfield", "symmetric"}), _check_symmetric_decay),
    Criterion(6, "poincare", "discrete Poincare inequality for zero-sum vectors", 10.0,
              frozenset({"meanfield", "symmetric"}), _check_poincare),
    Criterion(7, "k2_basins", "five-state runs converge with monotone mean", 10.0,
              frozenset({"meanfield", "basins"}), _check_k2_basins),
    Criterion(8, "absorption", "every finite-population trial reaches consensus", 30.0,
              frozenset({"abm"}), _check_absorption),
    Criterion(9, "poc_scaling", "marginal W1 scales like 1/sqrt(N)", 300.0,
              frozenset({"abm", "poc"}), _check_poc_scaling),
    Criterion(10, "w1_oracle", "CDF distance equals minimal transport", 30.0,
              frozenset({"analysis", "w1"}), _check_w1_oracle),
    Criterion(11, "mean_consistency", "closed-form mean derivative matches the rhs moment", 1.0,
              frozenset({"meanfield"}), _check_mean_consistency),
    Criterion(12, "determinism", "outputs independent of the thread count", None,
              frozenset({"cli", "determinism"}), _check_determinism),
)

SUITES: dict[str, tuple[int, ...]] = {
    "all": tuple(c.id for c in CRITERIA),
    "k1": (2, 3, 4),
    "equilibria": (1,),
    "symmetric": (5, 6),
    "meanfield": (1, 2, 3, 4, 5, 6, 7, 11),
    "basins": (7,),
    "abm": (8,),
    "poc": (9,),
    "w1": (10,),
    "determinism": (12,),
}


def run_criterion(criterion: Criterion, ctx: CheckContext) -> CheckResult:
    start = time.perf_counter()
    passed, detail = criterion.fn(ctx)
    elapsed = time.perf_counter() - start
    return CheckResult(
        criterion.id, criterion.slug, criterion.title, passed, detail, elapsed,
        criterion.budget,
    )


def run_suite(
    suite: str = "all",
    seed: int = 0,
    threads: int = 1,
    out_dir=None,
    echo=print,
) -> list[CheckResult]:
    """Run a named criteria suite, print one line per criterion, optionally
    write the report and rate CSVs into ``out_dir``."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    ids = set(SUITES[suite])
    results = []
    with tempfile.TemporaryDirectory(prefix="ivmlab-verify-") as tmp:
        ctx = CheckContext(workdir=Path(tmp), seed=seed, threads=threads)
        if echo:
            echo(f"verification suite '{suite}' (seed={ctx.seed}, threads={ctx.threads})")
        for criterion in CRITERIA:
            if criterion.id not in ids:
                continue
            result = run_criterion(criterion, ctx)
            results.append(result)
            if echo:
                echo(result.line())
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_verify_csv(out_dir / "verify_report.csv", results)
        if ctx.rate_rows:
            write_rate_csv(out_dir / "rates.csv", ctx.rate_rows)
    return results
