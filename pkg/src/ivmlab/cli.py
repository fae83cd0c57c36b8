"""Command-line front end.

Subcommands: ode, simulate, particle, poc, basin, absorption, verify.
Options may come from a flat key-value config file (``--config``); explicit
command-line flags win over file entries.  Report commands write delimited
or JSON output plus a companion PNG figure (``--no-plot`` disables it).

Exit codes: 0 success, 1 config error, 2 verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import plots, reports, verify
from .abm import SimConfig, run_ensemble, simulate_meanfield_particle
from .analysis import classify_basin, poc_experiment
from .core import (
    OpinionSpace,
    make_pmf,
    mean_opinion,
    parse_weight_text,
    pmf_text,
    uniform_pmf,
)
from .meanfield import integrate_rk4

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_IO = 3

COMMANDS = ("ode", "simulate", "particle", "poc", "basin", "absorption", "verify")


class ConfigError(Exception):
    """Invalid option, config line, or field value."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --- config file -----------------------------------------------------------------

def load_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment.  Keys use the flag
    names with dashes or underscores."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    options: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value in {raw.strip()!r}")
        if key in options:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        options[key] = value
    return options


# --- field conversion --------------------------------------------------------------

class Options:
    """Merged view of flags over config entries, with typed accessors.

    Every accessor names the offending field in its diagnostics; unknown
    keys are rejected after the command handler has claimed its fields.
    """

    def __init__(self, values: dict[str, str], command: str):
        self._values = values
        self._command = command
        self._claimed: set[str] = set()

    def _fetch(self, name: str, conv, default, required):
        self._claimed.add(name)
        raw = self._values.get(name)
        if raw is None:
            if required:
                raise ConfigError(f"{self._command}: missing required field '{name}'")
            return default
        try:
            return conv(raw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self._command}: field '{name}': {exc}") from None

    def integer(self, name, default=None, required=False, minimum=None):
        value = self._fetch(name, int, default, required)
        if value is not None and minimum is not None and value < minimum:
            raise ConfigError(f"{self._command}: field '{name}' must be >= {minimum}, got {value}")
        return value

    def real(self, name, default=None, required=False, positive=False):
        value = self._fetch(name, float, default, required)
        if value is not None and positive and value <= 0:
            raise ConfigError(f"{self._command}: field '{name}' must be positive, got {value}")
        return value

    def text(self, name, default=None, required=False, choices=None):
        value = self._fetch(name, str, default, required)
        if value is not None and choices is not None and value not in choices:
            raise ConfigError(
                f"{self._command}: field '{name}' must be one of {sorted(choices)}, got {value!r}"
            )
        return value

    def flag(self, name, default=False):
        value = self._fetch(name, str, None, False)
        if value is None:
            return default
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{self._command}: field '{name}' must be a boolean, got {value!r}")

    def real_list(self, name, default=None, required=False):
        raw = self._fetch(name, str, None, required)
        if raw is None:
            return default
        try:
            return tuple(float(p.strip()) for p in raw.split(",") if p.strip())
        except ValueError as exc:
            raise ConfigError(f"{self._command}: field '{name}': {exc}") from None

    def integer_list(self, name, default=None, required=False):
        raw = self._fetch(name, str, None, required)
        if raw is None:
            return default
        try:
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
        except ValueError as exc:
            raise ConfigError(f"{self._command}: field '{name}': {exc}") from None

    def space(self):
        k = self.integer("k", required=True, minimum=1)
        return OpinionSpace(k)

    def pmf(self, space, name="q0", required=True):
        raw = self.text(name, required=required)
        if raw is None:
            return None
        if raw == "uniform":
            return uniform_pmf(space)
        try:
            return make_pmf(space, parse_weight_text(raw))
        except ValueError as exc:
            raise ConfigError(f"{self._command}: field '{name}': {exc}") from None

    def seed(self):
        value = self.integer("seed", default=0, minimum=0)
        if value >= 2**64:
            raise ConfigError(f"{self._command}: field 'seed' must fit in 64 bits")
        return value

    def out_path(self, default_stem: str, fmt: str) -> Path:
        raw = self.text("out")
        if raw is not None:
            return Path(raw)
        return Path(f"{default_stem}.{'json' if fmt == 'json' else 'csv'}")

    def reject_unknown(self):
        unknown = set(self._values) - self._claimed
        if unknown:
            raise ConfigError(
                f"{self._command}: unknown field(s): {', '.join(sorted(unknown))}"
            )


def _merge(args: argparse.Namespace) -> Options:
    flags = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config") and value is not None
    }
    file_values = load_config_file(args.config) if args.config else {}
    merged = {**file_values, **flags}
    return Options(merged, args.command)


# --- argument declaration -------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="flat key-value config file; flags win")
    sub.add_argument("--k", help="opinion-space parameter k >= 1")
    sub.add_argument("--q0", help="initial pmf: comma-separated weights (q_0 first) or 'uniform'")
    sub.add_argument("--dt", help="integrator step size (default 0.01)")
    sub.add_argument("--horizon", help="simulated time span")
    sub.add_argument("--n", help="number of agents")
    sub.add_argument("--trials", help="independent runs in an ensemble")
    sub.add_argument("--seed", help="64-bit master seed (default 0)")
    sub.add_argument("--out", help="output file (default <command>.csv or .json)")
    sub.add_argument("--format", help="output format: csv or json (default csv)")
    sub.add_argument("--threads", help="worker threads; never affects results")
    sub.add_argument(
        "--no-plot", dest="no_plot", action="store_const", const="true",
        help="skip the companion PNG figure",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="ivmlab", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subs.add_parser(name, prog=f"ivmlab {name}")
        _add_common(sub)
        if name == "simulate":
            sub.add_argument("--snapshots", help="comma-separated snapshot times")
            sub.add_argument("--max-events", dest="max_events", help="event-count cap")
            sub.add_argument("--opinions", help="explicit initial opinions (signed, comma-separated)")
        elif name == "absorption":
            sub.add_argument("--max-events", dest="max_events", help="event-count cap (default 10^6)")
            sub.add_argument("--opinions", help="explicit initial opinions (signed, comma-separated)")
        elif name == "particle":
            sub.add_argument("--max-events", dest="max_events", help="event-count cap")
        elif name == "poc":
            sub.add_argument("--n-list", dest="n_list", help="population sizes, comma-separated")
            sub.add_argument("--t-list", dest="t_list", help="comparison times, comma-separated")
        elif name == "verify":
            sub.add_argument("--suite", help=f"criteria suite (default all): {', '.join(sorted(verify.SUITES))}")
            sub.add_argument("--out-dir", dest="out_dir", help="directory for verify_report.csv and rates.csv")
    return parser


# --- command handlers --------------------------------------------------------------

def cmd_ode(opts: Options) -> int:
    space = opts.space()
    q0 = opts.pmf(space)
    dt = opts.real("dt", default=0.01, positive=True)
    horizon = opts.real("horizon", required=True, positive=True)
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("ode", fmt)
    plot = not opts.flag("no_plot")
    opts.reject_unknown()

    traj = integrate_rk4(q0, dt=dt, horizon=horizon)
    if fmt == "csv":
        reports.write_ode_csv(out, traj)
    else:
        reports.write_json(out, {
            "k": space.k,
            "dt": dt,
            "times": traj.times.tolist(),
            "states": traj.weights.tolist(),
            "means": traj.means.tolist(),
        })
    verdict = classify_basin(q0)
    final = traj.final
    print(f"wrote {out} ({len(traj)} grid points)")
    print(f"final state: [{pmf_text(final)}]")
    print(f"final mean: {mean_opinion(final):.6f}")
    print(f"basin verdict: {verdict.label} -- {verdict.reason}")
    if plot:
        plots.plot_ode(traj, out.with_suffix(".png"))
    return EXIT_OK


def _initial_population(opts: Options, space: OpinionSpace, n: int):
    raw = opts.text("opinions")
    if raw is not None:
        try:
            return np.array([int(p.strip()) for p in raw.split(",")], dtype=np.int64)
        except ValueError as exc:
            raise ConfigError(f"{opts._command}: field 'opinions': {exc}") from None
    q0 = opts.pmf(space, required=False)
    if q0 is None:
        raise ConfigError(f"{opts._command}: need an initial pmf (q0) or explicit opinions")
    return q0


def cmd_simulate(opts: Options) -> int:
    space = opts.space()
    n = opts.integer("n", required=True, minimum=2)
    initial = _initial_population(opts, space, n)
    horizon = opts.real("horizon", positive=True)
    max_events = opts.integer("max_events", minimum=1)
    if horizon is None and max_events is None:
        raise ConfigError("simulate: need a stopping rule: horizon or max_events")
    trials = opts.integer("trials", default=1, minimum=1)
    seed = opts.seed()
    threads = opts.integer("threads", default=1, minimum=1)
    snapshots = opts.real_list("snapshots")
    if snapshots is None:
        snapshots = tuple(np.linspace(0.0, horizon, 11)) if horizon else ()
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("trajectory", fmt)
    plot = not opts.flag("no_plot")
    opts.reject_unknown()

    config = SimConfig(
        space=space, n=n, initial=initial, horizon=horizon,
        max_events=max_events, seed=seed, snapshot_times=snapshots,
    )
    try:
        stats = run_ensemble(config, trials, threads=threads)
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    times, events, marginals = reports.ensemble_trajectory(stats)
    if fmt == "csv":
        reports.write_trajectory_csv(out, times, events, marginals)
    else:
        reports.write_json(out, {
            "k": space.k, "n": n, "trials": trials, "seed": seed,
            "times": list(times),
            "event_counts": list(events),
            "marginals": marginals.tolist(),
        })
    absorbed = stats.absorbed_fraction()
    print(f"wrote {out} ({len(times)} snapshots, {trials} trial(s))")
    print(f"absorbed fraction: {absorbed:.3f}")
    if plot:
        plots.plot_trajectory(times, marginals, space.k, out.with_suffix(".png"))
    return EXIT_OK


def cmd_particle(opts: Options) -> int:
    space = opts.space()
    q0 = opts.pmf(space)
    dt = opts.real("dt", default=0.01, positive=True)
    horizon = opts.real("horizon", required=True, positive=True)
    seed = opts.seed()
    max_events = opts.integer("max_events", minimum=1)
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("particle", fmt)
    plot = not opts.flag("no_plot")
    opts.reject_unknown()

    traj = integrate_rk4(q0, dt=dt, horizon=horizon)

    def mean_path(t):
        return float(np.interp(t, traj.times, traj.means))

    particle = simulate_meanfield_particle(
        space, q0, mean_path, horizon, seed, max_events=max_events
    )
    if fmt == "csv":
        reports.write_particle_csv(out, particle.times, particle.opinions)
    else:
        reports.write_json(out, {
            "k": space.k, "seed": seed,
            "times": particle.times.tolist(),
            "opinions": particle.opinions.tolist(),
            "end_time": particle.end_time,
        })
    occupation = particle.occupation()
    print(f"wrote {out} ({len(particle.times) - 1} events)")
    print(f"occupation: {','.join(format(x, '.4f') for x in occupation)}")
    if plot:
        plots.plot_particle(particle, out.with_suffix(".png"))
    return EXIT_OK


def cmd_poc(opts: Options) -> int:
    space = opts.space()
    q0 = opts.pmf(space)
    n_list = opts.integer_list("n_list", required=True)
    t_list = opts.real_list("t_list", required=True)
    trials = opts.integer("trials", default=200, minimum=2)
    seed = opts.seed()
    dt = opts.real("dt", default=0.01, positive=True)
    threads = opts.integer("threads", default=1, minimum=1)
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("poc", fmt)
    plot = not opts.flag("no_plot")
    opts.reject_unknown()

    if any(n < 2 for n in n_list):
        raise ConfigError("poc: field 'n_list': every population size must be >= 2")
    if any(t <= 0 for t in t_list):
        raise ConfigError("poc: field 't_list': every time must be positive")
    try:
        result = poc_experiment(
            space, q0, n_list, t_list, trials, seed, dt=dt, threads=threads
        )
    except ValueError as exc:
        raise ConfigError(f"poc: {exc}") from None
    if fmt == "csv":
        reports.write_poc_csv(out, result.rows)
        slope_path = out.with_name(out.stem + "_slopes" + out.suffix)
        reports.write_slopes_csv(slope_path, result.slopes)
        print(f"wrote {out} and {slope_path}")
    else:
        reports.write_json(out, reports.poc_json_payload(result))
        print(f"wrote {out}")
    for t, slope in sorted(result.slopes.items()):
        print(f"slope at t={t:g}: {slope:.4f} (reference -0.5)")
    if plot:
        plots.plot_poc(result, out.with_suffix(".png"))
    return EXIT_OK


def cmd_basin(opts: Options) -> int:
    space = opts.space()
    q0 = opts.pmf(space)
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("basin", fmt)
    opts.flag("no_plot")  # accepted for interface uniformity; basin renders no figure
    opts.reject_unknown()

    verdict = classify_basin(q0)
    mean = mean_opinion(q0)
    if fmt == "csv":
        reports.write_basin_csv(out, verdict.label, verdict.reason, mean, q0.weights)
    else:
        reports.write_json(out, {
            "k": space.k,
            "q0": q0.weights.tolist(),
            "M": mean,
            "label": verdict.label,
            "reason": verdict.reason,
        })
    print(f"wrote {out}")
    print(f"M(0) = {mean:.6f}")
    print(f"basin verdict: {verdict.label} -- {verdict.reason}")
    return EXIT_OK


def cmd_absorption(opts: Options) -> int:
    space = opts.space()
    n = opts.integer("n", required=True, minimum=2)
    initial = _initial_population(opts, space, n)
    trials = opts.integer("trials", default=100, minimum=1)
    max_events = opts.integer("max_events", default=1_000_000, minimum=1)
    horizon = opts.real("horizon", positive=True)
    seed = opts.seed()
    threads = opts.integer("threads", default=1, minimum=1)
    fmt = opts.text("format", default="csv", choices={"csv", "json"})
    out = opts.out_path("absorption", fmt)
    plot = not opts.flag("no_plot")
    opts.reject_unknown()

    config = SimConfig(
        space=space, n=n, initial=initial, horizon=horizon,
        max_events=max_events, seed=seed,
    )
    try:
        stats = run_ensemble(config, trials, threads=threads)
    except ValueError as exc:
        raise ConfigError(f"absorption: {exc}") from None
    if fmt == "csv":
        reports.write_absorption_csv(out, stats.absorption)
    else:
        reports.write_json(out, {
            "k": space.k, "n": n, "seed": seed, "trials": trials,
            "records": [
                {
                    "trial": i, "absorbed": r.absorbed, "target": r.target,
                    "steps": r.discrete_steps, "time": r.continuous_time,
                }
                for i, r in enumerate(stats.absorption)
            ],
        })
    absorbed = stats.absorbed_fraction()
    right = stats.absorbed_right_fraction()
    times = [r.continuous_time for r in stats.absorption if r.absorbed]
    print(f"wrote {out} ({trials} trials)")
    print(f"absorbed: {absorbed:.1%} (right fraction {right:.3f})")
    if times:
        print(f"mean absorption time: {np.mean(times):.3f}")
    unresolved = trials - len(times)
    if unresolved:
        print(f"not absorbed within cap: {unresolved} trial(s)")
    if plot:
        plots.plot_absorption(stats.absorption, out.with_suffix(".png"))
    return EXIT_OK


def cmd_verify(opts: Options) -> int:
    suite = opts.text("suite", default="all", choices=set(verify.SUITES))
    seed = opts.seed()
    threads = opts.integer("threads", default=1, minimum=1)
    out_dir = opts.text("out_dir")
    opts.flag("no_plot")  # accepted for interface uniformity
    opts.reject_unknown()

    results = verify.run_suite(suite, seed=seed, threads=threads, out_dir=out_dir)
    failed = [r for r in results if not r.passed]
    over_budget = [r for r in results if not r.within_budget]
    for r in over_budget:
        print(f"warning: criterion {r.id} exceeded its {r.budget:.0f}s budget ({r.seconds:.1f}s)")
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_VERIFY if failed else EXIT_OK


_HANDLERS = {
    "ode": cmd_ode,
    "simulate": cmd_simulate,
    "particle": cmd_particle,
    "poc": cmd_poc,
    "basin": cmd_basin,
    "absorption": cmd_absorption,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        opts = _merge(args)
        return _HANDLERS[args.command](opts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
