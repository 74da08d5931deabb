"""Command-line front end: config parsing, experiment runs and CSV/text reports.

Config files are line oriented::

    # comment
    model.p = 3
    model.alpha = 0
    grid.n_cells = 64
    run.t_end = 1.0
    run.mu_schedule = 1e-3, 1e-4
    initial.kind = bump
    checks.list = sandwich, xi_monotone

Unset keys take the defaults in ``SCHEMA``; defaults that were filled in
are echoed in the run header.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .energy import StepProblem, submodularity_gap
from .grid import Grid1D
from .model import ModelParams
from .ode_ref import blowup_time, solve_ode_limit, solve_ode_regularized
from .stepper import (Mode, RunConfig, Trajectory, TrajectoryAborted, cauchy_differences,
                      run_trajectory, weak_family)

FMT = "%.12g"


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _names(s):
    return tuple(x for x in s.replace(",", " ").split())


def _str(s):
    return s.strip()


# key -> (parser, default); a default of None means "not set"
SCHEMA = {
    "model.p": (_float, None),
    "model.alpha": (_float, 0.0),
    "model.lambda": (_float, 1.0),
    "model.mu": (_float, 1e-3),
    "grid.n_cells": (_int, 64),
    "grid.length": (_float, 1.0),
    "run.t_end": (_float, 1.0),
    "run.tau": (_float, 1e-3),
    "run.mu_schedule": (_floats, None),
    "run.blowup_cap": (_float, 1e6),
    "run.record_every": (_int, 1),
    "run.mode": (_str, "strong"),
    "run.weak_shift": (_float, 1e-2),
    "run.max_halvings": (_int, 20),
    "initial.kind": (_str, "constant"),
    "initial.M": (_float, 1.0),
    "initial.base": (_float, 1.0),
    "initial.height": (_float, 1.0),
    "initial.width": (_float, 0.1),
    "initial.center": (_float, None),
    "initial.path": (_str, None),
    "checks.list": (_names, ()),
    "checks.delta": (_float, None),
    "checks.M": (_float, None),
    "output.dir": (_str, "out"),
    "output.snapshots": (_int, 21),
}
REQUIRED = ("model.p",)


@dataclass(frozen=True)
class ConfigIssue:
    key: str
    line: int | None
    reason: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        return f"{where}: {self.key}: {self.reason}"


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        super().__init__("; ".join(str(i) for i in issues))
        self.issues = issues


@dataclass
class ExperimentConfig:
    model: ModelParams
    grid: Grid1D
    run: RunConfig
    initial: dict
    checks: tuple[str, ...] = ()
    check_bounds: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    snapshots: int = 21
    defaults_used: tuple[str, ...] = ()
    values: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        lines = []
        for key in SCHEMA:
            if key in self.values:
                tag = " (default)" if key in self.defaults_used else ""
                lines.append(f"# {key} = {_show(self.values[key])}{tag}")
        return lines


def _show(v):
    if isinstance(v, tuple):
        return ", ".join(_show(x) for x in v)
    if isinstance(v, float):
        return FMT % v
    return str(v)


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse and validate a config; raises ``ConfigError`` listing every problem."""
    issues: list[ConfigIssue] = []
    values: dict = {}
    lines_of: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            issues.append(ConfigIssue(line, no, "expected 'section.key = value'"))
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            issues.append(ConfigIssue(key, no, "unknown key"))
            continue
        if key in values:
            issues.append(ConfigIssue(key, no, f"duplicate key (first set on line {lines_of[key]})"))
            continue
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            issues.append(ConfigIssue(key, no, f"type mismatch: {exc}"))
            continue
        lines_of[key] = no
    failed = {i.key for i in issues}
    for key in REQUIRED:
        if key not in values and key not in failed:
            issues.append(ConfigIssue(key, None, "required key missing"))
            failed.add(key)

    defaults = []
    for key, (_, default) in SCHEMA.items():
        if key not in values and default is not None:
            values[key] = default
            if key not in failed:
                defaults.append(key)
    v = values

    def check(key, ok, reason):
        # keys that did not parse are already reported
        if key in failed:
            return True
        if not ok:
            issues.append(ConfigIssue(key, lines_of.get(key), reason))
        return ok

    if "model.p" in v:
        check("model.p", v["model.p"] > 1, f"p = {_show(v['model.p'])} violates the growth assumption p > 1")
    check("model.alpha", v["model.alpha"] >= 0, "alpha must be >= 0")
    check("model.lambda", v["model.lambda"] > 0, "lambda must be positive")
    check("model.mu", v["model.mu"] >= 0, "mu must be >= 0")
    check("grid.n_cells", v["grid.n_cells"] >= 1, "n_cells must be >= 1")
    check("grid.length", v["grid.length"] > 0, "length must be positive")
    check("run.t_end", v["run.t_end"] > 0, "t_end must be positive")
    check("run.tau", v["run.tau"] > 0, "tau must be positive")
    check("run.blowup_cap", v["run.blowup_cap"] > 0, "blowup_cap must be positive")
    check("run.record_every", v["run.record_every"] >= 1, "record_every must be >= 1")
    check("run.weak_shift", v["run.weak_shift"] > 0, "weak_shift must be positive")
    check("run.max_halvings", v["run.max_halvings"] >= 0, "max_halvings must be >= 0")
    check("output.snapshots", v["output.snapshots"] >= 0, "snapshots must be >= 0")
    if "run.mu_schedule" in v:
        s = v["run.mu_schedule"]
        if check("run.mu_schedule", len(s) > 0 and all(x > 0 for x in s), "entries must be positive"):
            check("run.mu_schedule", all(b < a for a, b in zip(s, s[1:])), "must be strictly decreasing")
    mode = v["run.mode"]
    check("run.mode", mode in ("strong", "weak"), f"mode must be 'strong' or 'weak', got {mode!r}")
    kind = v["initial.kind"]
    if check("initial.kind", kind in ("constant", "bump", "file"), f"unknown initial data kind {kind!r}"):
        if kind == "constant":
            check("initial.M", v["initial.M"] > 0 or mode == "weak", "constant M must be positive")
        elif kind == "bump":
            check("initial.width", v["initial.width"] > 0, "width must be positive")
            check("initial.height", v["initial.height"] >= 0, "height must be >= 0")
            check("initial.base", v["initial.base"] > 0 or (mode == "weak" and v["initial.base"] >= 0),
                  "base must be positive (>= 0 in weak mode)")
        elif kind == "file":
            check("initial.path", "initial.path" in v, "file initial data needs initial.path")
    for name in v["checks.list"]:
        check("checks.list", name in dg.TRAJECTORY_CHECKS + ("comparison_coupled",),
              f"unknown check {name!r}")
    if issues:
        raise ConfigError(issues)

    params = ModelParams(p=v["model.p"], alpha=v["model.alpha"], lam=v["model.lambda"], mu=v["model.mu"])
    grid = Grid1D(v["grid.n_cells"], v["grid.length"])
    run = RunConfig(t_end=v["run.t_end"], tau=v["run.tau"], mu_schedule=v.get("run.mu_schedule"),
                    blowup_cap=v["run.blowup_cap"], record_every=v["run.record_every"],
                    mode=Mode(mode), weak_shift=v["run.weak_shift"], max_halvings=v["run.max_halvings"])
    initial = {"kind": kind}
    if kind == "constant":
        initial["M"] = v["initial.M"]
    elif kind == "bump":
        initial.update(base=v["initial.base"], height=v["initial.height"], width=v["initial.width"],
                       center=v.get("initial.center", 0.5 * grid.length))
    else:
        path = Path(v["initial.path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        initial["path"] = path
    cfg = ExperimentConfig(
        model=params, grid=grid, run=run, initial=initial, checks=tuple(v["checks.list"]),
        check_bounds={k: v[f"checks.{k}"] for k in ("delta", "M") if f"checks.{k}" in v},
        output_dir=Path(v["output.dir"]), snapshots=v["output.snapshots"],
        defaults_used=tuple(defaults), values=dict(v))
    # file data is validated eagerly so that size errors point at the config
    if kind == "file":
        try:
            initial_field(cfg)
        except (OSError, ValueError) as exc:
            raise ConfigError([ConfigIssue("initial.path", lines_of.get("initial.path"), str(exc))])
    return cfg


def initial_field(cfg: ExperimentConfig) -> np.ndarray:
    g = cfg.grid
    ini = cfg.initial
    if ini["kind"] == "constant":
        return np.full(g.n_cells, ini["M"])
    if ini["kind"] == "bump":
        x = g.centers
        return ini["base"] + ini["height"] * np.exp(-((x - ini["center"]) / ini["width"]) ** 2)
    data = np.array(_floats(Path(ini["path"]).read_text()))
    if data.shape != (g.n_cells,):
        raise ValueError(f"file has {data.size} values, grid has {g.n_cells} cells")
    return data


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(FMT % x for x in row) + "\n")


def write_trajectory(traj: Trajectory, out: Path, snapshots: int = 21) -> None:
    out.mkdir(parents=True, exist_ok=True)
    xi2 = traj.xi_norms.get(2.0)
    xii = traj.xi_norms.get(math.inf)
    _write_csv(out / "trajectory.csv", ["time", "min_u", "max_u", "xi_l2", "xi_inf", "dirichlet"],
               zip(traj.times, traj.min_norms, traj.sup_norms, xi2, xii, traj.energies["dirichlet"]))
    n = len(traj.times)
    idx = np.arange(n) if snapshots == 0 or n <= snapshots else np.unique(
        np.round(np.linspace(0, n - 1, snapshots)).astype(int))
    cols = np.column_stack([traj.grid.centers] + [traj.fields[k] for k in idx])
    _write_csv(out / "snapshots.csv", ["x"] + [f"t={FMT % traj.times[k]}" for k in idx], cols)


def _brackets(traj: Trajectory, params: ModelParams):
    u0 = traj.fields[0]
    M, delta = float(u0.max()), float(u0.min())
    return M, delta, blowup_time(params, M), blowup_time(params, delta)


def summary_lines(traj: Trajectory, params: ModelParams) -> list[str]:
    M, delta, tM, td = _brackets(traj, params)
    return [
        f"blowup: {'yes' if traj.blown_up else 'no blow-up'}",
        f"blowup_time: {FMT % traj.blowup_time if traj.blown_up else 'none'}",
        f"t_final: {FMT % traj.times[-1]}",
        f"max_u_final: {FMT % traj.sup_norms[-1]}",
        f"M: {FMT % M}",
        f"delta: {FMT % delta}",
        f"T_hat_M: {FMT % tM}",
        f"T_hat_delta: {FMT % td}",
        f"mu: {FMT % traj.mu}",
        f"steps: {int(traj.steps[-1])}",
        f"tau_halvings: {len(traj.tau_log)}",
    ]


def _run_checks(cfg: ExperimentConfig, traj: Trajectory, u0) -> list[dg.CheckReport]:
    names = [c for c in cfg.checks if c != "comparison_coupled"]
    reports = dg.run_all_checks(traj, names, traj.params, **cfg.check_bounds)
    if "comparison_coupled" in cfg.checks:
        start = traj.fields[0]
        reports.append(dg.check_comparison_coupled(cfg.grid, start, start + 0.1, cfg.model, cfg.run))
    return reports


def run_experiment(cfg: ExperimentConfig, out: Path | None = None, quiet: bool = False) -> int:
    """Run one trajectory and write its artifacts; 0 iff every requested check passes."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header()
    if not quiet:
        print("\n".join(header))
    u0 = initial_field(cfg)
    try:
        traj = run_trajectory(cfg.grid, u0, cfg.model, cfg.run)
    except TrajectoryAborted as exc:
        write_trajectory(exc.partial, out, cfg.snapshots)
        (out / "error.txt").write_text(f"{exc}\n", encoding="utf-8")
        if not quiet:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    write_trajectory(traj, out, cfg.snapshots)
    reports = _run_checks(cfg, traj, u0)
    (out / "checks.txt").write_text("".join(r.line() + "\n" for r in reports), encoding="utf-8")
    summary = summary_lines(traj, traj.params)
    (out / "summary.txt").write_text("\n".join(header + summary) + "\n", encoding="utf-8")
    if not quiet:
        print("\n".join(summary))
        for r in reports:
            print(r.line())
    return 0 if all(r.passed for r in reports) else 1


def _sweep_level(args):
    cfg, mu, out = args
    run = replace(cfg.run, mu_schedule=(mu,))
    traj = run_trajectory(cfg.grid, initial_field(cfg), cfg.model, run)
    write_trajectory(traj, out, cfg.snapshots)
    (out / "summary.txt").write_text("\n".join(summary_lines(traj, traj.params)) + "\n", encoding="utf-8")
    return traj


def run_sweep(cfg: ExperimentConfig, out: Path | None = None, quiet: bool = False) -> int:
    """mu-continuation: one directory per level plus ``cauchy.csv``."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sched = cfg.run.mu_schedule or (cfg.model.mu,)
    jobs = [(cfg, mu, out / f"mu_{k}") for k, mu in enumerate(sched)]
    workers = min(len(jobs), max(1, int(os.environ.get("UNIPOR_THREADS", "1"))))
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                trajs = list(ex.map(_sweep_level, jobs))
        else:
            trajs = [_sweep_level(j) for j in jobs]
    except TrajectoryAborted as exc:
        (out / "error.txt").write_text(f"{exc}\n", encoding="utf-8")
        return 2
    t_common = min(float(tr.times[-1]) for tr in trajs)
    diffs = cauchy_differences(trajs, t_common)
    _write_csv(out / "cauchy.csv", ["mu_k", "mu_k1", "time", "l2_difference"],
               [(a, b, t_common, d) for a, b, d in zip(sched, sched[1:], diffs)])
    if not quiet:
        print("\n".join(cfg.header()))
        for a, b, d in zip(sched, sched[1:], diffs):
            print(f"mu {FMT % a} -> {FMT % b}: ||du|| = {FMT % d} at t = {FMT % t_common}")
    return 0


def run_ode(cfg: ExperimentConfig, out: Path | None = None, quiet: bool = False) -> int:
    """Limit ODE from ``M = max u0`` and regularised ODE from ``delta = min u0``."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    u0 = initial_field(cfg)
    if cfg.run.mode is Mode.WEAK:
        u0 = u0 + cfg.run.weak_shift
    M, delta = float(u0.max()), float(u0.min())
    mu = cfg.run.mu_schedule[0] if cfg.run.mu_schedule else cfg.model.mu
    zl = solve_ode_limit(cfg.model, M, cfg.run.t_end, cfg.run.tau, cap=cfg.run.blowup_cap)
    _write_csv(out / "ode_limit.csv", ["time", "z_M"], zip(zl.times, zl.values))
    lines = [f"M: {FMT % M}", f"limit_blowup: {'yes' if zl.blown_up else 'no'}"]
    if zl.blown_up:
        lines.append(f"limit_blowup_time: {FMT % zl.blowup_time}")
    if mu > 0:
        zr = solve_ode_regularized(cfg.model, delta, mu, cfg.run.t_end, cfg.run.tau,
                                   cap=cfg.run.blowup_cap)
        _write_csv(out / "ode_regularized.csv", ["time", "z_delta_mu"], zip(zr.times, zr.values))
        lines += [f"delta: {FMT % delta}", f"mu: {FMT % mu}",
                  f"regularized_blowup: {'yes' if zr.blown_up else 'no'}"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if not quiet:
        print("\n".join(lines))
    return 0


def blowup_table(params: ModelParams, Ms) -> list[tuple[float, float]]:
    return [(float(M), blowup_time(params, float(M))) for M in Ms]


def builtin_checks() -> list[dg.CheckReport]:
    """Every diagnostic on small fixtures; used by the ``check`` subcommand."""
    reports = []
    # bump with a frozen top, linear source
    g = Grid1D(64)
    x = g.centers
    u0 = 1.0 + 2.0 * np.exp(-((x - 0.5) / 0.08) ** 2)
    pr = ModelParams(p=2.0, lam=0.01, mu=1e-3)
    tr = run_trajectory(g, u0, pr, RunConfig(t_end=0.1, tau=1e-3))
    reports += dg.run_all_checks(tr, dg.TRAJECTORY_CHECKS, pr)
    # blow-up source, sandwich before the upper envelope blows up
    pr3 = ModelParams(p=3.0, lam=0.05, mu=1e-3)
    b = 0.6 + 0.8 * np.exp(-((x - 0.5) / 0.1) ** 2)
    tr3 = run_trajectory(g, b, pr3, RunConfig(t_end=0.4, tau=1e-3))
    rep = dg.check_sandwich(tr3, pr3, 0.5, 2.0)
    rep.name = "sandwich_blowup"
    reports.append(rep)
    # weak mode on data touching zero
    w0 = np.maximum(0.0, 1.0 - np.abs(x - 0.5) / 0.3)
    for tw in weak_family(g, w0, pr, RunConfig(t_end=0.1, tau=1e-3), shifts=(1e-1, 1e-2)):
        for rep in (dg.check_weak_energy(tw, pr), dg.check_weak_variational(tw, pr)):
            rep.name = f"{rep.name}_shift{tw.shift:g}"
            reports.append(rep)
    # lattice-coupled comparison
    gs = Grid1D(16)
    lo = 1.0 + 0.3 * np.sin(3 * gs.centers) ** 2
    reports.append(dg.check_comparison_coupled(gs, lo, lo + 0.2 * gs.centers, pr3,
                                               RunConfig(t_end=0.05, tau=1e-3)))
    # submodularity on random ordered data
    rng = np.random.default_rng(0)
    worst = -math.inf
    for _ in range(100):
        a0 = rng.uniform(0.5, 2.0, gs.n_cells)
        b0 = a0 + rng.uniform(0.0, 1.0, gs.n_cells)
        pa, pb = StepProblem(a0, 1e-2, pr3, gs), StepProblem(b0, 1e-2, pr3, gs)
        a = a0 + rng.uniform(0.0, 1.0, gs.n_cells)
        bb = b0 + rng.uniform(0.0, 1.0, gs.n_cells)
        worst = max(worst, submodularity_gap(pa, pb, a, bb))
    reports.append(dg.CheckReport("submodularity", worst <= 1e-9, max(worst, 0.0), None, 1e-9))
    return reports


def _load(path: str | None) -> ExperimentConfig:
    if path is None:
        raise ConfigError([ConfigIssue("--config", None, "a config file is required")])
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), base_dir=p.parent)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unipor", description="Unidirectional porous-medium simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (section.key = value lines)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--quiet", action="store_true", help="suppress console output")
    sub.add_parser("run", parents=[common], help="run one trajectory")
    sub.add_parser("ode", parents=[common], help="ODE reference trajectories to CSV")
    bt = sub.add_parser("blowup-time", parents=[common], help="life-span table over an M grid")
    bt.add_argument("--p", type=float)
    bt.add_argument("--alpha", type=float, default=0.0)
    bt.add_argument("--m-min", type=float, default=0.5)
    bt.add_argument("--m-max", type=float, default=4.0)
    bt.add_argument("--count", type=int, default=8)
    sub.add_parser("check", parents=[common], help="property suite on built-in fixtures")
    sub.add_parser("sweep", parents=[common], help="mu-continuation study")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "blowup-time":
            if args.config:
                params = _load(args.config).model
            elif args.p is not None:
                params = ModelParams(p=args.p, alpha=args.alpha)
            else:
                raise ConfigError([ConfigIssue("--p", None, "give --p or --config")])
            Ms = np.geomspace(args.m_min, args.m_max, args.count)
            rows = blowup_table(params, Ms)
            text = "M,T_hat\n" + "".join(f"{FMT % M},{FMT % T}\n" for M, T in rows)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "blowup_time.csv").write_text(text, encoding="utf-8")
            if not args.quiet:
                print(text, end="")
            return 0
        if args.command == "check":
            reports = builtin_checks()
            text = "".join(r.line() + "\n" for r in reports)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "checks.txt").write_text(text, encoding="utf-8")
            if not args.quiet:
                print(text, end="")
            return 0 if all(r.passed for r in reports) else 1
        cfg = _load(args.config)
        fn = {"run": run_experiment, "ode": run_ode, "sweep": run_sweep}[args.command]
        return fn(cfg, Path(args.out) if args.out else None, args.quiet)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"config error: {issue}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
