"""Command-line entry point: configure, run, write artifacts.

Configuration is flat ``key = value`` text with section prefixes
(``surface.kind``, ``flow.dt``, ...), chosen for diffability in experiment
logs.  Precedence: built-in defaults < config file < repeated ``--set``
flags.  Unknown keys are a hard error.

Exit codes: 0 success, 1 usage/configuration error, 2 blow-up abort
(partial outputs are still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from .geometry import build_surface, TORUS, SPHERE
from .flow import (FlowConfig, evolve, RK4, IMEX1, save_trajectory_csv,
                   save_metadata)
from . import diagnostics as diag
from . import experiments as exp
from .estimates import append_report_csv
from .svgplot import line_plot

COMMANDS = ("simulate", "uniqueness", "convergence", "manufactured",
            "inequalities")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(s):
    low = s.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_floats(s):
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _parse_ints(s):
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


# key -> (default, parser, constraint description or None, constraint check)
_SCHEMA = {
    "command": ("simulate", str, f"one of {COMMANDS}",
                lambda v: v in COMMANDS),
    "surface.kind": (TORUS, str, f"'{TORUS}' or '{SPHERE}'",
                     lambda v: v in (TORUS, SPHERE)),
    "surface.resolution": (64, int, ">= 7", lambda v: v >= 7),
    "flow.integrator": (RK4, str, f"'{RK4}' or '{IMEX1}'",
                        lambda v: v in (RK4, IMEX1)),
    "flow.dt": (1e-3, float, "> 0", lambda v: v > 0),
    "flow.t_end": (1.0, float, "> 0", lambda v: v > 0),
    "flow.cfl_safety": (1.0, float, "in (0, 1]", lambda v: 0 < v <= 1),
    "flow.store_every": (1, int, ">= 1", lambda v: v >= 1),
    "flow.store_spacing": (0.0, float, ">= 0 (0 = auto)", lambda v: v >= 0),
    "flow.renormalize_volume": (False, _parse_bool, None, None),
    "initial.amplitude": (0.1, float, ">= 0", lambda v: v >= 0),
    "initial.band_limit": (0, int, ">= 0 (0 = resolution/3)", lambda v: v >= 0),
    "initial.seed": (42, int, None, None),
    "experiment.dt_levels": ((5e-3, 2.5e-3, 1.25e-3), _parse_floats,
                             "nonempty, positive",
                             lambda v: len(v) > 0 and all(d > 0 for d in v)),
    "experiment.t_ladder": ((0.4, 0.2, 0.1, 0.05), _parse_floats,
                            "nonempty, positive",
                            lambda v: len(v) > 0 and all(t > 0 for t in v)),
    "experiment.resolutions": ((), _parse_ints, None, None),
    "output.dir": ("runs", str, None, None),
    "output.plots": (False, _parse_bool, None, None),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict
    explicit: set

    def __getitem__(self, key):
        return self.values[key]

    def was_set(self, key) -> bool:
        return key in self.explicit


def _coerce(key, raw):
    if key not in _SCHEMA:
        raise ConfigError(f"unknown configuration key: {key!r}")
    default, parser, constraint, check = _SCHEMA[key]
    if isinstance(raw, str):
        try:
            value = parser(raw)
        except ConfigError:
            raise
        except Exception:
            raise ConfigError(
                f"bad value for {key!r}: {raw!r} (expected {parser.__name__})")
    else:
        value = raw
    if check is not None and not check(value):
        raise ConfigError(f"constraint violated for {key!r}: must be {constraint}, "
                          f"got {value!r}")
    return value


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, val = stripped.partition("=")
            pairs[key.strip()] = val.strip()
    return pairs


def parse_config(config_path=None, sets=(), command=None, out=None,
                 plots=None) -> RunConfig:
    """Merge defaults, config file, and --set overrides into a validated RunConfig."""
    values = {k: spec[0] for k, spec in _SCHEMA.items()}
    explicit = set()
    if config_path:
        for key, raw in _read_config_file(config_path).items():
            values[key] = _coerce(key, raw)
            explicit.add(key)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        values[key.strip()] = _coerce(key.strip(), raw.strip())
        explicit.add(key.strip())
    if command is not None:
        values["command"] = _coerce("command", command)
        explicit.add("command")
    if out is not None:
        values["output.dir"] = _coerce("output.dir", out)
        explicit.add("output.dir")
    if plots is not None:
        values["output.plots"] = bool(plots)
        explicit.add("output.plots")
    return RunConfig(values, explicit)


def _experiment_spec(cfg: RunConfig, name) -> exp.ExperimentSpec:
    band = cfg["initial.band_limit"] or None
    return exp.ExperimentSpec(
        name=name,
        surface_kind=cfg["surface.kind"],
        resolution=cfg["surface.resolution"],
        seed=cfg["initial.seed"],
        initial_amplitude=cfg["initial.amplitude"],
        band_limit=band,
        dt_levels=cfg["experiment.dt_levels"],
        t_end=cfg["flow.t_end"],
        outputs=cfg["output.dir"],
    )


def _cmd_simulate(cfg: RunConfig) -> int:
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    surface = build_surface(cfg["surface.kind"], cfg["surface.resolution"])
    band = cfg["initial.band_limit"] or surface.resolution // 3
    u0 = exp.random_initial_data(surface, cfg["initial.seed"], band,
                                 cfg["initial.amplitude"])
    fc = FlowConfig(
        integrator=cfg["flow.integrator"], dt=cfg["flow.dt"],
        t_end=cfg["flow.t_end"], cfl_safety=cfg["flow.cfl_safety"],
        store_every=cfg["flow.store_every"],
        store_spacing=cfg["flow.store_spacing"] or None,
        renormalize_volume=cfg["flow.renormalize_volume"])
    traj = evolve(u0, fc)
    records = diag.diagnose(traj)
    diag.diagnostics_to_csv(records, os.path.join(out, "diagnostics.csv"))
    save_trajectory_csv(traj, os.path.join(out, "trajectory.csv"))
    save_metadata(traj, fc, os.path.join(out, "run_metadata.txt"))
    if cfg["output.plots"]:
        ts = [r.t for r in records]
        line_plot(os.path.join(out, "energy.svg"),
                  {"energy": (ts, [r.energy for r in records])},
                  title="Liouville energy", xlabel="t", ylabel="E")
        line_plot(os.path.join(out, "curvature_deviation.svg"),
                  {"sup |K - kbar|": (ts, [r.curv_dev_linf for r in records])},
                  title="Curvature deviation", xlabel="t", ylabel="log10",
                  log_y=True)
    if traj.blown:
        with open(os.path.join(out, "blowup_note.txt"), "w", newline="\n") as fh:
            fh.write(traj.note + "\n")
        return 2
    return 0


def _cmd_uniqueness(cfg: RunConfig) -> int:
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    spec = _experiment_spec(cfg, "uniqueness")
    if not cfg.was_set("initial.amplitude"):
        # contraction at the smallest ladder horizon needs small default data
        spec.initial_amplitude = exp.DEFAULT_UNIQUENESS_AMPLITUDE
    if not cfg.was_set("initial.band_limit"):
        spec.band_limit = exp.DEFAULT_UNIQUENESS_BAND
    if not cfg.was_set("flow.t_end"):
        spec.t_end = 0.5
    result = exp.uniqueness_experiment(spec, T_ladder=cfg["experiment.t_ladder"])
    summary = os.path.join(out, "uniqueness_summary.csv")
    if os.path.exists(summary):
        os.remove(summary)
    for rep in result.reports:
        append_report_csv(rep, summary)
    with open(os.path.join(out, "uniqueness_fit.txt"), "w", newline="\n") as fh:
        fh.write(f"slope = {result.fit.slope:.17g}\n"
                 f"intercept = {result.fit.intercept:.17g}\n"
                 f"correlation = {result.fit.correlation:.17g}\n")
    if cfg["output.plots"]:
        ts = [rep.T for rep in result.reports]
        line_plot(os.path.join(out, "delta_vs_T.svg"),
                  {"delta(T)": (ts, [rep.delta for rep in result.reports])},
                  title="Contraction factor", xlabel="T", ylabel="delta")
    return 0


def _cmd_convergence(cfg: RunConfig) -> int:
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    spec = _experiment_spec(cfg, "convergence")
    result = exp.convergence_to_constant_curvature(spec)
    with open(os.path.join(out, "convergence_fit.txt"), "w", newline="\n") as fh:
        fh.write(f"status = {result.status}\n")
        if result.fit is not None:
            fh.write(f"slope = {result.fit.slope:.17g}\n"
                     f"correlation = {result.fit.correlation:.17g}\n")
    if cfg["output.plots"]:
        line_plot(os.path.join(out, "curvature_decay.svg"),
                  {"sup |K - kbar|": (result.times, result.curv_dev_linf)},
                  title="Curvature decay", xlabel="t", ylabel="log10",
                  log_y=True)
    return 0


def _cmd_manufactured(cfg: RunConfig) -> int:
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    spec = _experiment_spec(cfg, "manufactured")
    if not cfg.was_set("flow.t_end"):
        spec.t_end = 0.5
    results = exp.manufactured_convergence(spec)
    with open(os.path.join(out, "manufactured_orders.txt"), "w",
              newline="\n") as fh:
        for integ in (RK4, IMEX1):
            fit = results[integ]
            fh.write(f"{integ}.slope = {fit.slope:.17g}\n"
                     f"{integ}.correlation = {fit.correlation:.17g}\n")
    return 0


def _cmd_inequalities(cfg: RunConfig) -> int:
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    spec = _experiment_spec(cfg, "inequalities")
    resolutions = cfg["experiment.resolutions"] or (spec.resolution,)
    result = exp.inequality_campaign(spec, resolutions=resolutions)
    path = os.path.join(out, "inequalities.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("resolution,gn_max,tm_max,sobolev_constant,exp_moments_finite\n")
        for res in sorted(result.gn_max):
            fh.write(f"{res},{result.gn_max[res]:.17g},{result.tm_max:.17g},"
                     f"{result.sobolev_constant:.17g},"
                     f"{str(result.exp_moments_finite).lower()}\n")
    return 0


_DISPATCH = {
    "simulate": _cmd_simulate,
    "uniqueness": _cmd_uniqueness,
    "convergence": _cmd_convergence,
    "manufactured": _cmd_manufactured,
    "inequalities": _cmd_inequalities,
}


def run(cfg: RunConfig) -> int:
    """Dispatch a validated configuration; returns the process exit code."""
    threads = os.environ.get("RICCI_THREADS")
    if threads:
        try:
            n = max(1, int(threads))
        except ValueError:
            n = 1
        os.environ.setdefault("OMP_NUM_THREADS", str(n))
    return _DISPATCH[cfg["command"]](cfg)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def main(argv=None) -> int:
    parser = _Parser(prog="ricciflow", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", nargs="?", choices=COMMANDS,
                        help="what to run (may also come from the config file)")
    parser.add_argument("--config", help="path to key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--plots", action="store_true", default=None,
                        help="also write SVG plots")
    try:
        args = parser.parse_args(argv)
        cfg = parse_config(args.config, args.set, command=args.command,
                           out=args.out, plots=args.plots)
        return run(cfg)
    except ConfigError as err:
        print(f"ricciflow: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
