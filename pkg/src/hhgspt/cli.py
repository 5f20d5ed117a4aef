"""Command-line front end.

Configuration is flat ``key = value`` text with dotted namespaces, e.g.::

    run.regime = h_slow
    run.current = 20.051
    model.gamma = 0.083
    classifier.slow_rate_fraction = 0.004
    sweep.i_min = 5

Command-line flags override the file. Tables are comma separated with a
versioned comment line, a header row and 17 significant digits.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HHGSPTError, NoSignChange, NotFound, TooShort
from .model_core import ModelParameters, physical_current, rescale_current

__all__ = ["RunConfig", "load_config", "main", "TABLE_FORMAT"]

log = logging.getLogger("hhgspt")

TABLE_FORMAT = 1
REGIMES = ("h_slow", "n_slow")

_MODEL_KEYS = {f.name.lower(): f.name for f in dataclasses.fields(ModelParameters)}


def _classifier_keys() -> dict[str, str]:
    from .dynamics import ClassifierSettings

    return {f.name.lower(): f.name for f in dataclasses.fields(ClassifierSettings)}


_SCALAR_KEYS = {
    "run.regime": str,
    "run.current": float,
    "run.ibar": float,
    "run.system": str,
    "integrate.rel_tol": float,
    "integrate.abs_tol": float,
    "integrate.duration": float,
    "integrate.dt": float,
    "sweep.i_min": float,
    "sweep.i_max": float,
    "sweep.step": float,
    "sweep.resolution": float,
    "sweep.workers": int,
    "local.epsilon_mid": float,
    "local.v_min": float,
    "local.v_max": float,
    "local.n_grid": int,
    "geometry.n_grid": int,
    "output.dir": str,
}


@dataclass
class RunConfig:
    regime: str = "h_slow"
    current: float | None = None
    ibar: float | None = None
    system: str = "slaved_m"
    model: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    duration: float | None = None
    dt: float = 0.02
    i_min: float = 5.0
    i_max: float = 35.0
    step: float = 0.25
    resolution: float = 0.1
    workers: int | None = None
    epsilon_mid: float | None = None
    v_min: float = -0.76
    v_max: float = 0.49
    n_grid: int = 2501
    geometry_n_grid: int = 201
    out: str = "."

    def params(self) -> ModelParameters:
        base = ModelParameters.h_slow() if self.regime == "h_slow" else ModelParameters.n_slow()
        try:
            p = dataclasses.replace(base, **self.model)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.current is not None:
            p = p.with_current(self.current)
            log.info("current %.17g uA/cm^2 -> Ibar %.17g", self.current, p.Ibar)
        elif self.ibar is not None:
            p = p.with_(Ibar=self.ibar)
        return p

    def classifier_settings(self):
        from .dynamics import ClassifierSettings

        return ClassifierSettings(**self.classifier)


def _convert(key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> RunConfig:
    """Parse flat dotted key/value text; unknown keys raise ConfigError."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = RunConfig()
    ckeys = _classifier_keys()
    for key, raw in cp.items("config"):
        key = key.strip().lower()
        if key.startswith("model."):
            name = _MODEL_KEYS.get(key[6:])
            if name is None:
                raise ConfigError(f"unknown key {key}")
            cfg.model[name] = _convert(key, raw, float)
        elif key.startswith("classifier."):
            name = ckeys.get(key[11:])
            if name is None:
                raise ConfigError(f"unknown key {key}")
            kind = int if name == "min_periods" else float
            cfg.classifier[name] = None if raw.strip().lower() == "none" else _convert(key, raw, kind)
        elif key in _SCALAR_KEYS:
            val = _convert(key, raw.strip(), _SCALAR_KEYS[key])
            attr = {"output.dir": "out", "geometry.n_grid": "geometry_n_grid"}.get(
                key, key.split(".", 1)[1])
            setattr(cfg, attr, val)
        else:
            raise ConfigError(f"unknown key {key}")
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text)


def _finish(cfg: RunConfig) -> RunConfig:
    if cfg.regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}")
    if cfg.current is not None and cfg.ibar is not None:
        raise ConfigError("set either run.current or run.ibar, not both")
    from .dynamics import SYSTEMS

    if cfg.system not in SYSTEMS:
        raise ConfigError(f"system must be one of {SYSTEMS}")
    return cfg


# ------------------------------------------------------------------ tables

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if x is None:
        return ""
    return str(x)


def write_table(path: Path, name: str, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# hhgspt table={name} format={TABLE_FORMAT}", ",".join(header)]
    lines += [",".join(fmt(c) for c in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_geometry(cfg: RunConfig) -> list[Path]:
    from .geometry import fold_curves, folded_singularities, manifold_1d, singular_cycle, window

    p = cfg.params()
    out = Path(cfg.out)
    lo, hi = window(p)
    vs = np.linspace(lo, hi, cfg.geometry_n_grid)
    files = []
    fc = fold_curves(p, vs)
    files.append(write_table(out / "fold_curves.csv", "fold_curves", ["curve", "v", "h", "n"],
                             [(q.curve, q.v, q.h, q.n) for q in fc.points]))
    man = manifold_1d(p, cfg.regime, vs)
    name = "M_h" if cfg.regime == "h_slow" else "M_n"
    files.append(write_table(out / f"{name}.csv", name, ["v", "h", "n"], man.tolist()))
    qm, qp = folded_singularities(p, cfg.regime)
    cyc = singular_cycle(p, cfg.regime)
    files.append(write_table(out / "folded_singularities.csv", "folded_singularities",
                             ["name", "v", "h", "n", "relation", "gap"],
                             [(f"q_{q.branch}", q.v, q.h, q.n, cyc.relation.kind, cyc.relation.gap)
                              for q in (qm, qp)]))
    files.append(write_table(out / "singular_cycle.csv", "singular_cycle",
                             ["kind", "label", "v0", "h0", "n0", "v1", "h1", "n1"],
                             [(s.kind, s.label, *s.start, *s.end) for s in cyc.segments]))
    print(f"relation,{cyc.relation.kind}")
    return files


def cmd_thresholds(cfg: RunConfig) -> list[Path]:
    from .return_map import THRESHOLD_NAMES, find_threshold

    base = cfg.params()
    rows = []
    for name in THRESHOLD_NAMES:
        try:
            r = find_threshold(name, cfg.regime, p=base)
            rows.append((name, cfg.regime, "FOUND", r.Ibar, r.I_physical, r.residual))
        except (NoSignChange, NotFound) as exc:
            log.info("%s: %s", name, exc)
            rows.append((name, cfg.regime, "NOT_FOUND", None, None, None))
    path = write_table(Path(cfg.out) / "thresholds.csv", "thresholds",
                       ["name", "regime", "status", "Ibar", "I_physical", "residual"], rows)
    for row in rows:
        print(",".join(fmt(c) for c in row))
    return [path]


def _report_rows(rep, I):
    return [(fmt(I), rep.pattern.value, rep.epochs_above, rep.epochs_below, rep.lao_count,
             rep.period_estimate, " ".join(str(k) for k in rep.sao_counts))]


_REPORT_HEADER = ["I_physical", "class", "epochs_above", "epochs_below", "lao_count",
                  "period_estimate", "sao_counts"]


def _simulate(cfg: RunConfig):
    from .dynamics import DEFAULT_DURATION, default_initial, integrate

    p = cfg.params()
    T = cfg.duration if cfg.duration is not None else DEFAULT_DURATION[cfg.regime]
    traj = integrate(cfg.system, default_initial(p, cfg.system), T, p,
                     rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, dt=cfg.dt)
    return p, traj


def _classify(cfg: RunConfig, p, traj):
    from .dynamics import classify_pattern

    return classify_pattern(traj, cfg.classifier_settings(), p=p, regime=cfg.regime)


def _current_of(cfg: RunConfig, p) -> float:
    return cfg.current if cfg.current is not None else float(physical_current(p.Ibar, p))


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    p, traj = _simulate(cfg)
    out = Path(cfg.out)
    cols = ["time", "v", "m", "h", "n"] if traj.states.shape[1] == 4 else ["time", "v", "h", "n"]
    rows = np.column_stack([traj.times, traj.states]).tolist() if len(traj) > 1 else []
    files = [write_table(out / "trajectory.csv", "trajectory", cols, rows)]
    try:
        rep = _classify(cfg, p, traj)
    except TooShort as exc:
        print(f"class,NONE ({exc})")
        return files
    files.append(write_table(out / "report.csv", "pattern_report", _REPORT_HEADER,
                             _report_rows(rep, _current_of(cfg, p))))
    print(f"class,{rep.pattern.value}")
    return files


def cmd_classify(cfg: RunConfig) -> list[Path]:
    p, traj = _simulate(cfg)
    rep = _classify(cfg, p, traj)
    path = write_table(Path(cfg.out) / "report.csv", "pattern_report", _REPORT_HEADER,
                       _report_rows(rep, _current_of(cfg, p)))
    print(f"class,{rep.pattern.value}")
    return [path]


def cmd_sweep(cfg: RunConfig) -> list[Path]:
    from .dynamics import sweep_current

    if not cfg.i_max > cfg.i_min or cfg.step <= 0:
        raise ConfigError("sweep needs i_max > i_min and a positive step")
    base = dataclasses.replace(cfg, current=None, ibar=None).params()
    grid = np.arange(cfg.i_min, cfg.i_max + 0.5 * cfg.step, cfg.step)
    res = sweep_current((cfg.i_min, cfg.i_max), cfg.regime, base, resolution=cfg.resolution,
                        workers=cfg.workers or 1, system=cfg.system, duration=cfg.duration,
                        settings=cfg.classifier_settings(), grid=grid)
    out = Path(cfg.out)
    files = [write_table(out / "sweep_points.csv", "sweep_points", ["I_physical", "class"],
                         [(pt.I_physical, pt.label) for pt in res.points]),
             write_table(out / "sweep_boundaries.csv", "sweep_boundaries",
                         ["lower", "upper", "location", "left", "right"],
                         [(b.lower, b.upper, b.location, b.left, b.right) for b in res.boundaries])]
    for b in res.boundaries:
        print(f"{b.left}->{b.right},{fmt(b.location)}")
    return files


def cmd_local(cfg: RunConfig) -> list[Path]:
    from .local_analysis import stability_segments

    p = cfg.params()
    grid = np.linspace(cfg.v_min, cfg.v_max, cfg.n_grid)
    segs = stability_segments(p, cfg.epsilon_mid, cfg.regime, grid)
    rows = [(s.v_interval[0], s.v_interval[1], s.kind.value, s.hopf_v, s.degenerate_v) for s in segs]
    return [write_table(Path(cfg.out) / "stability_segments.csv", "stability_segments",
                        ["v_lo", "v_hi", "kind", "hopf_v", "degenerate_v"], rows)]


COMMANDS = {
    "geometry": cmd_geometry,
    "thresholds": cmd_thresholds,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "classify": cmd_classify,
    "local": cmd_local,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--regime", choices=REGIMES)
    common.add_argument("--current", type=float, help="applied current in uA/cm^2")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="hhgspt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hhgspt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.regime:
            cfg.regime = args.regime
        if args.current is not None:
            cfg.current, cfg.ibar = args.current, None
        if args.out:
            cfg.out = args.out
        if args.workers is not None:
            cfg.workers = args.workers
        _finish(cfg)
        if cfg.current is None and cfg.ibar is None and args.command != "sweep":
            cfg.current = 20.0
        cfg.params()
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except (HHGSPTError, ArithmeticError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
