"""Command-line front end.

Every subcommand reads its parameters from (lowest to highest precedence)
built-in defaults, an optional JSON file given with ``--config``, and
command-line flags. JSON keys are the parameter names printed by
``--dump-config``; unknown keys are rejected.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import secrets
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import eulerian, io, lagrangian, receiver, scenarios
from .dispersion import (
    Continuous,
    Impulse,
    MediumParams,
    SourceSpec,
    field_snapshot,
    puff_cell_average,
    source_concentration,
)
from .errors import BreathLinkError, ConfigError
from .fields import ConcentrationField, GridSpec, relative_rmse

log = logging.getLogger("breathlink")

OUTPUT_ENV = "BREATHLINK_OUTPUT_DIR"


class UsageError(ConfigError):
    pass


# --- parameter parsing -----------------------------------------------------


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _range3(text):
    """``start:stop:step`` (or a 3-element list) -> tuple of floats."""
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(":")]
        except ValueError:
            raise ConfigError(f"expected start:stop:step, got {text!r}") from None
    if len(vals) != 3:
        raise ConfigError(f"expected start:stop:step, got {text!r}")
    return tuple(vals)


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _int(v):
    f = float(v)
    if not f.is_integer():
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(f)


def _opt_float(v):
    return None if v is None else float(v)


def _json_obj(v):
    if isinstance(v, (dict, list)):
        return v
    return json.loads(v)


@dataclass(frozen=True)
class Param:
    name: str
    convert: object = float
    default: object = None
    required: bool = False
    flags: tuple = ()
    help: str = ""
    is_flag: bool = False


MEDIUM = [
    Param("wind_u", float, 1.0, flags=("--u", "--wind-u"), help="wind speed along +x, m/s"),
    Param("diffusivity_K", float, 0.03, flags=("--K", "--diffusivity-K"), help="eddy diffusivity, m^2/s"),
    Param("height_H", float, 1.7, flags=("--H", "--height-H"), help="release height, m"),
    Param("reflect_ground", _bool, False, flags=("--reflect",), is_flag=True, help="add the ground image source"),
]

PARAMS = {
    "puff": [
        Param("Q", float, required=True, help="released particles"),
        *MEDIUM,
        Param("times", _floats, required=True, help="snapshot times, s (comma separated)"),
        Param("plane", str, "z=H", help="'z=H', 'z=<metres>' or 'none' for a 3-D grid"),
        Param("x", _range3, (-0.5, 1.5, 0.005), help="x start:stop:step, m"),
        Param("y", _range3, (-0.5, 0.5, 0.005), help="y start:stop:step, m"),
        Param("z", _range3, (1.2, 2.2, 0.02), help="z start:stop:step when --plane none"),
        Param("pgm", _bool, False, is_flag=True, help="also write a PGM heatmap per snapshot"),
    ],
    "plume": [
        Param("Qdot", float, required=True, help="emission rate, particles/s"),
        *MEDIUM,
        Param("plane", str, "z=H"),
        Param("x", _range3, (0.005, 2.0, 0.005)),
        Param("y", _range3, (-0.5, 0.5, 0.005)),
        Param("z", _range3, (1.2, 2.2, 0.02)),
        Param("pgm", _bool, False, is_flag=True),
    ],
    "lagrangian": [
        Param("Q", float, 40000.0),
        *MEDIUM,
        Param("n_particles", _int, 10**6, flags=("--n", "--n-particles")),
        Param("dt", float, 1e-3, help="time step, s"),
        Param("t_end", float, required=True, flags=("--t-end", "--t"), help="simulated time, s"),
        Param("boundary", str, "none", help="none | reflect_ground | absorb_ground"),
        Param("bin", float, 0.02, help="bin width, m"),
        Param("threads", _int, 1, help="worker threads (never changes results)"),
    ],
    "euler": [
        Param("Q", float, 40000.0),
        *MEDIUM,
        Param("dx", float, required=True, help="cell width, m"),
        Param("dt", _opt_float, None, help="time step, s (default: largest stable)"),
        Param("t0", float, eulerian.DEFAULT_T0, help="start time of the analytic initial puff, s"),
        Param("t_end", float, required=True, flags=("--t-end", "--t")),
        Param("half_width", float, 4.5, help="domain margin in puff sigmas at t_end"),
        Param("plane", str, "z=H", help="plane written to CSV, or 'none' for the whole grid"),
    ],
    "detect": [
        Param("lambda0", float, required=True),
        Param("lambda1", float, required=True),
        Param("tau", _opt_float, None, help="fixed threshold"),
        Param("target_pfa", _opt_float, None, help="pick the smallest threshold meeting this p_fa"),
        Param("observation", _opt_float, None, help="measured count; drawn under --hypothesis if absent"),
        Param("hypothesis", str, "h1", help="h0 | h1: which mean to draw from when no observation"),
        Param("noise_model", str, "poisson"),
        Param("gain", float, 1.0),
        Param("noise_sigma", float, 0.0),
    ],
    "roc": [
        Param("lambda0", float, required=True),
        Param("lambda1", float, required=True),
        Param("tau_max", _opt_float, None, help="last threshold of the sweep"),
    ],
    "scenario": [
        Param("medium", _json_obj, {}, help="MediumParams fields as JSON"),
        Param("receiver", _json_obj, {}, help="ReceiverSpec fields as JSON"),
        Param("transmitters", _json_obj, [], help="list of transmitter objects as JSON"),
        Param("sync_offset", float, 0.0),
        Param("background", float, 0.0),
        Param("n_windows", lambda v: None if v is None else _int(v), None),
        Param("lambda1", _opt_float, None),
        Param("tau", _opt_float, None),
        Param("target_pfa", _opt_float, None),
        Param("species", lambda v: None if v is None else str(v), None),
        Param("channel", str, "analytic"),
    ],
    "compare": [
        Param("Q", float, 40000.0),
        *MEDIUM,
        Param("t", float, 0.2, help="comparison time, s"),
        Param("n_particles", _int, 10**6, flags=("--n", "--n-particles")),
        Param("dt", float, 1e-3, help="particle time step, s"),
        Param("dx", float, 0.005, help="grid solver cell width, m"),
        Param("bin", float, 0.04, help="comparison cell width, m (a multiple of dx)"),
        Param("t0", float, eulerian.DEFAULT_T0),
        Param("threads", _int, 1),
    ],
}

GLOBAL = [
    Param("seed", lambda v: None if v is None else _int(v), None),
    Param("out", str, None),
    Param("format", str, "csv"),
]


def _flag_names(p: Param):
    return p.flags or ("--" + p.name.replace("_", "-"),)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="breathlink",
        description="Aerosol channel, receiver and link simulations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, params in PARAMS.items():
        sp = sub.add_parser(name, help=COMMAND_HELP[name], description=COMMAND_HELP[name])
        for p in params + GLOBAL:
            kw = {"dest": p.name, "default": argparse.SUPPRESS, "help": p.help or None}
            if p.is_flag:
                sp.add_argument(*_flag_names(p), action="store_const", const=True, **kw)
            else:
                sp.add_argument(*_flag_names(p), **kw)
        sp.add_argument("--config", type=Path, default=None, help="JSON parameter file")
        sp.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    return parser


COMMAND_HELP = {
    "puff": "Gaussian puff snapshots on a grid",
    "plume": "steady Gaussian plume on a grid",
    "lagrangian": "random-walk particle run, binned and compared with the puff",
    "euler": "finite-volume solve started from the analytic puff",
    "detect": "threshold detection report for one observation",
    "roc": "ROC table for Poisson hypotheses",
    "scenario": "end-to-end link scenario from a JSON definition",
    "compare": "pairwise RMSE of analytic, particle and grid channels",
}


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    params = {p.name: p for p in PARAMS[command] + GLOBAL}
    cfg = {name: p.default for name, p in params.items()}
    if ns.config is not None:
        try:
            data = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {ns.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        if data.get("command", command) != command:
            raise UsageError(f"config is for {data['command']!r}, not {command!r}")
        data.pop("command", None)
        unknown = sorted(set(data) - set(params))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(data)
    for name in params:
        if hasattr(ns, name):
            cfg[name] = getattr(ns, name)
    missing = [name for name, p in params.items() if p.required and cfg[name] is None]
    if missing:
        flags = ", ".join(_flag_names(params[m])[0] for m in missing)
        raise UsageError(f"{command}: missing required parameter(s) {flags}")
    for name, p in params.items():
        if cfg[name] is not None:
            try:
                cfg[name] = p.convert(cfg[name])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {name}: {exc}") from None
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    return cfg


def dumpable(command: str, cfg: dict) -> dict:
    out = {"command": command}
    for k, v in cfg.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


# --- shared helpers --------------------------------------------------------


def _medium(cfg) -> MediumParams:
    return MediumParams(cfg["wind_u"], cfg["diffusivity_K"], cfg["reflect_ground"])


def _plane_z(cfg) -> float | None:
    plane = cfg["plane"].replace(" ", "")
    if plane == "none":
        return None
    if plane in ("z=H", "H"):
        return cfg["height_H"]
    if plane.startswith("z="):
        try:
            return float(plane[2:])
        except ValueError:
            pass
    raise ConfigError(f"plane must be 'z=H', 'z=<metres>' or 'none', got {cfg['plane']!r}")


def _grid(cfg) -> GridSpec:
    z = _plane_z(cfg)
    if z is None:
        return GridSpec.from_ranges(cfg["x"], cfg["y"], cfg["z"])
    return GridSpec.plane(cfg["x"], cfg["y"], z)


def _outdir(cfg) -> Path:
    out = Path(cfg["out"] or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_peak(label, field):
    value, (x, y, z) = field.peak()
    print(f"{label}: peak {value:.6g} /m^3 at x={x:.4f} y={y:.4f} z={z:.4f}")


def _slice_plane(field, z):
    k = int(np.argmin(np.abs(field.grid.z - z)))
    g = field.grid
    grid = GridSpec(g.x, g.y, g.z[k : k + 1], g.dx, g.dy, g.dz)
    return ConcentrationField(grid, field.values[:, :, k : k + 1], field.time_stamp, field.species, field.meta)


# --- subcommands -------------------------------------------------------------


def cmd_puff(cfg):
    med = _medium(cfg)
    times = cfg["times"]
    if not times or any(not (math.isfinite(t) and t > 0) for t in times):
        raise ConfigError("snapshot times must be > 0")
    src = SourceSpec(Impulse(cfg["Q"]), height_H=cfg["height_H"])
    grid = _grid(cfg)
    out = _outdir(cfg)
    for t in times:
        field = field_snapshot(src, med, grid, t)
        path = io.write_field_csv(out / f"puff_t{t:.3f}.csv", field)
        if cfg["pgm"]:
            io.write_pgm(path.with_suffix(".pgm"), io.field_heatmap(field))
        _report_peak(f"t={t:.3f} s", field)
    return 0


def cmd_plume(cfg):
    med = _medium(cfg)
    src = SourceSpec(Continuous(cfg["Qdot"]), height_H=cfg["height_H"])
    if med.wind_u <= 0:
        raise ConfigError("plume needs wind_u > 0")
    grid = _grid(cfg)
    grid.check_size()
    X, Y, Z = grid.mesh()
    values = np.asarray(source_concentration(src, med, (X, Y, Z), 0.0)) * np.ones(grid.shape)
    field = ConcentrationField(grid, values, math.inf, src.species)
    out = _outdir(cfg)
    path = io.write_field_csv(out / "plume.csv", field)
    if cfg["pgm"]:
        io.write_pgm(path.with_suffix(".pgm"), io.field_heatmap(field))
    _report_peak("steady state", field)
    return 0


def cmd_lagrangian(cfg):
    med = _medium(cfg)
    src = SourceSpec(Impulse(cfg["Q"]), height_H=cfg["height_H"])
    t_end = cfg["t_end"]
    (ens,) = lagrangian.simulate(
        src, med, cfg["n_particles"], cfg["seed"], cfg["dt"], t_end,
        boundary=cfg["boundary"], workers=cfg["threads"],
    )
    sig = math.sqrt(2 * med.diffusivity_K * ens.sim_time)
    h = cfg["bin"]
    grid = GridSpec.centered((med.wind_u * ens.sim_time, 0.0, src.height_H), (4.5 * sig,) * 3, (h, h, h))
    field = lagrangian.bin_concentration(ens, grid, src.emission.Q)
    ref = puff_cell_average(src, med, grid, ens.sim_time)
    out = _outdir(cfg)
    io.write_field_csv(out / f"lagrangian_t{ens.sim_time:.3f}.csv", field)
    peak, loc = field.peak()
    report = {
        "sim_time": ens.sim_time,
        "steps": ens.steps_taken,
        "n_particles": ens.n,
        "seed": ens.seed,
        "alive": ens.n_alive,
        "absorbed": ens.n_absorbed,
        "outside_grid": field.meta["outside"],
        "peak": peak,
        "peak_location": loc,
        "analytic_cell_peak": ref.peak()[0],
        "rel_rmse_vs_analytic": relative_rmse(field.values, ref.values),
        "positions_sha256": ens.checksum(),
    }
    io.write_json(out / "lagrangian_report.json", report)
    _report_peak(f"t={ens.sim_time:.3f} s", field)
    print(f"relative RMSE vs analytic: {report['rel_rmse_vs_analytic']:.4f}")
    return 0


def cmd_euler(cfg):
    med = _medium(cfg)
    src = SourceSpec(Impulse(cfg["Q"]), height_H=cfg["height_H"])
    grid = eulerian.puff_domain(src, med, cfg["t0"], cfg["t_end"], cfg["dx"], cfg["half_width"])
    dt = cfg["dt"] if cfg["dt"] is not None else eulerian.max_stable_dt(grid, med)
    boundary = "reflect_ground" if med.reflect_ground else "open"
    solver = eulerian.GridSolverConfig(grid, dt, med, boundary)
    initial = field_snapshot(src, med, grid, cfg["t0"])
    field = eulerian.solve(initial, solver, cfg["t_end"])
    ref = field_snapshot(src, med, grid, cfg["t_end"])
    z = _plane_z(cfg)
    written = field if z is None else _slice_plane(field, z)
    out = _outdir(cfg)
    io.write_field_csv(out / f"euler_t{cfg['t_end']:.3f}.csv", written)
    report = {
        "dx": cfg["dx"],
        "dt": field.meta["dt"],
        "steps": field.meta["steps"],
        "grid_shape": list(grid.shape),
        "domain_warning": field.meta["domain_warning"],
        "mass_initial": initial.total(),
        "mass_final": field.total(),
        "l2_rel_error_vs_analytic": eulerian.l2_relative_error(field.values, ref.values),
        "rel_rmse_vs_analytic": relative_rmse(field.values, ref.values),
    }
    io.write_json(out / "euler_report.json", report)
    _report_peak(f"t={cfg['t_end']:.3f} s", field)
    print(f"relative RMSE vs analytic: {report['rel_rmse_vs_analytic']:.4f}")
    return 0


def cmd_detect(cfg):
    rx = receiver.ReceiverSpec(noise_model=cfg["noise_model"], gain=cfg["gain"], noise_sigma=cfg["noise_sigma"])
    obs = cfg["observation"]
    if obs is None:
        if cfg["hypothesis"] not in ("h0", "h1"):
            raise ConfigError("hypothesis must be h0 or h1")
        receiver._check_hypotheses(cfg["lambda0"], cfg["lambda1"])
        lam = cfg["lambda1"] if cfg["hypothesis"] == "h1" else cfg["lambda0"]
        obs = float(receiver.sample_count(lam, rx, cfg["seed"]))
    rep = receiver.detect(obs, cfg["lambda0"], cfg["lambda1"], cfg["tau"], cfg["target_pfa"], rx)
    out = _outdir(cfg)
    io.write_json(out / "detect.json", rep.as_dict())
    print(json.dumps(rep.as_dict(), sort_keys=True))
    return 0


def cmd_roc(cfg):
    l0, l1 = cfg["lambda0"], cfg["lambda1"]
    taus = None
    if cfg["tau_max"] is not None:
        taus = range(0, int(cfg["tau_max"]) + 1)
    curve = receiver.roc_curve(l0, l1, taus)
    taus = list(taus) if taus is not None else list(range(len(curve)))
    rows = [(tau, pfa, pd) for tau, (pfa, pd) in zip(taus, curve)]
    out = _outdir(cfg)
    if cfg["format"] == "json":
        io.write_json(out / "roc.json", [dict(zip(io.ROC_HEADER, r)) for r in rows])
    else:
        io.write_rows(out / "roc.csv", io.ROC_HEADER, rows)
    print(f"{len(rows)} thresholds written")
    return 0


def _transmitter(obj):
    known = {"origin", "height_H", "species", "frame", "schedule"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown transmitter keys: {sorted(unknown)}")
    base = SourceSpec(Impulse(1.0), tuple(obj.get("origin", (0.0, 0.0))),
                      obj.get("height_H", 1.7), obj.get("species", "virus"))
    if ("frame" in obj) == ("schedule" in obj):
        raise ConfigError("a transmitter needs exactly one of 'frame' or 'schedule'")
    if "frame" in obj:
        f = obj["frame"]
        return base, scenarios.SymbolFrame(tuple(f["bits"]), f["symbol_duration"],
                                           f.get("Q", scenarios.COUGH_Q), f.get("t_start", 0.0))
    events = obj["schedule"]
    sched = scenarios.EmissionSchedule(
        tuple((e["t0"], e["kind"], e.get("Q", scenarios.DEFAULT_Q.get(e["kind"], 0.0))) for e in events)
    )
    return base, sched


def cmd_scenario(cfg):
    try:
        med = MediumParams(**cfg["medium"])
        rx_kw = dict(cfg["receiver"])
        rx = receiver.ReceiverSpec(**rx_kw)
        tx = [_transmitter(t) for t in cfg["transmitters"]]
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad scenario definition: {exc}") from None
    res = scenarios.run_scenario(
        tx, med, rx,
        sync_offset=cfg["sync_offset"], seed=cfg["seed"], n_windows=cfg["n_windows"],
        background=cfg["background"], lambda1=cfg["lambda1"], tau=cfg["tau"],
        target_pfa=cfg["target_pfa"], species=cfg["species"], channel=cfg["channel"],
    )
    out = _outdir(cfg)
    io.write_json(out / "scenario.json", res.as_dict())
    rows = [
        (r.window, start, lam, r.observation, r.threshold, r.decision, r.p_fa, r.p_md)
        for r, start, lam in zip(res.reports, res.timing["window_starts"], res.window_lambdas)
    ]
    io.write_rows(out / "scenario_windows.csv", io.WINDOW_HEADER, rows)
    print("decoded:", "".join(map(str, res.decoded_bits)) or "-",
          "bit errors:", res.bit_errors if res.bit_errors is not None else "n/a")
    return 0


def compare_channels(cfg) -> dict:
    med = _medium(cfg)
    src = SourceSpec(Impulse(cfg["Q"]), height_H=cfg["height_H"])
    t = cfg["t"]
    factor = int(round(cfg["bin"] / cfg["dx"]))
    if factor < 1 or not math.isclose(factor * cfg["dx"], cfg["bin"], rel_tol=1e-9):
        raise ConfigError("bin must be a positive integer multiple of dx")
    fine = eulerian.solve_puff(src, med, t, cfg["dx"], t0=cfg["t0"])
    euler = fine.coarsen(factor)
    ref = puff_cell_average(src, med, euler.grid, t)
    (ens,) = lagrangian.simulate(src, med, cfg["n_particles"], cfg["seed"], cfg["dt"], t,
                                 workers=cfg["threads"])
    particles = lagrangian.bin_concentration(ens, euler.grid, src.emission.Q)
    return {
        "analytic-lagrangian": relative_rmse(particles.values, ref.values),
        "analytic-eulerian": relative_rmse(euler.values, ref.values),
        "eulerian-lagrangian": relative_rmse(particles.values, euler.values),
    }


def cmd_compare(cfg):
    table = compare_channels(cfg)
    out = _outdir(cfg)
    if cfg["format"] == "json":
        io.write_json(out / "compare.json", table)
    else:
        io.write_rows(out / "compare.csv", io.COMPARE_HEADER, table.items())
    for pair, v in table.items():
        print(f"{pair:22s} {v:.4f}")
    return 0


COMMANDS = {
    "puff": cmd_puff,
    "plume": cmd_plume,
    "lagrangian": cmd_lagrangian,
    "euler": cmd_euler,
    "detect": cmd_detect,
    "roc": cmd_roc,
    "scenario": cmd_scenario,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(ns.command, ns)
        if cfg["seed"] is None:
            cfg["seed"] = secrets.randbits(32)
            log.warning("no --seed given; using entropy seed %d", cfg["seed"])
        if ns.dump_config:
            print(json.dumps(dumpable(ns.command, cfg), indent=2, sort_keys=True))
            return 0
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"breathlink: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"breathlink: error: {exc}", file=sys.stderr)
        return 2
    except (BreathLinkError, OSError) as exc:
        print(f"breathlink: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
