"""Batch runner: INI run configs in, CSV / NDJSON / text out.

Keys carry their unit in the name (``gamma_mhz``, ``t1_us``, ``dt_ns``);
frequencies are ordinary frequencies and are converted to rad/ns once, when
the physics objects are built.  A parsed :class:`RunConfig` keeps the values
exactly as written so that serializing and re-parsing is lossless.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .lindblad import IntegrationError, TimeGrid
from .network import DeviceParams
from .protocol import MODES, ProtocolConfig, error_budget, run, transparency_delay
from .pulses import COUPLERS, IdealPulses, PulseSet
from .rloptim import PolicyDivergence, PpoHyper, TransferEnv, default_spans, desk_distortion, optimize
from .scattering import sweep_four_qubit

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "main", "COMMANDS"]

COMMANDS = ("simulate", "scatter", "budget", "optimize", "delay")
TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _floats4(s: str) -> tuple:
    v = tuple(float(x) for x in s.split(","))
    if len(v) == 1:
        v = v * 4
    if len(v) != 4:
        raise ValueError("expected 1 or 4 comma-separated values")
    return v


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _choice(*opts):
    def f(s: str) -> str:
        if s not in opts:
            raise ValueError(f"expected one of {opts}")
        return s
    return f


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "command": (_choice(*COMMANDS), None),
        "seed": (int, 0),
        "output_dir": (str, "out"),
    },
    "device": {
        "gamma_mhz": (_floats4, (17.0,) * 4),
        "eta2": (float, 1.0),
        "kd_rad": (float, 0.0),
        "t1_us": (_floats4, (math.inf,) * 4),
        "t2star_us": (_floats4, (math.inf,) * 4),
        "intra_module_phase_rad": (float, math.pi / 2),
        "residual_exchange_mhz": (float, 0.0),
        "sideband_loss": (float, 0.0),
    },
    "pulses": {
        "kind": (_choice("ideal", "segmented"), "ideal"),
        "gamma_ph_mhz": (float, 7.0),
        "center_ns": (float, 100.0),
        "absorber_delay_ns": (float, 0.0),
        "phases_rad": (_floats4, (0.0,) * 4),
        "total_duration_ns": (float, 200.0),
        "g_max_mhz": (float, 100.0 / TWO_PI),
    },
    "grid": {
        "t_start_ns": (float, 0.0),
        "t_end_ns": (float, 200.0),
        "dt_ns": (float, 0.05),
        "sample_stride": (int, 10),
    },
    "protocol": {
        "direction": (_choice("right", "left"), "right"),
        "mode": (_choice(*MODES), "full_transfer"),
        "prep": (_choice("auto", "+", "-"), "auto"),
        "seed_rotation_rad": (float, math.pi),
        "absorber_detuning_mhz": (float, 100.0),
        "distortion": (_choice("none", "desk"), "none"),
    },
    "sweep": {
        "detuning_start_mhz": (float, -50.0),
        "detuning_stop_mhz": (float, 50.0),
        "detuning_points": (int, 41),
        "power_mhz": (_floats, (0.001,)),
    },
    "optimize": {
        "scale": (_choice("desk", "full"), "desk"),
        "epochs": (int, 0),
        "batch_size": (int, 0),
        "shots_per_trial": (int, 0),
        "dt_ns": (float, 0.1),
    },
    "delay": {
        "window_ns": (float, 500.0),
        "dt_ns": (float, 0.1),
    },
}

_PULSE_UNITS = ["radns"] * 64 + ["radns"] * 4 + ["rad"] * 4 + ["ns"]
PULSE_PARAM_KEYS = [f"{n}_{u}".lower() for n, u in zip(PulseSet.parameter_names(), _PULSE_UNITS)]


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration, values in the units named by their keys."""

    command: str
    seed: int = 0
    output_dir: str = "out"
    sections: dict = field(default_factory=dict)
    pulse_params: tuple | None = None

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def replace(self, **kw) -> "RunConfig":
        from dataclasses import replace
        return replace(self, **kw)

    # -- conversion to physics objects (the single unit-conversion point) --
    def device(self) -> DeviceParams:
        d = self.sections["device"]
        return DeviceParams(
            gamma_per_qubit=tuple(TWO_PI * 1e-3 * g for g in d["gamma_mhz"]),
            kd=d["kd_rad"],
            eta=math.sqrt(d["eta2"]),
            t1_data=tuple(1e3 * t for t in d["t1_us"]),
            t2star_data=tuple(1e3 * t for t in d["t2star_us"]),
            intra_module_phase=d["intra_module_phase_rad"],
            residual_exchange=TWO_PI * 1e-3 * d["residual_exchange_mhz"],
            sideband_loss=d["sideband_loss"],
        )

    def grid(self) -> TimeGrid:
        g = self.sections["grid"]
        return TimeGrid(g["t_start_ns"], g["t_end_ns"], g["dt_ns"], g["sample_stride"])

    def pulses(self):
        p = self.sections["pulses"]
        g_max = TWO_PI * 1e-3 * p["g_max_mhz"]
        if p["kind"] == "ideal":
            return IdealPulses(TWO_PI * 1e-3 * p["gamma_ph_mhz"], center=p["center_ns"],
                               absorber_delay=p["absorber_delay_ns"], phases=p["phases_rad"])
        if self.pulse_params is None:
            # segmented seed sampled from the ideal shapes
            ps = PulseSet.from_ideal(self.device().gamma, TWO_PI * 1e-3 * p["gamma_ph_mhz"],
                                     self.sections["protocol"]["direction"], p["total_duration_ns"],
                                     p["phases_rad"], g_max)
            return ps.with_(absorber_delay=p["absorber_delay_ns"])
        return PulseSet.from_vector(np.array(self.pulse_params), p["total_duration_ns"], g_max)

    def protocol(self) -> ProtocolConfig:
        pr = self.sections["protocol"]
        return ProtocolConfig(
            direction=pr["direction"], mode=pr["mode"], device=self.device(), pulses=self.pulses(),
            prep=pr["prep"], initial_pi_fraction=pr["seed_rotation_rad"], grid=self.grid(),
            absorber_detuning=TWO_PI * 1e-3 * pr["absorber_detuning_mhz"],
            distortion=desk_distortion() if pr["distortion"] == "desk" else {},
        )

    def hyper(self) -> PpoHyper:
        o = self.sections["optimize"]
        h = PpoHyper.desk_scale() if o["scale"] == "desk" else PpoHyper.full_scale()
        kw = {k: o[k] for k in ("epochs", "batch_size", "shots_per_trial") if o[k] > 0}
        return h.__class__(**{**h.as_dict(), **kw})

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        cp.optionxform = str
        cp["run"] = {"command": self.command, "seed": str(self.seed), "output_dir": self.output_dir}
        for sec, vals in self.sections.items():
            cp[sec] = {k: _fmt(v) for k, v in vals.items()}
        if self.pulse_params is not None:
            cp["pulse_params"] = {k: repr(float(v)) for k, v in zip(PULSE_PARAM_KEYS, self.pulse_params)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def content_hash(self) -> str:
        """Hash of the experiment content; the output location is not part of it."""
        text = self.replace(output_dir="").to_text()
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def parse_config(text: str) -> RunConfig:
    """Parse INI text; unknown sections or keys and malformed values raise :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from None
    unknown = [s for s in cp.sections() if s not in SCHEMA and s != "pulse_params"]
    if unknown:
        raise ConfigError(f"unknown section(s): {unknown}")
    if "run" not in cp or "command" not in cp["run"]:
        raise ConfigError("missing [run] command")
    sections: dict[str, dict[str, Any]] = {}
    for sec, keys in SCHEMA.items():
        given = dict(cp[sec]) if sec in cp else {}
        bad = [k for k in given if k not in keys]
        if bad:
            raise ConfigError(f"unknown key(s) in [{sec}]: {bad}")
        vals = {}
        for k, (conv, default) in keys.items():
            if k in given:
                try:
                    vals[k] = conv(given[k].strip())
                except ValueError as e:
                    raise ConfigError(f"[{sec}] {k} = {given[k]!r}: {e}") from None
            else:
                vals[k] = default
        sections[sec] = vals
    run_sec = sections.pop("run")
    pulse_params = None
    if "pulse_params" in cp:
        given = dict(cp["pulse_params"])
        missing = [k for k in PULSE_PARAM_KEYS if k not in given]
        extra = [k for k in given if k not in PULSE_PARAM_KEYS]
        if missing or extra:
            raise ConfigError(f"[pulse_params] missing {missing[:3]}, unknown {extra[:3]}")
        try:
            pulse_params = tuple(float(given[k]) for k in PULSE_PARAM_KEYS)
        except ValueError as e:
            raise ConfigError(f"[pulse_params]: {e}") from None
    cfg = RunConfig(run_sec["command"], run_sec["seed"], run_sec["output_dir"], sections, pulse_params)
    if cfg.sections["pulses"]["kind"] == "ideal" and pulse_params is not None:
        raise ConfigError("[pulse_params] given but [pulses] kind = ideal")
    try:
        # referenced blocks must build
        cfg.device()
        cfg.grid()
        cfg.pulses()
        cfg.hyper()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_config(text)


# -- writers --

def _header(cfg: RunConfig) -> str:
    return f"chiral_interconnect {__version__} config_sha256={cfg.content_hash()}"


def write_csv(path: Path, cfg: RunConfig, cols: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# {_header(cfg)}\n")
        w = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def write_ndjson(path: Path, cfg: RunConfig, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        head = {"artifact": "chiral_interconnect", "version": __version__, "config_sha256": cfg.content_hash()}
        f.write(json.dumps(head, sort_keys=True) + "\n")
        for r in records:
            f.write(json.dumps(r, sort_keys=True, allow_nan=False, ensure_ascii=False) + "\n")


def _finite(*xs) -> None:
    for x in xs:
        if not np.all(np.isfinite(np.asarray(x, dtype=complex))):
            raise NumericalFailure("non-finite result")


# -- commands --

def _simulate(cfg: RunConfig, out: Path, threads: int) -> None:
    r = run(cfg.protocol())
    cols, rows = r.to_rows()
    _finite(rows)
    write_csv(out / "trajectory.csv", cfg, cols, rows)
    with open(out / "losses.txt", "w", encoding="utf-8") as f:
        f.write(f"# {_header(cfg)}\n")
        f.write(r.loss_accounting.to_text())


def _scatter(cfg: RunConfig, out: Path, threads: int) -> None:
    s = cfg.sections["sweep"]
    det_mhz = np.linspace(s["detuning_start_mhz"], s["detuning_stop_mhz"], s["detuning_points"])
    pw = [TWO_PI * 1e-3 * p for p in s["power_mhz"]]
    direction = cfg.sections["protocol"]["direction"]
    pts = sweep_four_qubit(cfg.device(), TWO_PI * 1e-3 * det_mhz, pw, direction, threads)
    cols = ["power_mhz", "detuning_mhz", "re_s21", "im_s21", "abs_s21", "converged", "residual"]
    coords = [(pm, dm) for pm in s["power_mhz"] for dm in det_mhz]
    rows = [[pm, float(dm), p.s21.real, p.s21.imag, abs(p.s21), int(p.converged), p.residual]
            for (pm, dm), p in zip(coords, pts)]
    _finite([r[:5] for r in rows])
    write_csv(out / "scatter.csv", cfg, cols, rows)


def _budget(cfg: RunConfig, out: Path, threads: int) -> None:
    pc = cfg.protocol()
    lb = error_budget(pc.device, pc.pulses, direction=pc.direction, grid=pc.grid)
    _finite(list(lb.as_dict().values()))
    write_ndjson(out / "budget.ndjson", cfg, [{"component": k, "fraction": v} for k, v in lb.as_dict().items()])


def _optimize(cfg: RunConfig, out: Path, threads: int) -> None:
    pc = cfg.protocol()
    h = cfg.hyper()
    p = cfg.sections["pulses"]
    o = cfg.sections["optimize"]
    g = cfg.grid()
    env = TransferEnv(pc.device, pc.direction, pc.distortion, TimeGrid(g.t_start, g.t_end, o["dt_ns"], 50),
                      h.shots_per_trial, p["total_duration_ns"], TWO_PI * 1e-3 * p["g_max_mhz"])
    seed_ps = pc.pulses if isinstance(pc.pulses, PulseSet) else PulseSet.from_ideal(
        pc.device.gamma, TWO_PI * 1e-3 * p["gamma_ph_mhz"], pc.direction, p["total_duration_ns"],
        p["phases_rad"], env.g_max)
    res = optimize(env, cfg.seed, h, seed_ps, default_spans(seed_ps), threads=threads)
    write_ndjson(out / "curve.ndjson", cfg, res.curve)
    best = cfg.replace(command="simulate", sections={**cfg.sections, "pulses": {**p, "kind": "segmented"}},
                       pulse_params=tuple(float(x) for x in res.best_pulses.to_vector()))
    (out / "best_pulses.cfg").write_text(best.to_text(), encoding="utf-8")


def _delay(cfg: RunConfig, out: Path, threads: int) -> None:
    d = cfg.sections["delay"]
    dev = cfg.device()
    gph = TWO_PI * 1e-3 * cfg.sections["pulses"]["gamma_ph_mhz"]
    tau = transparency_delay(dev, gph, window=d["window_ns"], dt=d["dt_ns"])
    _finite(tau)
    write_ndjson(out / "delay.ndjson", cfg, [{"delay_ns": tau, "four_over_gamma_ns": 4.0 / dev.gamma}])


_DISPATCH = {"simulate": _simulate, "scatter": _scatter, "budget": _budget, "optimize": _optimize, "delay": _delay}


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="chiral-interconnect", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override [run] seed")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: $THREADS or 1)")
    ap.add_argument("--out", default=None, help="override [run] output_dir")
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        cfg = load_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace(output_dir=args.out)
        threads = args.threads if args.threads is not None else int(os.environ.get("THREADS", "1"))
        if threads < 1:
            raise ConfigError("threads must be at least 1")
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _DISPATCH[cfg.command](cfg, out, threads)
    except (NumericalFailure, IntegrationError, FloatingPointError, PolicyDivergence) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
