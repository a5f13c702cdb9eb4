"""Experiment configuration: strict JSON ingestion and bundled presets.

The config data model is plain JSON (objects, arrays, numbers, strings,
booleans); unknown keys anywhere are hard errors so typos cannot silently
change an experiment.  All quantities are dimensionless in the hbar = 1,
wbar = 1 unit system.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import RegisterConfig, parse_bitstring
from .spectra import (CorrelationMatrix, NoiseChannel, SpectrumModel,
                      load_spectrum_table)


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


_INITIAL_KINDS = ("ground", "inverted", "plus_all", "ghz")

_DETECT_DEFAULTS = {"theta_rel": 0.05, "theta_len": 0.02, "theta_phi": 0.1,
                    "band": 0.2}
_ANALYSIS_DEFAULTS = {"intensity": True, "partial_intensity": False,
                      "antidiagonals": False, "detection": True}
_SOLVER_DEFAULTS = {"h_init": None, "conv_tol": 1e-8,
                    "include_nonsecular": True, "include_lamb": True,
                    "quad_verify": True}


@dataclass
class ProtocolSpec:
    kind: str                 # "parity" | "mqc"
    idle_times: tuple
    shots: int = 0
    seed: int = 0
    mqc_mode: str = "overlap_exact"


@dataclass
class ExperimentConfig:
    register: RegisterConfig
    channels: tuple
    initial_state: object
    t_max: float
    dt_out: float
    dt_rate: float
    protocol: ProtocolSpec | None = None
    analysis: dict = field(default_factory=lambda: dict(_ANALYSIS_DEFAULTS))
    detection: dict = field(default_factory=lambda: dict(_DETECT_DEFAULTS))
    solver: dict = field(default_factory=lambda: dict(_SOLVER_DEFAULTS))
    plots: bool = True
    output_dir: str | None = None
    seed: int = 0
    name: str = "custom"

    def canonical_dict(self) -> dict:
        """JSON-stable representation used for the config digest."""
        chs = []
        for ch in self.channels:
            sp = {"kind": ch.spectrum.kind, "strength": ch.spectrum.strength,
                  "cutoff": ch.spectrum.cutoff, "ir_cutoff": ch.spectrum.ir_cutoff,
                  "table": ch.spectrum.table}
            co = {"kind": ch.correlation.kind, "n": ch.correlation.n,
                  "r": ch.correlation.r, "theta": ch.correlation.theta,
                  "xi": ch.correlation.xi}
            chs.append({"coupling": ch.coupling, "spectrum": sp, "correlation": co})
        proto = None
        if self.protocol is not None:
            proto = {"kind": self.protocol.kind,
                     "idle_times": list(self.protocol.idle_times),
                     "shots": self.protocol.shots, "seed": self.protocol.seed,
                     "mqc_mode": self.protocol.mqc_mode}
        return {
            "register": {"n": self.register.n,
                         "frequencies": list(self.register.frequencies)},
            "channels": chs,
            "initial_state": self.initial_state,
            "t_max": self.t_max, "dt_out": self.dt_out, "dt_rate": self.dt_rate,
            "protocol": proto,
            "analysis": self.analysis, "detection": self.detection,
            "solver": self.solver, "plots": self.plots, "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _reject_unknown(obj: dict, allowed, path: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} at {path or 'top level'}")


def _parse_register(obj, path="register") -> RegisterConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(obj, {"n", "frequencies", "omega0"}, path)
    if "n" not in obj:
        raise ConfigError(f"{path}.n is required")
    n = obj["n"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"{path}.n must be a positive integer")
    if "frequencies" in obj and "omega0" in obj:
        raise ConfigError(f"{path}: give frequencies or omega0, not both")
    if "frequencies" in obj:
        freqs = obj["frequencies"]
        if not isinstance(freqs, list) or len(freqs) != n:
            raise ConfigError(f"{path}.frequencies must list {n} values")
        if any(not isinstance(w, (int, float)) or w <= 0 for w in freqs):
            raise ConfigError(f"{path}.frequencies must be positive numbers")
        return RegisterConfig(n, tuple(float(w) for w in freqs))
    omega0 = obj.get("omega0", 1.0)
    if not isinstance(omega0, (int, float)) or omega0 <= 0:
        raise ConfigError(f"{path}.omega0 must be a positive number")
    return RegisterConfig.uniform(n, float(omega0))


def _parse_spectrum(obj, path) -> SpectrumModel:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(obj, {"kind", "strength", "cutoff", "ir_cutoff", "table",
                          "table_path"}, path)
    kind = obj.get("kind")
    if kind not in ("ohmic", "one_over_f", "white", "tabulated"):
        raise ConfigError(f"{path}.kind must be ohmic|one_over_f|white|tabulated")
    if kind == "tabulated" and "table_path" in obj:
        base = load_spectrum_table(obj["table_path"])
        table = base.table
    else:
        table = obj.get("table")
        if table is not None:
            table = tuple((float(w), float(s)) for w, s in table)
    try:
        return SpectrumModel(
            kind=kind,
            strength=float(obj.get("strength", 1.0)),
            cutoff=float(obj.get("cutoff", 0.0)),
            ir_cutoff=float(obj.get("ir_cutoff", 0.0)),
            table=table,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_correlation(obj, n, path) -> CorrelationMatrix:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(obj, {"kind", "r", "theta", "xi"}, path)
    kind = obj.get("kind", "full")
    try:
        return CorrelationMatrix(
            kind=kind, n=n, r=int(obj.get("r", 0)),
            theta=float(obj.get("theta", 0.0)),
            xi=obj.get("xi"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_channel(obj, n, path) -> NoiseChannel:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(obj, {"coupling", "spectrum", "correlation"}, path)
    coupling = obj.get("coupling")
    if coupling not in ("transverse", "longitudinal"):
        raise ConfigError(f"{path}.coupling must be transverse or longitudinal")
    if "spectrum" not in obj:
        raise ConfigError(f"{path}.spectrum is required")
    spectrum = _parse_spectrum(obj["spectrum"], f"{path}.spectrum")
    correlation = _parse_correlation(obj.get("correlation", {}), n,
                                     f"{path}.correlation")
    return NoiseChannel(coupling=coupling, spectrum=spectrum,
                        correlation=correlation)


def _merge_defaults(obj, defaults, path) -> dict:
    if obj is None:
        return dict(defaults)
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(obj, set(defaults), path)
    out = dict(defaults)
    out.update(obj)
    return out


def parse_config(data: dict, name: str = "custom") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"register", "channels", "initial_state", "t_max", "dt_out",
               "dt_rate", "protocol", "analysis", "detection", "solver",
               "plots", "output_dir", "seed"}
    _reject_unknown(data, allowed, "")
    register = _parse_register(data.get("register"))
    chs = data.get("channels", [])
    if not isinstance(chs, list):
        raise ConfigError("channels must be an array")
    channels = tuple(
        _parse_channel(ch, register.n, f"channels[{i}]") for i, ch in enumerate(chs)
    )
    initial = data.get("initial_state", "ground")
    if isinstance(initial, dict):
        _reject_unknown(initial, {"basis"}, "initial_state")
        initial = str(initial["basis"])
        parse_bitstring(initial, register.n)
    elif initial not in _INITIAL_KINDS:
        try:
            parse_bitstring(initial, register.n)
        except (ValueError, TypeError):
            raise ConfigError(
                f"initial_state must be one of {_INITIAL_KINDS} or a bitstring"
            ) from None
    for key in ("t_max", "dt_out", "dt_rate"):
        if key not in data:
            raise ConfigError(f"{key} is required")
        if not isinstance(data[key], (int, float)) or data[key] <= 0:
            raise ConfigError(f"{key} must be a positive number")
    t_max, dt_out, dt_rate = (float(data[k]) for k in ("t_max", "dt_out", "dt_rate"))
    if dt_out < dt_rate:
        raise ConfigError("dt_out must be at least dt_rate")
    if abs(round(t_max / dt_out) * dt_out - t_max) > 1e-9 * t_max:
        raise ConfigError("t_max must be an integer multiple of dt_out")

    proto = None
    pobj = data.get("protocol")
    if pobj is not None:
        if not isinstance(pobj, dict):
            raise ConfigError("protocol must be an object or null")
        _reject_unknown(pobj, {"kind", "idle_times", "shots", "seed", "mqc_mode"},
                        "protocol")
        kind = pobj.get("kind")
        if kind not in ("parity", "mqc"):
            raise ConfigError("protocol.kind must be parity or mqc")
        idles = pobj.get("idle_times")
        if not isinstance(idles, list) or not idles:
            raise ConfigError("protocol.idle_times must be a nonempty array")
        if any(not isinstance(t, (int, float)) or t < 0 for t in idles):
            raise ConfigError("protocol.idle_times must be nonnegative numbers")
        if max(idles) > t_max:
            raise ConfigError("protocol idle times exceed t_max")
        for t in idles:
            if abs(t / dt_out - round(t / dt_out)) > 1e-9:
                raise ConfigError(
                    f"protocol idle time {t} is not a multiple of dt_out")
        proto = ProtocolSpec(
            kind=kind,
            idle_times=tuple(float(t) for t in idles),
            shots=int(pobj.get("shots", 0)),
            seed=int(pobj.get("seed", data.get("seed", 0))),
            mqc_mode=pobj.get("mqc_mode", "overlap_exact"),
        )
        if proto.mqc_mode not in ("overlap_exact", "echo_protocol"):
            raise ConfigError("protocol.mqc_mode must be overlap_exact or echo_protocol")

    analysis = _merge_defaults(data.get("analysis"), _ANALYSIS_DEFAULTS, "analysis")
    detection = _merge_defaults(data.get("detection"), _DETECT_DEFAULTS, "detection")
    solver = _merge_defaults(data.get("solver"), _SOLVER_DEFAULTS, "solver")
    plots = data.get("plots", True)
    if not isinstance(plots, bool):
        raise ConfigError("plots must be a boolean")
    return ExperimentConfig(
        register=register, channels=channels, initial_state=initial,
        t_max=t_max, dt_out=dt_out, dt_rate=dt_rate, protocol=proto,
        analysis=analysis, detection=detection, solver=solver, plots=plots,
        output_dir=data.get("output_dir"), seed=int(data.get("seed", 0)),
        name=name,
    )


def load_config(path_or_name: str) -> ExperimentConfig:
    """Load a config JSON file, or a bundled preset by name."""
    if path_or_name in PRESETS:
        return parse_config(copy.deepcopy(PRESETS[path_or_name]), name=path_or_name)
    try:
        with open(path_or_name) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path_or_name!r}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path_or_name}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_config(data, name=path_or_name)


# --------------------------------------------------------------------------
# bundled presets: the two figure-style parameter sets and their variants
# --------------------------------------------------------------------------

_NONUNIFORM_FREQS = [0.9925 + 0.0025 * a for a in range(1, 6)]
_OHMIC_RELAX = {
    "coupling": "transverse",
    "spectrum": {"kind": "ohmic", "strength": 1e-5, "cutoff": 10.0},
    "correlation": {"kind": "full"},
}
_ONE_OVER_F_DEPH = {
    "coupling": "longitudinal",
    "spectrum": {"kind": "one_over_f", "strength": 1e-9, "ir_cutoff": 1e-6},
    "correlation": {"kind": "full"},
}
_FIG2_IDLES = [0.0, 800.0, 1600.0, 2400.0, 3200.0, 4000.0]

PRESETS: dict[str, dict] = {
    # nonuniform frequencies, correlated ohmic relaxation, inverted start
    "fig1a": {
        "register": {"n": 5, "frequencies": _NONUNIFORM_FREQS},
        "channels": [copy.deepcopy(_OHMIC_RELAX)],
        "initial_state": "inverted",
        "t_max": 12000.0, "dt_out": 50.0, "dt_rate": 0.1,
        "analysis": {"intensity": True, "partial_intensity": True,
                     "antidiagonals": False, "detection": True},
    },
    # uniform frequencies, bath correlation length covering all qubits
    "fig1b": {
        "register": {"n": 5, "omega0": 1.0},
        "channels": [copy.deepcopy(_OHMIC_RELAX)],
        "initial_state": "inverted",
        "t_max": 33150.0, "dt_out": 50.0, "dt_rate": 0.1,
        "analysis": {"intensity": True, "partial_intensity": True,
                     "antidiagonals": False, "detection": True},
    },
    # correlation window limited to the first three qubits
    "fig1c": {
        "register": {"n": 5, "omega0": 1.0},
        "channels": [{
            "coupling": "transverse",
            "spectrum": {"kind": "ohmic", "strength": 1e-5, "cutoff": 10.0},
            "correlation": {"kind": "window", "r": 3},
        }],
        "initial_state": "inverted",
        "t_max": 12000.0, "dt_out": 50.0, "dt_rate": 0.1,
        "analysis": {"intensity": True, "partial_intensity": True,
                     "antidiagonals": False, "detection": True},
    },
    # correlated 1/f dephasing on top of the fig1a relaxation; parity protocol
    "fig2": {
        "register": {"n": 5, "frequencies": _NONUNIFORM_FREQS},
        "channels": [copy.deepcopy(_OHMIC_RELAX), copy.deepcopy(_ONE_OVER_F_DEPH)],
        "initial_state": "plus_all",
        "t_max": 4000.0, "dt_out": 40.0, "dt_rate": 0.1,
        "protocol": {"kind": "parity", "idle_times": list(_FIG2_IDLES),
                     "shots": 0, "seed": 7},
        "analysis": {"intensity": True, "partial_intensity": False,
                     "antidiagonals": True, "detection": True},
    },
    # as fig2 but spatially uncorrelated dephasing
    "fig2d": {
        "register": {"n": 5, "frequencies": _NONUNIFORM_FREQS},
        "channels": [
            copy.deepcopy(_OHMIC_RELAX),
            {
                "coupling": "longitudinal",
                "spectrum": {"kind": "one_over_f", "strength": 1e-9,
                             "ir_cutoff": 1e-6},
                "correlation": {"kind": "diagonal"},
            },
        ],
        "initial_state": "plus_all",
        "t_max": 4000.0, "dt_out": 40.0, "dt_rate": 0.1,
        "protocol": {"kind": "parity", "idle_times": list(_FIG2_IDLES),
                     "shots": 0, "seed": 7},
        "analysis": {"intensity": True, "partial_intensity": False,
                     "antidiagonals": True, "detection": True},
    },
    # pure correlated dephasing: decoherence-free subspace demonstration
    "dfs": {
        "register": {"n": 5, "frequencies": _NONUNIFORM_FREQS},
        "channels": [copy.deepcopy(_ONE_OVER_F_DEPH)],
        "initial_state": "plus_all",
        "t_max": 4000.0, "dt_out": 40.0, "dt_rate": 0.1,
        "protocol": {"kind": "parity", "idle_times": list(_FIG2_IDLES),
                     "shots": 0, "seed": 7},
        "analysis": {"intensity": False, "partial_intensity": False,
                     "antidiagonals": True, "detection": True},
    },
    # white-noise dephasing base config for superdecoherence N-sweeps
    "sweep_white": {
        "register": {"n": 5, "omega0": 1.0},
        "channels": [{
            "coupling": "longitudinal",
            "spectrum": {"kind": "white", "strength": 2e-4},
            "correlation": {"kind": "full"},
        }],
        "initial_state": "plus_all",
        "t_max": 200.0, "dt_out": 10.0, "dt_rate": 0.5,
        "protocol": {"kind": "parity",
                     "idle_times": [0.0, 50.0, 100.0, 150.0, 200.0],
                     "shots": 0, "seed": 11},
        "analysis": {"intensity": False, "partial_intensity": False,
                     "antidiagonals": True, "detection": False},
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def with_register_size(config: ExperimentConfig, n: int) -> ExperimentConfig:
    """Rebuild a config for a different register size (used by N-sweeps)."""
    if config.register.is_uniform:
        reg = RegisterConfig.uniform(n, config.register.frequencies[0])
    else:
        freqs = np.interp(np.linspace(0, 1, n), np.linspace(0, 1, config.register.n),
                          config.register.frequencies)
        reg = RegisterConfig(n, tuple(float(w) for w in freqs))
    channels = tuple(
        NoiseChannel(
            coupling=ch.coupling,
            spectrum=ch.spectrum,
            correlation=CorrelationMatrix(
                kind=ch.correlation.kind, n=n, r=ch.correlation.r,
                theta=ch.correlation.theta,
                xi=None if ch.correlation.xi is None else ch.correlation.xi,
            ),
        )
        for ch in config.channels
    )
    for ch in channels:
        if ch.correlation.kind == "custom":
            raise ConfigError("cannot resize a custom correlation matrix in a sweep")
    return replace(config, register=reg, channels=channels)
