"""Experiment orchestration: rate table, evolution, analyses, file outputs.

A run writes delimited traces (intensity.csv, antidiagonals.csv,
parity_t{i}.csv / mqc_t{i}.csv, rho_k.csv / iq.csv), report.json,
manifest.json, and matplotlib figures next to them.  Floats are written with
repr so reruns of the same config are byte-identical (manifest timestamps
aside).  Every file is written to a temp name and renamed into place;
partial outputs are removed when a stage fails.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import ExperimentConfig, with_register_size
from .detect import build_report
from .dynamics import GeneratorContext, Trajectory, evolve
from .hilbert import bitstring_index, complement, index_bits, initial_state
from .observables import IntensityTrace, intensity_trace
from .protocols import ProtocolResult, run_protocol
from .spectra import build_rate_table


@dataclass
class RunResult:
    config: ExperimentConfig
    out_dir: str
    trajectory: Trajectory
    intensity: IntensityTrace | None
    protocol: ProtocolResult | None
    report: dict
    files: list


def _fmt(x) -> str:
    return repr(float(x))


class _OutputSet:
    """Atomic writes with cleanup of everything created on failure."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def write_text(self, name: str, text: str):
        path = os.path.join(self.out_dir, name)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
        self.files.append(path)
        return path

    def write_csv(self, name: str, header: list[str], rows):
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(x) for x in row))
        return self.write_text(name, "\n".join(lines) + "\n")

    def cleanup(self):
        for path in self.files:
            try:
                os.remove(path)
            except OSError:
                pass


def _antidiag_pairs(n: int):
    """Canonical anti-diagonal pairs: bitstrings l with the leading bit set."""
    dim = 2 ** n
    out = []
    for idx in range(dim // 2, dim):
        bits = index_bits(idx, n)
        out.append(("".join(map(str, bits)), bitstring_index(complement(bits)), idx))
    return out


def build_context(config: ExperimentConfig) -> GeneratorContext:
    table = build_rate_table(
        config.channels, config.register, config.t_max, config.dt_rate,
        verify=config.solver.get("quad_verify", True),
    )
    return GeneratorContext(
        table,
        include_nonsecular=config.solver.get("include_nonsecular", True),
        include_lamb_hamiltonians=config.solver.get("include_lamb", True),
    )


def run(config: ExperimentConfig, out_dir: str | None = None,
        seed: int | None = None, threads: int = 1) -> RunResult:
    """Execute a full experiment and write its artifact files."""
    out_dir = out_dir or config.output_dir or f"runs/{config.name}"
    if seed is not None and config.protocol is not None:
        config = replace(config, protocol=replace(config.protocol, seed=seed))
    outputs = _OutputSet(out_dir)
    timings: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        ctx = build_context(config)
        timings["rate_table"] = time.perf_counter() - t0

        rho0 = initial_state(config.initial_state, config.register.n)
        t0 = time.perf_counter()
        traj = evolve(ctx, rho0, config.t_max, config.dt_out,
                      h_init=config.solver.get("h_init"),
                      conv_tol=config.solver.get("conv_tol", 1e-8))
        traj.stats["config_digest"] = config.digest()
        timings["evolve"] = time.perf_counter() - t0

        intensity = None
        if config.analysis.get("intensity", True):
            t0 = time.perf_counter()
            intensity = intensity_trace(ctx, traj)
            timings["intensity"] = time.perf_counter() - t0
            _write_intensity_csv(outputs, config, intensity)

        if config.analysis.get("antidiagonals", False):
            _write_antidiagonals_csv(outputs, config, traj)

        protocol = None
        if config.protocol is not None:
            t0 = time.perf_counter()
            protocol = run_protocol(
                ctx, config.initial_state, config.protocol.idle_times,
                config.protocol.kind, shots=config.protocol.shots,
                seed=config.protocol.seed, dt_out=config.dt_out,
                mqc_mode=config.protocol.mqc_mode,
                trajectory=traj,  # already covers every idle time
            )
            timings["protocol"] = time.perf_counter() - t0
            _write_protocol_csvs(outputs, protocol)

        report = build_report(
            intensity=intensity if config.analysis.get("detection", True) else None,
            protocol_result=protocol if config.analysis.get("detection", True) else None,
            thresholds=config.detection,
        ).to_dict()
        outputs.write_text("report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")

        if config.plots:
            try:
                from .plots import render_run_figures
                figs = render_run_figures(out_dir, config, intensity, traj,
                                          protocol)
                outputs.files.extend(figs)
            except Exception as exc:  # plots are best-effort decoration
                print(f"warning: figure rendering failed: {exc}", file=sys.stderr)

        manifest = {
            "config_digest": config.digest(),
            "config": config.canonical_dict(),
            "preset": config.name,
            "versions": {
                "corrnoise": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
            "integrator": {
                "step": traj.step,
                "n_steps": traj.stats["n_steps"],
                "halving_diff": traj.stats.get("halving_diff"),
                "max_trace_dev": traj.stats["max_trace_dev"],
                "max_herm_dev": traj.stats["max_herm_dev"],
            },
            "timings_s": {k: round(v, 3) for k, v in timings.items()},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        outputs.write_text("manifest.json", json.dumps(manifest, indent=2) + "\n")
    except Exception:
        outputs.cleanup()
        raise
    return RunResult(config=config, out_dir=out_dir, trajectory=traj,
                     intensity=intensity, protocol=protocol, report=report,
                     files=outputs.files)


def _write_intensity_csv(outputs, config, tr: IntensityTrace):
    n = config.register.n
    header = (["t", "W", "I_total", "I_local", "I_corr"]
              + [f"I_corr_{k}" for k in range(1, n + 1)]
              + [f"Z_{a}" for a in range(1, n + 1)]
              + ["min_eig"])
    rows = []
    for i in range(tr.times.size):
        rows.append([tr.times[i], tr.energy[i], tr.i_total[i], tr.i_local[i],
                     tr.i_corr[i]]
                    + [tr.i_corr_partial[k, i] for k in range(n)]
                    + [tr.zexp[a, i] for a in range(n)]
                    + [tr.min_eigenvalue[i]])
    outputs.write_csv("intensity.csv", header, rows)


def _write_antidiagonals_csv(outputs, config, traj: Trajectory):
    n = config.register.n
    pairs = _antidiag_pairs(n)
    header = ["t"]
    for label, _, _ in pairs:
        header += [f"re_{label}", f"im_{label}"]
    rows = []
    for t, rho in zip(traj.times, traj.states):
        row = [t]
        for _, row_idx, col_idx in pairs:
            val = rho[row_idx, col_idx]
            row += [val.real, val.imag]
        rows.append(row)
    outputs.write_csv("antidiagonals.csv", header, rows)


def _write_protocol_csvs(outputs, protocol: ProtocolResult):
    for i, trace in enumerate(protocol.traces):
        name = f"{'parity' if protocol.protocol == 'parity' else 'mqc'}_t{i}.csv"
        rows = [[phi, val] for phi, val in zip(trace.phis, trace.values)]
        outputs.write_csv(name, ["phi", "P" if protocol.protocol == "parity" else "S"],
                          rows)
    if protocol.protocol == "parity":
        rows = []
        for t, ext in zip(protocol.idle_times, protocol.extractions):
            for k in sorted(ext):
                v = ext[k]
                rows.append([t, k, v.real, v.imag, abs(v)])
        outputs.write_csv("rho_k.csv", ["idle_t", "k", "Re", "Im", "abs"], rows)
    else:
        rows = []
        for t, ext in zip(protocol.idle_times, protocol.extractions):
            for q in sorted(ext):
                rows.append([t, q, ext[q]])
        outputs.write_csv("iq.csv", ["idle_t", "q", "I_q"], rows)


# --------------------------------------------------------------------------
# detection entry point (run or reuse a directory of traces)
# --------------------------------------------------------------------------

def detect(target, thresholds: dict | None = None) -> dict:
    """Detection report from a config (runs it) or a run directory."""
    if isinstance(target, ExperimentConfig):
        th = dict(target.detection)
        th.update(thresholds or {})
        result = run(replace(target, detection=th))
        return result.report
    return _detect_from_dir(target, thresholds)


def _detect_from_dir(path: str, thresholds: dict | None) -> dict:
    import csv

    intensity = None
    ipath = os.path.join(path, "intensity.csv")
    if os.path.exists(ipath):
        with open(ipath) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(x) for x in row] for row in reader])
        col = {name: i for i, name in enumerate(header)}
        n = sum(1 for name in header if name.startswith("I_corr_"))
        partial = np.stack([data[:, col[f"I_corr_{k}"]] for k in range(1, n + 1)])

        class _Loaded:
            times = data[:, col["t"]]
            i_total = data[:, col["I_total"]]
            i_corr = data[:, col["I_corr"]]
            i_corr_partial = partial

        intensity = _Loaded()

    protocol = None
    rpath = os.path.join(path, "rho_k.csv")
    if os.path.exists(rpath):
        with open(rpath) as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [[float(x) for x in row] for row in reader]
        times = sorted({r[0] for r in rows})
        by_time = []
        for t in times:
            by_time.append({int(r[1]): complex(r[2], r[3]) for r in rows
                            if r[0] == t})

        class _LoadedProto:
            protocol = "parity"
            idle_times = np.array(times)
            extractions = by_time

        protocol = _LoadedProto()

    if intensity is None and protocol is None:
        raise FileNotFoundError(
            f"{path}: no intensity.csv or rho_k.csv to analyze")
    return build_report(intensity=intensity, protocol_result=protocol,
                        thresholds=thresholds).to_dict()


# --------------------------------------------------------------------------
# register-size sweep for the superdecoherence scaling exponent
# --------------------------------------------------------------------------

def sweep_n(config: ExperimentConfig, n_list, threads: int = 1) -> dict:
    """Fit log(decay rate of rho^(N)) against log N across register sizes.

    Each member runs the configured dephasing protocol; the far-corner
    cluster decay rate comes from a log-linear fit of |rho^(N)(t)|.
    """
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 3:
        raise ValueError("sweep needs at least 3 register sizes")
    if config.protocol is None or config.protocol.kind != "parity":
        raise ValueError("sweep_n needs a parity protocol in the base config")

    def member(n: int) -> float:
        cfg = with_register_size(config, n)
        ctx = build_context(cfg)
        result = run_protocol(ctx, cfg.initial_state, cfg.protocol.idle_times,
                              "parity", shots=cfg.protocol.shots,
                              seed=cfg.protocol.seed, dt_out=cfg.dt_out)
        t = np.asarray(result.idle_times)
        amp = np.array([abs(ext[n]) for ext in result.extractions])
        good = amp > 1e-14
        if good.sum() < 2:
            raise ValueError(f"rho^({n}) vanished; cannot fit a rate")
        slope = np.polyfit(t[good], np.log(amp[good]), 1)[0]
        return float(-slope)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rates = list(pool.map(member, n_list))
    else:
        rates = [member(n) for n in n_list]
    logn = np.log(n_list)
    logr = np.log(rates)
    (p, intercept), res = np.polyfit(logn, logr, 1), 0.0
    res = float(np.sqrt(np.mean((logr - (p * logn + intercept)) ** 2)))
    return {
        "exponent": float(p),
        "residual": res,
        "n_values": n_list,
        "rates": [float(r) for r in rates],
    }
