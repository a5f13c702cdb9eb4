"""Figure rendering for run outputs (SVG files next to the CSV data)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, out_dir, name, files):
    path = os.path.join(out_dir, name)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    files.append(path)


def render_run_figures(out_dir, config, intensity, traj, protocol) -> list:
    files: list[str] = []
    n = config.register.n
    if intensity is not None:
        fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6.0, 6.0), sharex=True)
        ax0.plot(intensity.times, intensity.energy, color="tab:blue")
        ax0.set_ylabel("W(t)")
        ax1.plot(intensity.times, intensity.i_total, label="I_total", color="tab:blue")
        ax1.plot(intensity.times, intensity.i_local, label="I_local", color="tab:red")
        ax1.plot(intensity.times, intensity.i_corr, label="I_corr", color="tab:green")
        ax1.set_xlabel("t")
        ax1.set_ylabel("intensity")
        ax1.legend(frameon=False, fontsize=8)
        _save(fig, out_dir, "intensity.svg", files)

        if config.analysis.get("partial_intensity", False):
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for k in range(n):
                ax.plot(intensity.times, intensity.i_corr_partial[k],
                        label=f"k={k + 1}")
            ax.set_xlabel("t")
            ax.set_ylabel("partial correlated intensity")
            ax.legend(frameon=False, fontsize=8)
            _save(fig, out_dir, "partial_intensity.svg", files)

    if config.analysis.get("antidiagonals", False) and traj is not None:
        from .runner import _antidiag_pairs

        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for label, r, c in _antidiag_pairs(n):
            mags = [abs(s[r, c]) for s in traj.states]
            ax.plot(traj.times, mags, lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("|rho_(lbar,l)|")
        _save(fig, out_dir, "antidiagonals.svg", files)

    if protocol is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for t, trace in zip(protocol.idle_times, protocol.traces):
            order = np.argsort(trace.phis)
            ax.plot(trace.phis[order], trace.values[order], marker="o", ms=3,
                    label=f"t={t:g}")
        ax.set_xlabel("phi")
        ax.set_ylabel("P(phi)" if protocol.protocol == "parity" else "S(phi)")
        ax.legend(frameon=False, fontsize=7)
        _save(fig, out_dir, f"{protocol.protocol}_lineshape.svg", files)

        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ks = sorted(protocol.extractions[0])
        for k in ks:
            vals = [abs(ext[k]) for ext in protocol.extractions]
            if max(vals) > 1e-12:
                ax.plot(protocol.idle_times, vals, marker="o", ms=3,
                        label=f"{'k' if protocol.protocol == 'parity' else 'q'}={k}")
        ax.set_xlabel("idle time")
        ax.set_ylabel("|rho^(k)|" if protocol.protocol == "parity" else "I_q")
        ax.legend(frameon=False, fontsize=7)
        _save(fig, out_dir, "rho_k.svg" if protocol.protocol == "parity" else "iq.svg",
              files)
    return files
