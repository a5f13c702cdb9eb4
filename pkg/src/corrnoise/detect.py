"""Correlation-detection verdicts from simulated (or loaded) traces.

Relaxation: correlated noise is signaled by a sustained nonzero correlated
intensity I_corr = I_total - I_local; the correlation length is the smallest
qubit prefix r whose partial intensity already matches the full one.
Dephasing: correlations separate the decay timescales of the anti-diagonal
clusters rho^(k), so the spread of the normalized magnitudes across k at the
latest idle time is the line-shape divergence metric.

Verdicts are tri-state; metrics within `band` (relative) of a threshold are
inconclusive rather than forced to a side.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

CORRELATED = "correlated"
UNCORRELATED = "uncorrelated"
INCONCLUSIVE = "inconclusive"


@dataclass
class DetectionReport:
    relaxation_correlated: dict | None
    correlation_length_estimate: object  # int, ">=N", or None
    dephasing_correlated: dict | None
    superdecoherence_scaling: dict | None
    thresholds: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _verdict(metric: float, threshold: float, band: float) -> str:
    if metric > threshold * (1.0 + band):
        return CORRELATED
    if metric < threshold * (1.0 - band):
        return UNCORRELATED
    return INCONCLUSIVE


def detect_relaxation(times, i_total, i_corr, theta_rel: float, band: float,
                      min_run: int = 10) -> dict:
    """Verdict on correlated relaxation from the intensity columns."""
    i_total = np.asarray(i_total, dtype=float)
    i_corr = np.asarray(i_corr, dtype=float)
    if i_total.size < min_run:
        return {"verdict": INCONCLUSIVE, "peak_ratio": 0.0,
                "threshold": theta_rel, "reason": "insufficient samples"}
    peak_total = float(np.max(np.abs(i_total)))
    if peak_total <= 0.0:
        return {"verdict": INCONCLUSIVE, "peak_ratio": 0.0,
                "threshold": theta_rel, "reason": "all-zero intensity"}
    ratio = float(np.max(np.abs(i_corr)) / peak_total)
    above = np.abs(i_corr) > theta_rel * peak_total
    run = best = 0
    for flag in above:
        run = run + 1 if flag else 0
        best = max(best, run)
    verdict = _verdict(ratio, theta_rel, band)
    if verdict == CORRELATED and best < min_run:
        verdict = INCONCLUSIVE
    return {"verdict": verdict, "peak_ratio": ratio, "threshold": theta_rel,
            "sustained_samples": int(best)}


def correlation_length(i_corr_partial, theta_len: float):
    """Smallest r with max_t |I^(r) - I^(N)| below theta_len * peak |I^(N)|.

    Returns r as an integer when the partial intensity saturates before the
    register edge, the string ">=N" when only r = N qualifies, or None when
    there is no correlated signal to measure.
    """
    partial = np.asarray(i_corr_partial, dtype=float)
    n = partial.shape[0]
    peak = float(np.max(np.abs(partial[n - 1])))
    if peak <= 0.0:
        return None
    for r in range(1, n + 1):
        if np.max(np.abs(partial[r - 1] - partial[n - 1])) < theta_len * peak:
            return r if r < n else ">=%d" % n
    return ">=%d" % n


def detect_dephasing(idle_times, rho_k_by_time: list[dict], theta_phi: float,
                     band: float, floor: float = 1e-6) -> dict:
    """Verdict on correlated dephasing from the rho^(k) idle-time profiles."""
    if len(rho_k_by_time) < 2:
        return {"verdict": INCONCLUSIVE, "spread": 0.0, "threshold": theta_phi,
                "reason": "need at least two idle times"}
    ref = rho_k_by_time[0]
    ks = sorted(k for k, v in ref.items() if abs(v) > floor)
    if len(ks) < 2:
        return {"verdict": INCONCLUSIVE, "spread": 0.0, "threshold": theta_phi,
                "reason": "fewer than two populated anti-diagonal clusters"}
    last = rho_k_by_time[-1]
    norms = [abs(last.get(k, 0.0)) / abs(ref[k]) for k in ks]
    spread = float(max(norms) - min(norms))
    return {"verdict": _verdict(spread, theta_phi, band), "spread": spread,
            "threshold": theta_phi,
            "latest_idle_time": float(np.asarray(idle_times)[-1])}


def build_report(intensity=None, protocol_result=None, sweep=None,
                 thresholds=None) -> DetectionReport:
    th = dict({"theta_rel": 0.05, "theta_len": 0.02, "theta_phi": 0.1,
               "band": 0.2})
    if thresholds:
        th.update(thresholds)
    relax = None
    length = None
    if intensity is not None:
        relax = detect_relaxation(intensity.times, intensity.i_total,
                                  intensity.i_corr, th["theta_rel"], th["band"])
        length = correlation_length(intensity.i_corr_partial, th["theta_len"])
    deph = None
    if protocol_result is not None and protocol_result.protocol == "parity":
        deph = detect_dephasing(protocol_result.idle_times,
                                protocol_result.extractions,
                                th["theta_phi"], th["band"])
    return DetectionReport(
        relaxation_correlated=relax,
        correlation_length_estimate=length,
        dephasing_correlated=deph,
        superdecoherence_scaling=sweep,
        thresholds=th,
    )


# --------------------------------------------------------------------------
# report.json schema validation (minimal, schema shipped with the package)
# --------------------------------------------------------------------------

def validate_report(obj: dict) -> list[str]:
    """Check a report dict against the shipped schema; returns problems."""
    import importlib.resources as res
    import json

    schema = json.loads(
        res.files("corrnoise").joinpath("report_schema.json").read_text())
    errors: list[str] = []
    _validate_node(obj, schema, "", errors)
    return errors


def _validate_node(obj, schema, path, errors):
    types = {"object": dict, "array": list, "string": str, "number": (int, float),
             "integer": int, "boolean": bool, "null": type(None)}
    t = schema.get("type")
    if t is not None:
        allowed = t if isinstance(t, list) else [t]
        if not any(isinstance(obj, types[a]) and not
                   (a in ("number", "integer") and isinstance(obj, bool))
                   for a in allowed):
            errors.append(f"{path or '$'}: expected {t}, got {type(obj).__name__}")
            return
    if "enum" in schema and obj not in schema["enum"]:
        errors.append(f"{path or '$'}: {obj!r} not in {schema['enum']}")
    if isinstance(obj, dict) and "properties" in schema:
        for key in schema.get("required", []):
            if key not in obj:
                errors.append(f"{path or '$'}: missing required key {key!r}")
        for key, sub in schema["properties"].items():
            if key in obj:
                _validate_node(obj[key], sub, f"{path}.{key}", errors)
    if isinstance(obj, dict) and "anyOf" in schema:
        pass
    if "anyOf" in schema:
        sub_errors = []
        for sub in schema["anyOf"]:
            errs: list[str] = []
            _validate_node(obj, sub, path, errs)
            sub_errors.append(errs)
        if all(errs for errs in sub_errors):
            errors.append(f"{path or '$'}: no anyOf branch matched")
    if isinstance(obj, list) and "items" in schema:
        for i, item in enumerate(obj):
            _validate_node(item, schema["items"], f"{path}[{i}]", errors)
