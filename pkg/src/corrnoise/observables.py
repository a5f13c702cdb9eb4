"""Energy and radiated-intensity observables for relaxation detection.

The register energy is W(t) = sum_a w_a <Z_a>(t) / 2 (inverted state maximal
under the package Z convention) and the emitted intensity I = -dW/dt.  Two
routes to I are provided: the exact generator trace
I = -(1/2) sum_a w_a Tr{Z_a D[t, rho]} evaluated channel by channel, and
second-order finite differences of recorded W samples, mirroring what an
experiment reconstructs from <Z_a> relaxometry data.  The correlated part
I_corr = I_total - I_local and its qubit-subset restrictions carry the
spatial information; their k-scaling saturates at the bath correlation
length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GeneratorContext, Trajectory, channel_dissipator, _stacks
from .hilbert import RegisterConfig


@dataclass
class IntensityTrace:
    """Per-sample intensity decomposition of one trajectory."""

    times: np.ndarray
    energy: np.ndarray          # W(t)
    i_total: np.ndarray
    i_local: np.ndarray
    i_corr: np.ndarray          # i_total - i_local by definition
    i_corr_partial: np.ndarray  # (n, nt), row k-1 = restriction to qubits 1..k
    zexp: np.ndarray            # (n, nt) <Z_a>
    min_eigenvalue: np.ndarray


def z_expectations(rho: np.ndarray, register: RegisterConfig) -> np.ndarray:
    """<Z_a> for every qubit, from basis-state populations."""
    if rho.shape[0] != register.dim:
        raise ValueError("state dimension does not match register")
    zv = _stacks(register.n)["zv"]
    return zv @ np.real(np.diag(rho))


def total_energy(rho: np.ndarray, register: RegisterConfig) -> float:
    """W = sum_a w_a <Z_a> / 2."""
    w = np.asarray(register.frequencies)
    return float(0.5 * w @ z_expectations(rho, register))


def partial_energy(rho: np.ndarray, register: RegisterConfig, k: int) -> float:
    """W_k = sum_{a<=k} w_a <Z_a> / 2."""
    if not 1 <= k <= register.n:
        raise ValueError(f"k = {k} out of range 1..{register.n}")
    w = np.asarray(register.frequencies)[:k]
    return float(0.5 * w @ z_expectations(rho, register)[:k])


def excited_populations(rho: np.ndarray, register: RegisterConfig) -> np.ndarray:
    """<Pi^dag_a Pi_a> = (1 + <Z_a>)/2 per qubit."""
    return 0.5 * (1.0 + z_expectations(rho, register))


def intensity_from_generator(ctx: GeneratorContext, rho: np.ndarray, t: float):
    """(I_total, per-channel list) via I = -(1/2) sum_a w_a Tr{Z_a D_j[rho]}.

    Longitudinal channels commute with every Z_a, so their contribution
    vanishes identically; it is evaluated, not assumed.
    """
    w = np.asarray(ctx.register.frequencies)
    zv = _stacks(ctx.register.n)["zv"]
    weights = 0.5 * (w @ zv)  # diag of sum_a w_a Z_a / 2
    per_channel = []
    for ci in range(len(ctx.channels)):
        d_rho = channel_dissipator(ctx, rho, t, ci)
        per_channel.append(float(-np.real(weights @ np.diag(d_rho))))
    return float(sum(per_channel)), per_channel


def local_intensity(rho: np.ndarray, register: RegisterConfig, t1_times) -> float:
    """I_loc ~ sum_a w_a <Pi^dag_a Pi_a> / T_1a (known-T1 approximation)."""
    t1 = np.asarray(t1_times, dtype=float)
    if t1.size != register.n:
        raise ValueError("need one T1 per qubit")
    if np.any(t1 <= 0):
        raise ValueError("T1 times must be positive")
    w = np.asarray(register.frequencies)
    return float(np.sum(w * excited_populations(rho, register) / t1))


def exact_local_intensity(ctx: GeneratorContext, rho: np.ndarray, t: float) -> float:
    """Local (alpha = beta) part of the emission: sum_a w_a [g21_aa <n_a> - g12_aa <1-n_a>]."""
    w = np.asarray(ctx.register.frequencies)
    pops = excited_populations(rho, ctx.register)
    out = 0.0
    for ci in ctx.transverse_indices:
        cf = ctx.rate_table.coefficients(ci, t)
        g21 = np.real(np.diag(cf["g21"]))
        g12 = np.real(np.diag(cf["g12"]))
        out += float(np.sum(w * (g21 * pops - g12 * (1.0 - pops))))
    return out


def partial_generator_intensity(ctx: GeneratorContext, rho: np.ndarray, t: float,
                                k: int) -> float:
    """-(1/2) sum_{a<=k} w_a Tr{Z_a D[rho]}: the exact -dW_k/dt."""
    if not 1 <= k <= ctx.register.n:
        raise ValueError(f"k = {k} out of range 1..{ctx.register.n}")
    w = np.asarray(ctx.register.frequencies)
    zv = _stacks(ctx.register.n)["zv"]
    weights = 0.5 * (w[:k] @ zv[:k])
    out = 0.0
    for ci in range(len(ctx.channels)):
        d_rho = channel_dissipator(ctx, rho, t, ci)
        out += float(-np.real(weights @ np.diag(d_rho)))
    return out


def partial_exact_local_intensity(ctx: GeneratorContext, rho: np.ndarray,
                                  t: float, k: int) -> float:
    w = np.asarray(ctx.register.frequencies)[:k]
    pops = excited_populations(rho, ctx.register)[:k]
    out = 0.0
    for ci in ctx.transverse_indices:
        cf = ctx.rate_table.coefficients(ci, t)
        g21 = np.real(np.diag(cf["g21"]))[:k]
        g12 = np.real(np.diag(cf["g12"]))[:k]
        out += float(np.sum(w * (g21 * pops - g12 * (1.0 - pops))))
    return out


def correlated_partial_intensity(ctx: GeneratorContext, rho: np.ndarray, t: float,
                                 k: int, include_nonsecular: bool | None = None):
    """I^(k)_corr = 2 w0 Re sum_{a<=k, b!=a} Q_ab(t) <Pi^dag_a Pi_b> plus the
    nonsecular pair-coherence part, reported separately.

    Requires uniform qubit frequencies (the closed form assumes a single w0).
    Returns (secular part, nonsecular part).
    """
    reg = ctx.register
    if not reg.is_uniform:
        raise ValueError("correlated_partial_intensity requires uniform frequencies")
    if not 1 <= k <= reg.n:
        raise ValueError(f"k = {k} out of range 1..{reg.n}")
    if include_nonsecular is None:
        include_nonsecular = ctx.include_nonsecular
    w0 = reg.frequencies[0]
    n = reg.n
    st = _stacks(n)
    raise_st, lower_st = st["raise"], st["lower"]
    sec = 0.0
    nonsec = 0.0
    for ci in ctx.transverse_indices:
        cf = ctx.rate_table.coefficients(ci, t)
        q = 0.5 * (cf["g21"] - cf["g12"].T)  # Q_ab = (g21_ab - g12_ba)/2
        qns = 1j * np.conj(cf["J3"])         # from the nonsecular H_xy part
        for a in range(k):
            for b in range(n):
                if a == b:
                    continue
                pair = complex(np.trace(raise_st[a] @ lower_st[b] @ rho))
                sec += 2.0 * w0 * np.real(q[a, b] * pair)
                if include_nonsecular:
                    pair_ns = complex(np.trace(raise_st[a] @ raise_st[b] @ rho))
                    nonsec += 2.0 * w0 * np.real(qns[a, b] * pair_ns)
    return sec, nonsec


def intensity_from_finite_difference(times, energy) -> np.ndarray:
    """I = -dW/dt by second-order central differences (one-sided at the ends)."""
    t = np.asarray(times, dtype=float)
    w = np.asarray(energy, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 samples for finite differences")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValueError("finite differences require a uniform grid")
    h = dt[0]
    out = np.empty_like(w)
    out[1:-1] = (w[2:] - w[:-2]) / (2 * h)
    out[0] = (-3 * w[0] + 4 * w[1] - w[2]) / (2 * h)
    out[-1] = (3 * w[-1] - 4 * w[-2] + w[-3]) / (2 * h)
    return -out


def intensity_trace(ctx: GeneratorContext, traj: Trajectory) -> IntensityTrace:
    """Full per-sample intensity decomposition of a trajectory.

    i_total and the partial rows use the exact generator traces; i_local is
    the diagonal-rate emission term, so i_corr and its restrictions vanish
    identically when the correlation matrix is diagonal.
    """
    reg = ctx.register
    n = reg.n
    nt = traj.times.size
    w = np.asarray(reg.frequencies)
    zv = _stacks(n)["zv"]
    cum_weights = 0.5 * np.cumsum(w[:, None] * zv, axis=0)  # (k, d) rows
    energy = np.empty(nt)
    i_total = np.empty(nt)
    i_local = np.empty(nt)
    partial = np.empty((n, nt))
    zexp = np.empty((n, nt))
    for i, (t, rho) in enumerate(zip(traj.times, traj.states)):
        t = float(t)
        energy[i] = total_energy(rho, reg)
        zexp[:, i] = z_expectations(rho, reg)
        pops = 0.5 * (1.0 + zexp[:, i])
        ddiag = np.zeros(reg.dim)
        local_terms = np.zeros(n)
        for ci in range(len(ctx.channels)):
            ddiag += np.real(np.diag(channel_dissipator(ctx, rho, t, ci)))
        for ci in ctx.transverse_indices:
            cf = ctx.rate_table.coefficients(ci, t)
            g21 = np.real(np.diag(cf["g21"]))
            g12 = np.real(np.diag(cf["g12"]))
            local_terms += w * (g21 * pops - g12 * (1.0 - pops))
        k_total = -cum_weights @ ddiag          # (n,) = -dW_k/dt for k = 1..n
        k_local = np.cumsum(local_terms)
        i_total[i] = k_total[-1]
        i_local[i] = k_local[-1]
        partial[:, i] = k_total - k_local
    return IntensityTrace(
        times=traj.times.copy(),
        energy=energy,
        i_total=i_total,
        i_local=i_local,
        i_corr=i_total - i_local,
        i_corr_partial=partial,
        zexp=zexp,
        min_eigenvalue=traj.stats["min_eig"].copy(),
    )


def extract_t1(times, zexp_row):
    """Least-squares exponential fit of the excited population.

    Returns (t1, residual) where residual is the rms log-misfit.  Raises
    ValueError when the data do not decay.
    """
    t = np.asarray(times, dtype=float)
    pop = 0.5 * (1.0 + np.asarray(zexp_row, dtype=float))
    good = pop > 1e-12
    if good.sum() < 3:
        raise ValueError("not enough positive-population samples to fit T1")
    t, pop = t[good], pop[good]
    slope, intercept = np.polyfit(t, np.log(pop), 1)
    if slope >= 0:
        raise ValueError("population does not decay; T1 fit failed")
    resid = float(np.sqrt(np.mean((np.log(pop) - (slope * t + intercept)) ** 2)))
    return float(-1.0 / slope), resid
