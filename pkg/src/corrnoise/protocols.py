"""Parity-oscillation and multiple-quantum-coherence protocols.

Parity: apply the analysis gate U(phi) = (1 + i offdiag(e^{-i phi},
e^{+i phi}))/sqrt(2) to every qubit, measure all qubits, and form
P(phi) = P_even - P_odd over the measurement parity.  P(phi) is a
band-limited Fourier series whose harmonic k is the anti-diagonal cluster
rho^(k), so sampling the canonical m = 2N+1 angles makes the discrete
transform exact and extraction is a plain DFT.

MQC: S(phi) = tr[rho rho(phi)] with rho(phi) a global RZ rotation of rho;
its harmonics are I_q = tr(rho_q rho_-q) over coherence orders q, with
I_N the squared far corner |rho_{0..0,1..1}|^2.

Gates are instantaneous and noiseless; decoherence acts only while idling.
Shot sampling draws bitstrings from the exact post-gate diagonal with a
deterministic per-(idle, angle) PRNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import GeneratorContext, evolve
from .hilbert import initial_state, num_qubits

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass
class ParityTrace:
    phis: np.ndarray
    values: np.ndarray
    shots: int = 0   # 0 means exact expectation values
    seed: int | None = None


@dataclass
class MqcTrace:
    phis: np.ndarray
    values: np.ndarray
    mode: str = "overlap_exact"
    shots: int = 0
    seed: int | None = None


@dataclass
class ProtocolResult:
    protocol: str
    idle_times: np.ndarray
    traces: list
    extractions: list  # dict k -> complex (parity) or q -> float (mqc)


def parity_angles(n: int) -> np.ndarray:
    """Canonical parity grid phi_x = 2 pi x / (2n+1) + pi/2, x = 0..2n."""
    m = 2 * n + 1
    return 2.0 * math.pi * np.arange(m) / m + math.pi / 2.0


def mqc_angles(n: int) -> np.ndarray:
    """Canonical MQC grid phi_x = -4 pi x / (2n+1)."""
    m = 2 * n + 1
    return -4.0 * math.pi * np.arange(m) / m


def parity_gate(phi: float) -> np.ndarray:
    """Single-qubit analysis gate, RZ(phi) sqrt(X)^dag RZ^dag(phi)."""
    off = np.array([[0.0, np.exp(-1j * phi)], [np.exp(1j * phi), 0.0]])
    return (np.eye(2) + 1j * off) / math.sqrt(2.0)


def _popcounts(dim: int) -> np.ndarray:
    return np.array([bin(x).count("1") for x in range(dim)])


def _parity_signs(dim: int) -> np.ndarray:
    """(-1)^(#1s) per basis state: the measured even/odd parity weight."""
    return 1.0 - 2.0 * (_popcounts(dim) % 2)


def analysis_unitary(phi: float, n: int) -> np.ndarray:
    u = parity_gate(phi)
    out = u
    for _ in range(n - 1):
        out = np.kron(out, u)
    return out


def parity_signal(rho: np.ndarray, phi: float) -> float:
    """P(phi) = <Z^xN>_phi = P_even - P_odd after the analysis gates."""
    n = num_qubits(rho.shape[0])
    u = analysis_unitary(phi, n)
    probs = np.real(np.diag(u @ rho @ u.conj().T))
    val = float(_parity_signs(rho.shape[0]) @ probs)
    return val


def parity_trace(rho: np.ndarray) -> ParityTrace:
    """Exact P at the canonical angles."""
    n = num_qubits(rho.shape[0])
    phis = parity_angles(n)
    vals = np.array([parity_signal(rho, p) for p in phis])
    return ParityTrace(phis=phis, values=vals, shots=0)


def _check_grid(phis: np.ndarray, expect: np.ndarray, what: str):
    if phis.size != expect.size or np.max(np.abs(phis - expect)) > 1e-9:
        raise ValueError(f"{what} requires the canonical {expect.size}-angle grid")


def parity_extract(trace: ParityTrace) -> dict[int, complex]:
    """rho^(k) = F[P'](k) / (2N+1) from the canonical-grid samples."""
    m = trace.phis.size
    if m % 2 == 0:
        raise ValueError("parity trace must have 2N+1 samples")
    n = (m - 1) // 2
    _check_grid(trace.phis, parity_angles(n), "parity_extract")
    x = np.arange(m)
    out = {}
    for k in range(-n, n + 1):
        out[k] = complex(np.sum(np.exp(-2j * math.pi * k * x / m) * trace.values) / m)
    return out


def measure_bitstrings(rho: np.ndarray, shots: int, rng) -> np.ndarray:
    """Sample basis states from diag(rho) by inverse CDF; returns indices."""
    probs = np.real(np.diag(rho)).copy()
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total:.12f}, not 1")
    np.clip(probs, 0.0, None, out=probs)
    cum = np.cumsum(probs / probs.sum())
    return np.searchsorted(cum, rng.random(shots))


def sample_parity(rho: np.ndarray, phi: float, shots: int, seed) -> float:
    """Finite-shot estimate of parity_signal: gate, measure, average signs."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    n = num_qubits(rho.shape[0])
    u = analysis_unitary(phi, n)
    rotated = u @ rho @ u.conj().T
    rng = np.random.default_rng(seed)
    draws = measure_bitstrings(rotated, shots, rng)
    signs = _parity_signs(rho.shape[0])
    return float(np.sum(signs[draws]) / shots)


def sampled_parity_trace(rho: np.ndarray, shots: int, seed) -> ParityTrace:
    n = num_qubits(rho.shape[0])
    phis = parity_angles(n)
    streams = np.random.SeedSequence(seed).spawn(phis.size)
    vals = np.array([
        sample_parity(rho, p, shots, streams[i]) for i, p in enumerate(phis)
    ])
    return ParityTrace(phis=phis, values=vals, shots=shots, seed=seed)


# --------------------------------------------------------------------------
# multiple quantum coherences
# --------------------------------------------------------------------------

def _rz_phases(phi: float, n: int) -> np.ndarray:
    """Diagonal of the global RZ rotation exp(-i phi sum_i Z_i / 2)."""
    m_val = n - 2 * _popcounts(2 ** n)  # total-Z eigenvalue, #0s - #1s
    return np.exp(-0.5j * phi * m_val)


def rotated_state(rho: np.ndarray, phi: float) -> np.ndarray:
    n = num_qubits(rho.shape[0])
    ph = _rz_phases(phi, n)
    return ph[:, None] * rho * np.conj(ph)[None, :]


def coherence_sector(rho: np.ndarray, q: int) -> np.ndarray:
    """rho_q: elements whose coherence order (excitation-number difference
    between row and column states, half the total-Z difference) equals q."""
    n = num_qubits(rho.shape[0])
    pop = _popcounts(2 ** n)
    mask = (pop[:, None] - pop[None, :]) == q
    return np.where(mask, rho, 0.0)


def coherence_weight(rho: np.ndarray, q: int) -> float:
    """I_q = tr(rho_q rho_-q), the projector-decomposition definition."""
    rq = coherence_sector(rho, q)
    rmq = coherence_sector(rho, -q)
    return float(np.real(np.trace(rq @ rmq)))


def mqc_signal(rho: np.ndarray, phi: float, mode: str = "overlap_exact",
               prep_unitary: np.ndarray | None = None) -> float:
    """S(phi): exact overlap tr[rho rho(phi)], or the echo-protocol estimate
    (prepare, idle, rotate, unprepare, return probability to |0...0>)."""
    if mode == "overlap_exact":
        return float(np.real(np.trace(rho @ rotated_state(rho, phi))))
    if mode == "echo_protocol":
        if prep_unitary is None:
            raise ValueError("echo_protocol needs the preparation unitary")
        back = prep_unitary.conj().T @ rotated_state(rho, phi) @ prep_unitary
        return float(np.real(back[0, 0]))
    raise ValueError(f"unknown MQC mode {mode!r}")


def mqc_trace(rho: np.ndarray, mode: str = "overlap_exact",
              prep_unitary: np.ndarray | None = None) -> MqcTrace:
    n = num_qubits(rho.shape[0])
    phis = mqc_angles(n)
    vals = np.array([mqc_signal(rho, p, mode, prep_unitary) for p in phis])
    return MqcTrace(phis=phis, values=vals, mode=mode)


def mqc_extract(trace: MqcTrace) -> dict[int, float]:
    """I_q from the canonical-grid samples of S.

    Coherence order q rotates the signal as e^{i phi q}, so on the grid
    phi_x = -4 pi x / (2N+1) it occupies the discrete mode 2q mod (2N+1);
    the odd grid size makes all 2N+1 orders distinguishable.
    """
    m = trace.phis.size
    if m % 2 == 0:
        raise ValueError("MQC trace must have 2N+1 samples")
    n = (m - 1) // 2
    _check_grid(trace.phis, mqc_angles(n), "mqc_extract")
    x = np.arange(m)
    out = {}
    for q in range(-n, n + 1):
        val = complex(np.sum(np.exp(2j * math.pi * (2 * q) * x / m)
                             * trace.values) / m)
        out[q] = float(val.real)
    return out


# --------------------------------------------------------------------------
# state preparation circuits (instantaneous, noiseless)
# --------------------------------------------------------------------------

def _one_qubit_on(gate: np.ndarray, site: int, n: int) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for s in range(1, n + 1):
        out = np.kron(out, gate if s == site else np.eye(2, dtype=complex))
    return out


def _cnot(control: int, target: int, n: int) -> np.ndarray:
    dim = 2 ** n
    u = np.zeros((dim, dim), dtype=complex)
    cb = n - control
    tb = n - target
    for x in range(dim):
        y = x ^ (1 << tb) if (x >> cb) & 1 else x
        u[y, x] = 1.0
    return u


def ghz_prep_unitary(n: int) -> np.ndarray:
    """Hadamard on qubit 1 followed by the CNOT ladder 1->2->...->n."""
    u = _one_qubit_on(_HADAMARD, 1, n)
    for c in range(1, n):
        u = _cnot(c, c + 1, n) @ u
    return u


def prep_unitary(kind: str, n: int) -> np.ndarray:
    """Nominal circuit preparing the named initial state from |0...0>."""
    if kind == "ground":
        return np.eye(2 ** n, dtype=complex)
    if kind == "inverted":
        u = np.eye(1, dtype=complex)
        for _ in range(n):
            u = np.kron(u, _X)
        return u
    if kind == "plus_all":
        u = np.eye(1, dtype=complex)
        for _ in range(n):
            u = np.kron(u, _HADAMARD)
        return u
    if kind == "ghz":
        return ghz_prep_unitary(n)
    raise ValueError(f"no preparation circuit for state kind {kind!r}")


# --------------------------------------------------------------------------
# full protocol runs
# --------------------------------------------------------------------------

def run_protocol(ctx: GeneratorContext, initial, idle_times, protocol: str,
                 shots: int = 0, seed: int = 0, dt_out: float | None = None,
                 mqc_mode: str = "overlap_exact",
                 trajectory=None) -> ProtocolResult:
    """Evolve, then synthesize and Fourier-extract the protocol signal at
    every idle time.

    Gates are ideal and instantaneous; shots = 0 keeps exact expectation
    values, otherwise each (idle time, angle) pair gets its own PRNG stream
    derived from the master seed.  A trajectory that already covers the idle
    times can be passed in to skip the evolution.
    """
    if protocol not in ("parity", "mqc"):
        raise ValueError(f"unknown protocol {protocol!r}")
    n = ctx.register.n
    idle = np.asarray(sorted(float(t) for t in idle_times))
    if idle.size == 0:
        raise ValueError("need at least one idle time")
    if idle[0] < 0:
        raise ValueError("idle times must be nonnegative")
    rho0 = initial_state(initial, n)

    if trajectory is not None:
        states = {float(t): trajectory.state_at(float(t)) for t in idle}
    elif idle[-1] == 0.0:
        states = {0.0: rho0}
    else:
        if dt_out is None:
            positive = idle[idle > 0]
            dt_out = float(positive[0])
            for t in positive:
                # greatest common step of the idle times
                a, b = dt_out, float(t)
                while b > 1e-9 * idle[-1]:
                    a, b = b, math.fmod(a, b)
                dt_out = abs(a)
        for t in idle:
            if abs(t / dt_out - round(t / dt_out)) > 1e-8:
                raise ValueError(f"idle time {t} is not a multiple of dt_out = {dt_out}")
        traj = evolve(ctx, rho0, float(idle[-1]), dt_out)
        states = {float(t): traj.state_at(float(t)) for t in idle}

    prep = prep_unitary(initial, n) if (protocol == "mqc" and mqc_mode == "echo_protocol") else None
    traces = []
    extractions = []
    master = np.random.SeedSequence(seed)
    idle_streams = master.spawn(idle.size)
    for i, t in enumerate(idle):
        rho = states[float(t)]
        if protocol == "parity":
            if shots > 0:
                phis = parity_angles(n)
                angle_streams = idle_streams[i].spawn(phis.size)
                vals = np.array([
                    sample_parity(rho, p, shots, angle_streams[j])
                    for j, p in enumerate(phis)
                ])
                trace = ParityTrace(phis=phis, values=vals, shots=shots, seed=seed)
            else:
                trace = parity_trace(rho)
            traces.append(trace)
            extractions.append(parity_extract(trace))
        else:
            trace = mqc_trace(rho, mode=mqc_mode, prep_unitary=prep)
            trace.seed = seed
            traces.append(trace)
            extractions.append(mqc_extract(trace))
    return ProtocolResult(protocol=protocol, idle_times=idle, traces=traces,
                          extractions=extractions)
