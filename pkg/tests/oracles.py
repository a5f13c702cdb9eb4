"""Independent brute-force oracles used to pin expected values.

Nothing here goes through the package quadrature or generator assembly: the
TCL2 oracle works in the time domain from the analytic ohmic correlation
function, and the spectral oracles are dense trapezoid sums.  They are the
reference side of every dual-route check.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from corrnoise.hilbert import ladder


def ohmic_correlation(tau, lam, wc):
    """C(tau) = int dw/2pi lam w e^{-w/wc} e^{-iw tau} = lam wc^2 / (2 pi (1 + i wc tau)^2)."""
    return lam * wc ** 2 / (2.0 * np.pi) / (1.0 + 1j * wc * np.asarray(tau)) ** 2


def _memory_kernels(t, freqs, lam, wc, tau_cut=80.0, panel=0.5, nodes=16):
    """f_sigma_b(t) = int_0^t dtau C(tau) e^{i sigma w_b (t - tau)} per qubit.

    Fixed panels of width `panel` resolve the e^{i w tau} oscillation; the
    neglected tail beyond tau_cut is O(lam / tau_cut).
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    upto = min(t, tau_cut)
    edges = np.arange(0.0, upto + panel, panel)
    edges[-1] = upto
    taus = []
    wts = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        taus.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * w)
    taus = np.concatenate(taus)
    wts = np.concatenate(wts)
    cvals = ohmic_correlation(taus, lam, wc) * wts
    out = {}
    for sigma in (+1, -1):
        out[sigma] = np.array([
            np.sum(cvals * np.exp(1j * sigma * wb * (t - taus))) for wb in freqs
        ])
    return out


def tcl2_relax_rhs(rho, t, freqs, lam, wc, cmat):
    """Direct time-domain TCL2 right-hand side for transverse ohmic coupling.

    d rho/dt = sum_ab int_0^t ds { C_ab(t-s) [A_b(s) rho A_a(t) - A_a(t) A_b(s) rho]
                                 + C_ba(s-t) [A_a(t) rho A_b(s) - rho A_b(s) A_a(t)] }
    with A_a(s) the interaction-picture X_a.
    """
    n = len(freqs)
    lows = [ladder(a, n, "lowering") for a in range(1, n + 1)]
    rais = [ladder(a, n, "raising") for a in range(1, n + 1)]
    if t == 0:
        return np.zeros_like(rho)
    ker = _memory_kernels(t, freqs, lam, wc)
    out = np.zeros_like(rho)
    for a in range(n):
        wa = freqs[a]
        a_t = np.exp(-1j * wa * t) * lows[a] + np.exp(1j * wa * t) * rais[a]
        for b in range(n):
            m1 = cmat[a, b] * (ker[-1][b] * lows[b] + ker[+1][b] * rais[b])
            m2 = cmat[b, a] * (np.conj(ker[+1][b]) * lows[b]
                               + np.conj(ker[-1][b]) * rais[b])
            out += m1 @ rho @ a_t - a_t @ m1 @ rho
            out += a_t @ rho @ m2 - rho @ m2 @ a_t
    return out


def tcl2_relax_trajectory(rho0, times, freqs, lam, wc, cmat, rtol=1e-10):
    """Integrate the brute-force TCL2 equation with an independent solver."""
    dim = rho0.shape[0]

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        return tcl2_relax_rhs(rho, t, freqs, lam, wc, cmat).ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), rho0.ravel().astype(complex),
                    t_eval=times, method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")
    return [sol.y[:, i].reshape(dim, dim) for i in range(len(times))]


# --------------------------------------------------------------------------
# dense frequency-domain oracles
# --------------------------------------------------------------------------

def dense_omega_grid(lo, hi, t, points_per_period=40, min_points=20001):
    """Uniform grid resolving the e^{i w t} oscillation."""
    if t > 0:
        need = int((hi - lo) * t / (2 * np.pi) * points_per_period)
    else:
        need = 0
    return np.linspace(lo, hi, max(min_points, need + 1))


def dephasing_rate_trapezoid(spectrum_fn, t, cut, inner=None):
    """gamma_phi(t) = int dw/pi S(w) sin(w t)/w by dense trapezoid on [-cut, cut].

    The grid is linear inside [0, inner] and geometric outside, so sharp
    infrared structure (1/f cutoffs) is resolved as well as the e^{iwt}
    oscillation.
    """
    inner = inner if inner is not None else min(1e-5, cut / 10)
    pos = np.concatenate([
        np.linspace(1e-14, inner, 20001),
        np.geomspace(inner, cut, 2000001)[1:],
    ])
    w = np.concatenate([-pos[::-1], pos])
    s = spectrum_fn(w)
    integrand = s * np.sin(w * t) / w
    return np.trapezoid(integrand, w) / np.pi


def phi_integral_trapezoid(spectrum_fn, wshift, t, lo, hi):
    """int dw/2pi S(w) F(w + w', t) by dense trapezoid (relaxation oracle)."""
    w = dense_omega_grid(lo, hi, t)
    om = w + wshift
    om_safe = np.where(np.abs(om) < 1e-300, 1.0, om)
    small = np.abs(om * t) < 1e-10
    f = np.where(small, t - 0.5j * om * t ** 2,
                 (1.0 - np.exp(-1j * om * t)) / (1j * om_safe))
    return np.trapezoid(spectrum_fn(w) * f, w) / (2.0 * np.pi)
