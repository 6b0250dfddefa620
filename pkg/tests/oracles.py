"""
Brute-force reference implementations.

Everything here is written with explicit loops or textbook formulas and
shares no code with the package, so agreement is meaningful.
"""

import itertools
import math

import numpy as np

C0 = 299_792_458.0


def steering(n_antennas, carrier_hz, f_hz, theta_rad):
    d = C0 / (2 * carrier_hz)
    out = np.empty(n_antennas, dtype=complex)
    for n in range(n_antennas):
        out[n] = complex(math.cos(2 * math.pi * f_hz * n * d * math.sin(theta_rad) / C0),
                         -math.sin(2 * math.pi * f_hz * n * d * math.sin(theta_rad) / C0))
    return out


def near_field_steering(n_antennas, carrier_hz, f_hz, theta_rad, range_m):
    """Spherical wave from a source at (-r sin(theta), r cos(theta)); elements at x = n*d.

    Positive angles lie on the side of negative x, so element n is farther
    from the source, matching the far-field phase sign.
    """
    d = C0 / (2 * carrier_hz)
    sx, sy = -range_m * math.sin(theta_rad), range_m * math.cos(theta_rad)
    out = np.empty(n_antennas, dtype=complex)
    for n in range(n_antennas):
        dist = math.hypot(sx - n * d, sy)
        out[n] = np.exp(-2j * math.pi * f_hz / C0 * (dist - range_m))
    return out


def beampattern(weights, carrier_hz, f_hz, angles_rad):
    N = len(weights)
    vals = []
    for th in angles_rad:
        a = steering(N, carrier_hz, f_hz, th)
        acc = 0j
        for n in range(N):
            acc += np.conj(a[n]) * weights[n]
        vals.append(abs(acc) ** 2)
    return np.array(vals)


def squint_peak(n_antennas, carrier_hz, f_hz, theta0_rad, step_rad=np.deg2rad(0.005)):
    """Grid-search the peak of a carrier-steered beam evaluated at ``f_hz``."""
    w = steering(n_antennas, carrier_hz, carrier_hz, theta0_rad)
    # scan the whole visible range so the oracle does not lean on the closed form
    grid = np.arange(-np.pi / 2 + step_rad, np.pi / 2, step_rad)
    n = np.arange(n_antennas)
    d = C0 / (2 * carrier_hz)
    A = np.exp(-2j * np.pi * f_hz / C0 * d * np.outer(np.sin(grid), n))
    g = np.abs(A.conj() @ w) ** 2
    return grid[int(np.argmax(g))], step_rad


def channel(n_antennas, carrier_hz, freqs, gains, angles, delays):
    H = np.zeros((len(freqs), n_antennas), dtype=complex)
    for m, f in enumerate(freqs):
        for g, th, tau in zip(gains, angles, delays):
            H[m] += g * np.exp(-2j * math.pi * f * tau) * steering(n_antennas, carrier_hz, f, th)
    return H


def mc_matrix(n, band, coeff):
    C = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            k = abs(i - j)
            if k <= band:
                C[i, j] = coeff ** k if k else 1.0
    return C


def projection_residual(A, T):
    """||T - P_A T||_F via an orthonormal basis from QR."""
    Q, _ = np.linalg.qr(A)
    return np.linalg.norm(T - Q @ (Q.conj().T @ T))


def se_determinant(H, F, snr_db):
    """Mean over subcarriers of log2 det(I + snr/S H F F^H H^H) with an explicit det."""
    snr = 10 ** (snr_db / 10)
    rates = []
    for Hm, Fm in zip(H, F):
        Hm = np.atleast_2d(Hm)
        S = Fm.shape[1]
        Q = np.eye(Hm.shape[0]) + snr / S * Hm @ Fm @ Fm.conj().T @ Hm.conj().T
        rates.append(math.log2(abs(np.linalg.det(Q))))
    return float(np.mean(rates))


def scalar_capacity(H, snr_db):
    """MISO capacity with per-subcarrier matched filtering: mean log2(1 + snr ||h_m||^2)."""
    snr = 10 ** (snr_db / 10)
    return float(np.mean([math.log2(1 + snr * np.vdot(h, h).real) for h in H]))


def subarray_objective(H_true, H_design, A_true, A_design, idx, eta, snr_db):
    """ISAC objective of one subarray with scalar loops; A_* are per-subcarrier target responses (M x N)."""
    snr = 10 ** (snr_db / 10)
    idx = list(idx)
    M, N = H_true.shape
    se, worst = 0.0, np.inf
    for m in range(M):
        fc = np.conj(H_design[m, idx])
        fc = fc / np.linalg.norm(fc)
        fr = np.conj(A_design[m, idx])
        fr = fr / np.linalg.norm(fr)
        f = eta * fc + (1 - eta) * fr
        f = f / np.linalg.norm(f)
        y = sum(H_true[m, i] * f[k] for k, i in enumerate(idx))
        se += math.log2(1 + snr * abs(y) ** 2)
        r = sum(A_true[m, i] * f[k] for k, i in enumerate(idx))
        worst = min(worst, abs(r) ** 2 / N)
    return eta * se / M + (1 - eta) * worst


def exhaustive_best(H_true, H_design, A_true, A_design, Q, eta, snr_db):
    """Best subarray; values within a relative 1e-9 of the maximum tie and the first one wins."""
    combos = list(itertools.combinations(range(H_true.shape[1]), Q))
    vals = [subarray_objective(H_true, H_design, A_true, A_design, idx, eta, snr_db) for idx in combos]
    best = max(vals)
    for idx, v in zip(combos, vals):
        if v >= best - 1e-9 * abs(best):
            return idx, v
