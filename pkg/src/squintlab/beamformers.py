"""
Transmit beamformer designs for wideband hybrid arrays.

Every design returns per-subcarrier end-to-end beamformers ``F[m]``
(shape M x N x S) normalized to ``||F[m]||_F**2 = S`` so they can be
compared with :func:`spectral_efficiency`.

Kinds
-----
digital-sd
    One RF chain per antenna, per-subcarrier matched (SVD) precoder.
hybrid-plain
    OMP analog stage from a carrier dictionary; the digital stage fits the
    target computed from a frequency-flat (carrier) array model.
hybrid-phase-corrected
    Same analog stage; the digital stage fits the true per-subcarrier target.
hybrid-ttd-dpp
    Delay-phase precoding: a TTD network ahead of the phase shifters.
analog-sd-ps
    Per-subcarrier phase shifter networks (M*N*K phase shifters).
beam-broadened
    Subarrays steered across the squint span, narrowband digital stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .array import SPEED_OF_LIGHT, ArrayConfig, far_field_steering
from .channel import SubcarrierGrid, WidebandChannel


class BeamformerKind(str, Enum):
    DIGITAL_SD = "digital-sd"
    HYBRID_PLAIN = "hybrid-plain"
    HYBRID_PHASE_CORRECTED = "hybrid-phase-corrected"
    HYBRID_TTD_DPP = "hybrid-ttd-dpp"
    ANALOG_SD_PS = "analog-sd-ps"
    BEAM_BROADENED = "beam-broadened"


class DelayConstraintError(ValueError):
    """A TTD network would need more delay than the hardware provides."""


@dataclass
class TTDNetwork:
    """Per-RF-chain true-time delays, one per block of ``N // K_T`` antennas."""

    delays_s: np.ndarray
    max_delay_s: float = 500e-12
    resolution_s: float = 5e-12
    quantized: bool = False

    def __post_init__(self):
        self.delays_s = np.atleast_2d(np.asarray(self.delays_s, dtype=float))
        if np.any(self.delays_s < 0):
            raise DelayConstraintError("TTD delays must be nonnegative")
        if np.any(self.delays_s > self.max_delay_s * (1 + 1e-12)):
            raise DelayConstraintError(
                f"TTD delay {self.delays_s.max() * 1e12:.1f} ps exceeds the "
                f"{self.max_delay_s * 1e12:.1f} ps range")

    @property
    def n_ttd_per_rf(self) -> int:
        return self.delays_s.shape[1]


@dataclass
class HybridBeamformer:
    """Analog stage (N x K, or M x N x K when subcarrier dependent) plus digital stage (M x K x S)."""

    analog: np.ndarray
    digital: np.ndarray
    ttd: Optional[TTDNetwork] = None
    power: Optional[float] = None
    kind: Optional[BeamformerKind] = None
    angles_rad: Optional[np.ndarray] = None

    def effective(self, frequencies) -> np.ndarray:
        """End-to-end beamformers F[m] = A_eff(f_m) @ D[m]."""
        f = np.asarray(frequencies, dtype=float)
        if self.analog.ndim == 3:
            A = self.analog
        else:
            A = effective_analog(self.analog, self.ttd, f)
        return A @ self.digital


def angle_dictionary(n_points: int = 256) -> np.ndarray:
    """Angles uniformly spaced in sin(theta) over (-1, 1), bin centres."""
    u = -1 + (2 * np.arange(n_points) + 1) / n_points
    return np.arcsin(u)


def _normalize(F: np.ndarray, power: float) -> np.ndarray:
    norms = np.linalg.norm(F, axis=(-2, -1), keepdims=True)
    return np.where(norms > 0, F * np.sqrt(power) / np.where(norms > 0, norms, 1.0), F)


def _as_mrn(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    return H[:, None, :] if H.ndim == 2 else H


def design_digital_sd(H: np.ndarray, streams: int = 1) -> np.ndarray:
    """Top-``streams`` right singular vectors of every ``H[m]``, equal power per stream."""
    H = _as_mrn(H)
    M, R, N = H.shape
    if streams > min(R, N):
        raise ValueError(f"streams={streams} exceeds the channel rank bound {min(R, N)}")
    if np.any(np.linalg.norm(H, axis=(1, 2)) == 0):
        raise ValueError("degenerate (zero) channel")
    if R == 1:
        h = H[:, 0, :]
        return (h.conj() / np.linalg.norm(h, axis=1, keepdims=True))[:, :, None]
    _, _, Vh = np.linalg.svd(H)
    return np.transpose(Vh[:, :streams, :].conj(), (0, 2, 1))


def omp_analog(target: np.ndarray, dictionary: np.ndarray, n_rf: int):
    """Pick ``n_rf`` dictionary columns for a block (over subcarriers) OMP fit.

    ``target`` is M x N x S, ``dictionary`` is N x G.  Each iteration adds
    the column with the largest correlation energy summed over subcarriers,
    then refits all subcarriers by least squares.  Returns the selected
    indices and the stacked residual norm after every iteration.
    """
    T = np.asarray(target)
    D = np.asarray(dictionary)
    G = D.shape[1]
    if n_rf > G:
        raise ValueError("more RF chains than dictionary columns")
    base = np.linalg.norm(T)
    R = T.copy()
    chosen: list = []
    residuals = []
    for _ in range(n_rf):
        corr = np.einsum("ng,mns->mgs", D.conj(), R)
        score = np.sum(np.abs(corr) ** 2, axis=(0, 2))
        score[chosen] = -1.0
        if np.linalg.norm(R) <= 1e-12 * max(base, 1e-300):
            # exact fit already; remaining chains take the best-correlated columns
            score = np.sum(np.abs(np.einsum("ng,mns->mgs", D.conj(), T)) ** 2, axis=(0, 2))
            score[chosen] = -1.0
            chosen.append(int(np.argmax(score)))
            residuals.append(np.linalg.norm(R))
            continue
        chosen.append(int(np.argmax(score)))
        A = D[:, chosen]
        X = np.linalg.lstsq(A, np.transpose(T, (1, 0, 2)).reshape(A.shape[0], -1), rcond=None)[0]
        R = T - np.transpose((A @ X).reshape(A.shape[0], T.shape[0], T.shape[2]), (1, 0, 2))
        new = np.linalg.norm(R)
        if residuals and new >= residuals[-1] and new > 1e-12 * base:
            raise RuntimeError("OMP failed to reduce the residual (degenerate dictionary)")
        residuals.append(new)
    return np.asarray(chosen), np.asarray(residuals)


def phase_correction(analog: np.ndarray, target: np.ndarray, power: Optional[float] = None) -> np.ndarray:
    """Digital stage ``D[m] = argmin ||T[m] - A[m] D||_F``, renormalized to ``power``.

    ``analog`` is N x K (shared) or M x N x K; ``target`` is M x N x S.
    """
    A = np.asarray(analog)
    T = np.asarray(target)
    M, N, S = T.shape
    A3 = np.broadcast_to(A, (M,) + A.shape) if A.ndim == 2 else A
    if A3.shape[:2] != (M, N):
        raise ValueError(f"analog shape {A.shape} does not match target {T.shape}")
    K = A3.shape[2]
    if np.any(np.linalg.matrix_rank(A3) < K):
        raise np.linalg.LinAlgError("analog beamformer is rank deficient")
    AH = np.conj(np.swapaxes(A3, 1, 2))
    D = np.linalg.solve(AH @ A3, AH @ T)
    F = A3 @ D
    norms = np.linalg.norm(F, axis=(1, 2), keepdims=True)
    p = S if power is None else power
    return np.where(norms > 0, D * np.sqrt(p) / np.where(norms > 0, norms, 1.0), D)


def design_hybrid_plain(channel: WidebandChannel, n_rf: int, streams: int = 1,
                        dictionary_angles: Optional[np.ndarray] = None,
                        target: Optional[np.ndarray] = None) -> HybridBeamformer:
    """OMP hybrid precoder that ignores beam-squint.

    Both the analog selection and the digital fit use the target computed
    from :meth:`WidebandChannel.narrowband_model`, unless ``target`` (the
    designer's believed target, M x N x S) is given.
    """
    if n_rf < streams:
        raise ValueError("need at least as many RF chains as streams")
    angles = angle_dictionary() if dictionary_angles is None else dictionary_angles
    if target is None:
        target = design_digital_sd(channel.narrowband_model().h, streams)
    Dc = far_field_steering(channel.array, channel.grid.carrier_hz, angles).T  # N x G
    idx, _ = omp_analog(target, Dc / np.sqrt(channel.array.n_antennas), n_rf)
    analog = Dc[:, idx]
    digital = phase_correction(analog, target, power=streams)
    return HybridBeamformer(analog, digital, power=streams, kind=BeamformerKind.HYBRID_PLAIN,
                            angles_rad=angles[idx])


def design_ttd_dpp(theta0, cfg: ArrayConfig, grid: SubcarrierGrid, n_ttd: int, *,
                   quantize: bool = False, max_delay_s: float = 500e-12,
                   resolution_s: float = 5e-12):
    """Delay-phase precoder steering one RF chain per angle in ``theta0``.

    Block ``t`` of ``P = N // n_ttd`` antennas gets the delay
    ``t * P * d * sin(theta) / c`` (shifted so the smallest delay is zero);
    the phase shifters hold the carrier steering phase minus the carrier
    phase of the delay.  The response is therefore exact at the carrier
    and squint-free up to the intra-block spread.
    """
    thetas = np.atleast_1d(np.asarray(theta0, dtype=float))
    N = cfg.n_antennas
    if n_ttd < 1 or N % n_ttd:
        raise ValueError(f"n_ttd={n_ttd} must divide n_antennas={N}")
    P = N // n_ttd
    step = P * cfg.spacing_m * np.sin(thetas) / SPEED_OF_LIGHT  # K
    tau = np.outer(step, np.arange(n_ttd))
    tau -= tau.min(axis=1, keepdims=True)
    if tau.max() > max_delay_s * (1 + 1e-12):
        raise DelayConstraintError(
            f"required delay {tau.max() * 1e12:.1f} ps exceeds the {max_delay_s * 1e12:.1f} ps range")
    if quantize:
        tau = np.minimum(np.round(tau / resolution_s) * resolution_s,
                         np.floor(max_delay_s / resolution_s) * resolution_s)
    ttd = TTDNetwork(tau, max_delay_s=max_delay_s, resolution_s=resolution_s, quantized=quantize)
    n = np.arange(N)
    path = np.outer(cfg.positions, np.sin(thetas)) / SPEED_OF_LIGHT  # N x K
    analog = np.exp(-2j * np.pi * grid.carrier_hz * (path - tau.T[n // P]))
    bf = HybridBeamformer(analog, np.zeros((grid.n_subcarriers, thetas.size, 1), complex),
                          ttd=ttd, kind=BeamformerKind.HYBRID_TTD_DPP, angles_rad=thetas)
    A = effective_analog(analog, ttd, grid.frequencies)
    # one stream spread evenly over the chains, renormalized per subcarrier
    bf.digital = phase_correction(A, np.sum(A, axis=2, keepdims=True) / thetas.size, power=1.0)
    bf.power = 1.0
    return bf, ttd


def effective_analog(analog: np.ndarray, ttd: Optional[TTDNetwork], f_hz) -> np.ndarray:
    """Phase-shifter weights times the block-mapped TTD phase ``exp(-2j*pi*f*tau)``.

    Scalar ``f_hz`` gives N x K; an array of M frequencies gives M x N x K.
    """
    A = np.asarray(analog)
    f = np.asarray(f_hz, dtype=float)
    if ttd is None:
        return A if f.ndim == 0 else np.broadcast_to(A, f.shape + A.shape).copy()
    N, K = A.shape
    KT = ttd.n_ttd_per_rf
    if ttd.delays_s.shape[0] != K or N % KT:
        raise ValueError(f"TTD network {ttd.delays_s.shape} does not fit analog {A.shape}")
    tau = ttd.delays_s.T[np.arange(N) // (N // KT)]  # N x K
    return A * np.exp(-2j * np.pi * f[..., None, None] * tau)


def design_sd_phase_shifters(thetas, cfg: ArrayConfig, grid: SubcarrierGrid) -> np.ndarray:
    """Per-subcarrier analog matrices (M x N x K): column k steers to ``thetas[k]`` at ``f_m``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    A = far_field_steering(cfg, grid.frequencies[:, None], thetas)  # M, K, N
    return np.transpose(A, (0, 2, 1))


def beam_broadening(theta0: float, cfg: ArrayConfig, n_sub: int,
                    spread_u: Optional[float] = None) -> np.ndarray:
    """Unit-norm weights of a subarray-broadened beam.

    Subarray ``s`` (``N // n_sub`` contiguous antennas) steers at the carrier
    to ``sin(theta0) + (s - (n_sub - 1)/2) * spread_u / n_sub`` and its
    phase offset keeps the phase continuous across subarray edges.  The
    default ``spread_u = n_sub**2 / (2 N)`` spaces neighbouring subarray
    beams a quarter of a subarray null-to-null width apart.
    """
    N = cfg.n_antennas
    if n_sub < 1 or N % n_sub:
        raise ValueError(f"n_sub={n_sub} must divide n_antennas={N}")
    if spread_u is None:
        spread_u = n_sub ** 2 / (2.0 * N)
    P = N // n_sub
    s = np.arange(N) // P
    u = np.sin(theta0) + (s - (n_sub - 1) / 2) * spread_u / n_sub
    k = 2 * np.pi * cfg.carrier_hz / SPEED_OF_LIGHT * cfg.spacing_m
    phase = np.concatenate([[0.0], np.cumsum(k * u[:-1])])
    return np.exp(-1j * phase) / np.sqrt(N)


def squint_span_u(theta0: float, grid: SubcarrierGrid) -> float:
    """Carrier-steering spread in sin(theta) that points each subcarrier back at ``theta0``."""
    f = grid.frequencies
    return float(np.sin(theta0) * (f[-1] - f[0]) / grid.carrier_hz)


def spectral_efficiency(H: np.ndarray, F: np.ndarray, snr_db: float,
                        power: Optional[float] = None, per_subcarrier: bool = False):
    """(1/M) sum_m log2 det(I + SNR/S * H_m F_m F_m^H H_m^H), in bits/s/Hz.

    ``H`` is M x N (single-antenna user) or M x R x N; ``F`` is M x N x S
    with ``||F_m||_F**2 = power`` (default S).
    """
    H = _as_mrn(H)
    F = np.asarray(F)
    M, R, N = H.shape
    if F.shape[:2] != (M, N):
        raise ValueError(f"beamformer shape {F.shape} does not match channel {H.shape}")
    S = F.shape[2]
    p = S if power is None else power
    norms = np.linalg.norm(F, axis=(1, 2)) ** 2
    if not np.allclose(norms, p, rtol=1e-6, atol=1e-9):
        raise ValueError(f"beamformers are not normalized to power {p}: got {norms.min():.6g}..{norms.max():.6g}")
    snr = 10 ** (snr_db / 10)
    G = H @ F  # M, R, S
    if R == 1:
        rate = np.log2(1 + snr / S * np.sum(np.abs(G[:, 0, :]) ** 2, axis=1))
    else:
        Q = np.eye(R) + snr / S * G @ np.conj(np.swapaxes(G, 1, 2))
        rate = np.linalg.slogdet(Q)[1] / np.log(2)
    return rate if per_subcarrier else float(np.mean(rate))


def design(kind, channel: WidebandChannel, n_rf: int, true_target: np.ndarray,
           model_target: np.ndarray, *, n_ttd: int = 16, quantize: bool = False,
           n_sub: int = 8, dictionary_angles: Optional[np.ndarray] = None) -> np.ndarray:
    """End-to-end beamformers (M x N x S) of ``kind`` for the given design targets.

    ``true_target`` is the per-subcarrier target the hardware should
    realize; ``model_target`` is the same target as computed by a designer
    who assumes frequency-flat array responses.  All hybrid variants share
    the OMP analog directions chosen against ``model_target``.
    """
    kind = BeamformerKind(kind)
    S = true_target.shape[2]
    if kind is BeamformerKind.DIGITAL_SD:
        return _normalize(true_target, S)
    cfg, grid = channel.array, channel.grid
    plain = design_hybrid_plain(channel, n_rf, S, dictionary_angles, target=model_target)
    f = grid.frequencies
    if kind is BeamformerKind.HYBRID_PLAIN:
        return plain.effective(f)
    if kind is BeamformerKind.HYBRID_PHASE_CORRECTED:
        return plain.analog @ phase_correction(plain.analog, true_target, S)
    if kind is BeamformerKind.HYBRID_TTD_DPP:
        ttd_bf, _ = design_ttd_dpp(plain.angles_rad, cfg, grid, n_ttd, quantize=quantize)
        A = effective_analog(ttd_bf.analog, ttd_bf.ttd, f)
        return A @ phase_correction(A, true_target, S)
    if kind is BeamformerKind.ANALOG_SD_PS:
        A = design_sd_phase_shifters(plain.angles_rad, cfg, grid)
        return A @ phase_correction(A, true_target, S)
    if kind is BeamformerKind.BEAM_BROADENED:
        cols = [beam_broadening(t, cfg, n_sub, squint_span_u(t, grid)) for t in plain.angles_rad]
        A = np.stack(cols, axis=1) * np.sqrt(cfg.n_antennas)
        return A @ phase_correction(A, model_target, S)
    raise ValueError(f"unknown beamformer kind {kind}")
