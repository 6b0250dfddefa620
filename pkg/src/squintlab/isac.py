"""
Integrated sensing and communication on top of the wideband beamformers.

Transmit convention: a precoder ``f`` radiates ``a(theta)^T f`` toward
``theta``, so a communication target is ``conj(h)`` and a radar target is
``conj(a(theta))``.  Radar gains are reported relative to the full-array
matched gain ``N``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .array import ArrayConfig, far_field_steering
from .beamformers import (BeamformerKind, _normalize, design_digital_sd, design_hybrid_plain,
                          phase_correction, spectral_efficiency)
from .channel import SubcarrierGrid, WidebandChannel, generate_channel

SELECTION_MODES = ("bsc", "no-bsc", "random")
IM_KINDS = ("hybrid-plain", "hybrid-phase-corrected", "digital-sd",
            "im-hybrid-plain", "im-hybrid-phase-corrected", "im-digital-sd")
EXHAUSTIVE_MAX_N = 20
TIE_RTOL = 1e-9


def isac_beamformer(comms_target: np.ndarray, radar_target: np.ndarray, eta: float,
                    power: Optional[float] = None) -> np.ndarray:
    """Per-subcarrier trade-off target ``normalize(eta*F_C + (1-eta)*F_R)``.

    This is the minimizer of ``eta*||F - F_C||^2 + (1-eta)*||F - F_R||^2``
    scaled back to the power budget (default: number of streams).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    Fc = np.asarray(comms_target)
    Fr = np.asarray(radar_target)
    if Fc.shape != Fr.shape:
        raise ValueError(f"target shapes differ: {Fc.shape} vs {Fr.shape}")
    F = eta * Fc + (1.0 - eta) * Fr
    if np.any(np.linalg.norm(F, axis=(-2, -1)) == 0):
        raise ValueError("combined target vanishes on some subcarrier")
    return _normalize(F, Fc.shape[-1] if power is None else power)


def radar_target(cfg: ArrayConfig, grid: SubcarrierGrid, targets_rad: Sequence[float], *,
                 at_carrier: bool = False) -> np.ndarray:
    """Single-stream radar target (M x N x 1) covering all ``targets_rad``.

    ``at_carrier`` uses the carrier response on every subcarrier, which is
    what a squint-unaware designer would compute.
    """
    t = np.atleast_1d(np.asarray(targets_rad, dtype=float))
    if t.size == 0:
        raise ValueError("need at least one target")
    f = np.full(grid.n_subcarriers, grid.carrier_hz) if at_carrier else grid.frequencies
    A = far_field_steering(cfg, f[:, None], t)  # M, T, N
    return _normalize(np.sum(A.conj(), axis=1)[:, :, None], 1.0)


def radar_gain_linear(weights: np.ndarray, cfg: ArrayConfig, grid: SubcarrierGrid,
                      targets_rad: Sequence[float]) -> float:
    t = np.atleast_1d(np.asarray(targets_rad, dtype=float))
    if t.size == 0:
        raise ValueError("need at least one target")
    W = np.asarray(weights)
    if W.ndim == 3:
        W = W[:, :, 0]
    if W.shape != (grid.n_subcarriers, cfg.n_antennas):
        raise ValueError(f"weights shape {W.shape} does not match (M, N)")
    A = far_field_steering(cfg, grid.frequencies[:, None], t)  # M, T, N
    g = np.abs(np.einsum("mtn,mn->mt", A, W)) ** 2
    return float(g.min() / cfg.n_antennas)


def radar_beampattern_gain(weights: np.ndarray, cfg: ArrayConfig, grid: SubcarrierGrid,
                           targets_rad: Sequence[float]) -> float:
    """Worst (over targets and subcarriers) transmit gain toward the targets, in dB re ``N``.

    ``weights`` is M x N (or M x N x 1) with unit-norm rows for the 0 dB
    reference to be meaningful.
    """
    g = radar_gain_linear(weights, cfg, grid, targets_rad)
    return float(10 * np.log10(g)) if g > 0 else -np.inf


class CodebookGeneration(str, Enum):
    CONTIGUOUS = "contiguous-windows"
    DECIMATION = "uniform-decimation"
    RANDOM = "random"
    EXHAUSTIVE = "exhaustive"


@dataclass
class SubarrayCodebook:
    """Canonical (sorted, duplicate-free) list of Q-antenna index sets."""

    entries: np.ndarray  # E x Q, rows sorted, lexicographically ordered
    n_antennas: int

    def __post_init__(self):
        E = np.asarray(self.entries, dtype=int)
        if E.ndim != 2 or E.shape[0] == 0 or E.shape[1] == 0:
            raise ValueError("codebook must be a nonempty E x Q array")
        if np.any(E < 0) or np.any(E >= self.n_antennas):
            raise ValueError(f"antenna index out of range [0, {self.n_antennas})")
        E = np.sort(E, axis=1)
        if np.any(np.diff(E, axis=1) == 0):
            raise ValueError("duplicate antenna inside an entry")
        self.entries = np.unique(E, axis=0)

    def __len__(self):
        return self.entries.shape[0]

    @property
    def subarray_size(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def generate(cls, n_antennas: int, size: int, kinds=("contiguous-windows", "uniform-decimation"),
                 *, n_random: int = 0, rng: Optional[np.random.Generator] = None) -> "SubarrayCodebook":
        if not 1 <= size <= n_antennas:
            raise ValueError(f"subarray size must be in [1, {n_antennas}]")
        rows = []
        for kind in map(CodebookGeneration, kinds):
            if kind is CodebookGeneration.CONTIGUOUS:
                rows += [np.arange(s, s + size) for s in range(n_antennas - size + 1)]
            elif kind is CodebookGeneration.DECIMATION:
                max_stride = (n_antennas - 1) // (size - 1) if size > 1 else 1
                for stride in range(2, max_stride + 1):
                    span = stride * (size - 1)
                    rows += [s + stride * np.arange(size) for s in range(n_antennas - span)]
            elif kind is CodebookGeneration.RANDOM:
                if rng is None or n_random < 1:
                    raise ValueError("random codebook entries need n_random >= 1 and an rng")
                rows += [rng.choice(n_antennas, size, replace=False) for _ in range(n_random)]
            else:
                if n_antennas > EXHAUSTIVE_MAX_N:
                    raise ValueError(f"exhaustive codebooks are limited to N <= {EXHAUSTIVE_MAX_N}")
                rows += [np.array(c) for c in itertools.combinations(range(n_antennas), size)]
        if not rows:
            raise ValueError("codebook generation produced no entries")
        return cls(np.array(rows), n_antennas)


@dataclass
class SelectionResult:
    indices: np.ndarray
    entry: int
    se: float
    radar_gain_db: float
    objective: float


def _unit_rows(X: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(X, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("zero target on a subarray")
    return X / n


def subarray_objectives(codebook: SubarrayCodebook, channel: WidebandChannel, targets_rad, *,
                        eta: float, snr_db: float, squint_aware: bool):
    """ISAC objective of every codebook entry, vectorized over entries.

    Returns ``(objective, se, radar_gain_linear)`` arrays of length E.
    Each entry's single-stream precoder is the trade-off target restricted
    to the subarray; it is built from the true per-subcarrier responses
    when ``squint_aware`` and from the carrier responses otherwise.  Both
    are evaluated on the true channel.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    cfg, grid = channel.array, channel.grid
    if codebook.n_antennas != cfg.n_antennas:
        raise ValueError("codebook and array sizes differ")
    t = np.atleast_1d(np.asarray(targets_rad, dtype=float))
    if t.size == 0:
        raise ValueError("need at least one target")
    E = codebook.entries
    f = grid.frequencies
    A_true = far_field_steering(cfg, f[:, None], t)  # M, T, N
    h_true = channel.h
    if squint_aware:
        h_design, A_design = h_true, A_true
    else:
        h_design = channel.narrowband_model().h
        A_design = far_field_steering(cfg, np.full_like(f, grid.carrier_hz)[:, None], t)
    hs = h_design[:, E]                       # M, E, Q
    rs = np.sum(A_design[:, :, E], axis=1)    # M, E, Q
    Fc = _unit_rows(hs.conj())
    Fr = _unit_rows(rs.conj())
    F = _unit_rows(eta * Fc + (1 - eta) * Fr)
    snr = 10 ** (snr_db / 10)
    se = np.mean(np.log2(1 + snr * np.abs(np.sum(h_true[:, E] * F, axis=-1)) ** 2), axis=0)
    gains = np.abs(np.einsum("mteq,meq->mte", A_true[:, :, E], F)) ** 2
    radar = gains.min(axis=(0, 1)) / cfg.n_antennas
    return eta * se + (1 - eta) * radar, se, radar


def select_subarray(codebook: SubarrayCodebook, channel: WidebandChannel, targets_rad, *,
                    eta: float, snr_db: float = 0.0, mode: str = "bsc", n_rf: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> SelectionResult:
    """Pick the codebook entry maximizing ``eta*SE + (1-eta)*radar_gain``.

    ``bsc`` evaluates every entry with squint-compensated weights,
    ``no-bsc`` with carrier weights, and ``random`` makes a seeded uniform
    pick evaluated with carrier weights.  Objectives within a relative
    ``TIE_RTOL`` of the best count as ties and go to the first entry of
    the canonical codebook.  With ``n_rf >= Q`` the hybrid digital stage
    realizes any subarray target exactly, which is what the evaluation
    assumes.
    """
    if mode not in SELECTION_MODES:
        raise ValueError(f"mode must be one of {SELECTION_MODES}")
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    Q = codebook.subarray_size
    if n_rf is not None and n_rf < Q:
        raise ValueError(f"n_rf={n_rf} < subarray size {Q}: exact subarray precoding needs n_rf >= Q")
    obj, se, radar = subarray_objectives(codebook, channel, targets_rad, eta=eta, snr_db=snr_db,
                                         squint_aware=(mode == "bsc"))
    if mode == "random":
        if rng is None:
            raise ValueError("random selection needs an rng")
        k = int(rng.integers(len(codebook)))
    else:
        # ties (often exact up to round-off, e.g. shifted windows) go to the first entry
        best = np.max(obj)
        k = int(np.flatnonzero(obj >= best - TIE_RTOL * max(abs(best), 1e-300))[0])
    g_db = float(10 * np.log10(radar[k])) if radar[k] > 0 else -np.inf
    return SelectionResult(codebook.entries[k].copy(), k, float(se[k]), g_db, float(obj[k]))


@dataclass(frozen=True)
class ImConfig:
    """Spatial-path index modulation: ``n_active`` of ``n_paths`` paths carry each symbol."""

    n_paths: int = 8
    n_active: int = 3
    bits_per_symbol: int = 2

    def __post_init__(self):
        if not 0 < self.n_active <= self.n_paths:
            raise ValueError(f"need 0 < n_active <= n_paths, got {self.n_active}, {self.n_paths}")
        if self.bits_per_symbol < 0:
            raise ValueError("bits_per_symbol must be nonnegative")

    @property
    def index_bits(self) -> int:
        return im_index_bits(self.n_paths, self.n_active)

    def patterns(self):
        """The ``2**index_bits`` activation patterns in use (first ones in lexicographic order)."""
        return list(itertools.islice(itertools.combinations(range(self.n_paths), self.n_active),
                                     2 ** self.index_bits))


def im_index_bits(n_paths: int, n_active: int) -> int:
    if not 0 < n_active <= n_paths:
        raise ValueError("need 0 < n_active <= n_paths")
    # integer bit length avoids floating-point log2 at exact powers of two
    return math.comb(n_paths, n_active).bit_length() - 1


def _isac_targets(channel: WidebandChannel, targets_rad, eta: float):
    cfg, grid = channel.array, channel.grid
    T = isac_beamformer(design_digital_sd(channel.h), radar_target(cfg, grid, targets_rad), eta)
    Tm = isac_beamformer(design_digital_sd(channel.narrowband_model().h),
                         radar_target(cfg, grid, targets_rad, at_carrier=True), eta)
    return T, Tm


def isac_family(channel: WidebandChannel, n_rf: int, targets_rad, eta: float,
                dictionary_angles: Optional[np.ndarray] = None) -> dict:
    """Plain hybrid, phase-corrected hybrid and digital beamformers for the ISAC target.

    The two hybrid designs share one analog stage, as in :func:`squintlab.beamformers.design`.
    """
    T, Tm = _isac_targets(channel, targets_rad, eta)
    plain = design_hybrid_plain(channel, n_rf, 1, dictionary_angles, target=Tm)
    return {
        BeamformerKind.HYBRID_PLAIN.value: plain.effective(channel.frequencies),
        BeamformerKind.HYBRID_PHASE_CORRECTED.value: plain.analog @ phase_correction(plain.analog, T, 1.0),
        BeamformerKind.DIGITAL_SD.value: _normalize(T, 1.0),
    }


def im_spectral_efficiency(channel: WidebandChannel, im: ImConfig, targets_rad, *, eta: float,
                           snr_db: float, n_rf: int,
                           dictionary_angles: Optional[np.ndarray] = None) -> dict:
    """SE of conventional and index-modulated ISAC for every kind in :data:`IM_KINDS`.

    Conventional kinds beamform toward the whole channel.  ``im-`` kinds add
    ``index_bits`` to the average SE obtained when the beamformer targets
    only the active paths (averaged over the activation patterns in use);
    the SE is always measured on the full channel.
    """
    if len(channel.paths) < im.n_paths:
        raise ValueError(f"channel has {len(channel.paths)} paths, IM needs {im.n_paths}")
    out = {k: spectral_efficiency(channel.h, F, snr_db, power=1.0)
           for k, F in isac_family(channel, n_rf, targets_rad, eta, dictionary_angles).items()}
    acc = {k: 0.0 for k in out}
    patterns = im.patterns()
    for active in patterns:
        part = generate_channel(channel.array, channel.grid, channel.paths.subset(list(active)))
        for k, F in isac_family(part, n_rf, targets_rad, eta, dictionary_angles).items():
            acc[k] += spectral_efficiency(channel.h, F, snr_db, power=1.0)
    for k, v in acc.items():
        out["im-" + k] = im.index_bits + v / len(patterns)
    return out
