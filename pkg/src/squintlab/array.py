"""
Frequency-dependent uniform linear array responses and array imperfections.

All steering vectors use element 0 as the phase reference and the
convention ``exp(-1j * 2*pi * (f/c) * n * d * sin(theta))``.  The element
spacing is fixed at half a wavelength of the *carrier*, so evaluating the
response away from the carrier is what produces beam-squint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array.

    Parameters
    ----------
    n_antennas : int
        Number of elements, at least 2.
    carrier_hz : float
        Carrier frequency the analog hardware is designed for.
    spacing_m : float, optional
        Element spacing. Defaults to half the carrier wavelength.
    geometry : str
        Only ``"uniform-linear"`` is supported.
    """

    n_antennas: int
    carrier_hz: float
    spacing_m: Optional[float] = None
    geometry: str = "uniform-linear"

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise ValueError(f"n_antennas must be an integer >= 2, got {self.n_antennas}")
        if not np.isfinite(self.carrier_hz) or self.carrier_hz <= 0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.spacing_m is None:
            object.__setattr__(self, "spacing_m", SPEED_OF_LIGHT / (2.0 * self.carrier_hz))
        if not np.isfinite(self.spacing_m) or self.spacing_m <= 0:
            raise ValueError(f"spacing_m must be positive, got {self.spacing_m}")
        if self.geometry != "uniform-linear":
            raise ValueError(f"unsupported geometry {self.geometry!r}")

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.n_antennas) * self.spacing_m

    @property
    def aperture_m(self) -> float:
        return (self.n_antennas - 1) * self.spacing_m


@dataclass(frozen=True)
class ImperfectionModel:
    """Mutual coupling (banded Toeplitz) and per-antenna gain/phase mismatch."""

    mc_band: int = 0
    mc_coeff: complex = 0.0
    gpm_gain_std: float = 0.0
    gpm_phase_std_rad: float = 0.0

    def __post_init__(self):
        if self.mc_band < 0:
            raise ValueError("mc_band must be nonnegative")
        if abs(self.mc_coeff) >= 1:
            raise ValueError(f"|mc_coeff| must be < 1, got {abs(self.mc_coeff):.3g}")
        if self.gpm_gain_std < 0 or self.gpm_phase_std_rad < 0:
            raise ValueError("gain/phase mismatch deviations must be nonnegative")

    def draw_gpm(self, n_antennas: int, rng: np.random.Generator) -> np.ndarray:
        """Per-antenna complex gains, zero-mean log-amplitude and phase errors."""
        log_gain = self.gpm_gain_std * rng.standard_normal(n_antennas)
        phase = self.gpm_phase_std_rad * rng.standard_normal(n_antennas)
        return np.exp(log_gain + 1j * phase)


def _check_angle(theta_rad):
    theta = np.asarray(theta_rad, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("angles must be finite")
    if np.any(np.abs(theta) >= np.pi / 2):
        raise ValueError("angles must satisfy |theta| < pi/2")
    return theta


def far_field_steering(cfg: ArrayConfig, f_hz, theta_rad) -> np.ndarray:
    """Plane-wave array response.

    Scalar ``f_hz`` and ``theta_rad`` give a length-N vector.  Array inputs
    broadcast against each other and the element axis is appended last, so
    ``f_hz`` of shape (M, 1) and ``theta_rad`` of shape (G,) give (M, G, N).
    """
    f = np.asarray(f_hz, dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise ValueError("frequencies must be finite and nonnegative")
    theta = _check_angle(theta_rad)
    phase_per_m = 2 * np.pi * f / SPEED_OF_LIGHT * np.sin(theta)
    return np.exp(-1j * phase_per_m[..., None] * cfg.positions)


def near_field_steering(cfg: ArrayConfig, f_hz, theta_rad, range_m) -> np.ndarray:
    """Spherical-wave array response with exact element distances.

    The source sits at distance ``range_m`` from element 0 in direction
    ``theta`` measured from broadside, on the side that makes the response
    tend to :func:`far_field_steering` as the range grows.  Broadcasting
    follows :func:`far_field_steering`; ``range_m`` broadcasts together
    with the angle.
    """
    f = np.asarray(f_hz, dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise ValueError("frequencies must be finite and nonnegative")
    theta = _check_angle(theta_rad)
    r = np.asarray(range_m, dtype=float)
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("range_m must be positive")
    x = cfg.positions
    r_, s_ = r[..., None], np.sin(theta)[..., None]
    r_n = np.sqrt(r_**2 + x**2 + 2 * r_ * x * s_)
    return np.exp(-1j * 2 * np.pi * (f[..., None] / SPEED_OF_LIGHT) * (r_n - r_))


def mutual_coupling_matrix(cfg: ArrayConfig, imp: ImperfectionModel) -> np.ndarray:
    n = cfg.n_antennas
    if imp.mc_band >= n:
        raise ValueError(f"mc_band must be < n_antennas ({n})")
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    C = np.where(lag <= imp.mc_band, np.complex128(imp.mc_coeff) ** lag, 0.0)
    C[lag == 0] = 1.0
    return C.astype(complex)


def apply_imperfections(v: np.ndarray, mc: Optional[np.ndarray] = None,
                        gpm: Optional[np.ndarray] = None) -> np.ndarray:
    """Return ``diag(gpm) @ mc @ v``; ``v`` may hold steering vectors along its last axis."""
    v = np.asarray(v)
    n = v.shape[-1]
    out = v
    if mc is not None:
        if mc.shape != (n, n):
            raise ValueError(f"coupling matrix shape {mc.shape} does not match length {n}")
        out = out @ mc.T
    if gpm is not None:
        gpm = np.asarray(gpm)
        if gpm.shape != (n,):
            raise ValueError(f"gain/phase vector shape {gpm.shape} does not match length {n}")
        out = out * gpm
    return out


def subarray_mask(cfg: ArrayConfig, indices: Sequence[int]) -> np.ndarray:
    """Q x N zero/one selection matrix keeping ``indices`` in order."""
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("indices must be a nonempty 1-D sequence")
    if np.any(idx < 0) or np.any(idx >= cfg.n_antennas):
        raise ValueError(f"indices out of range [0, {cfg.n_antennas})")
    if np.unique(idx).size != idx.size:
        raise ValueError("duplicate antenna indices")
    S = np.zeros((idx.size, cfg.n_antennas))
    S[np.arange(idx.size), idx] = 1.0
    return S
