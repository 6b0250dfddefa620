"""
Wideband geometric multipath channels on a centered OFDM subcarrier grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .array import ArrayConfig, far_field_steering, near_field_steering

DEFAULT_MAX_DELAY_S = 20e-9
DEFAULT_MAX_ANGLE_RAD = np.deg2rad(60.0)


@dataclass(frozen=True)
class SubcarrierGrid:
    """M subcarriers spread over bandwidth B around the carrier, no DC bin."""

    n_subcarriers: int
    carrier_hz: float
    bandwidth_hz: float = 0.0

    def __post_init__(self):
        if int(self.n_subcarriers) != self.n_subcarriers or self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be a positive integer")
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")
        if self.bandwidth_hz < 0:
            raise ValueError("bandwidth_hz must be nonnegative")
        if self.frequencies[0] <= 0:
            raise ValueError("bandwidth too large: lowest subcarrier frequency is not positive")

    @property
    def frequencies(self) -> np.ndarray:
        m = np.arange(1, self.n_subcarriers + 1)
        return self.carrier_hz + (self.bandwidth_hz / self.n_subcarriers) * (m - (self.n_subcarriers + 1) / 2)


@dataclass
class PathSet:
    """Per-path complex gain, angle, delay and (optionally) range."""

    gains: np.ndarray
    angles_rad: np.ndarray
    delays_s: np.ndarray
    ranges_m: Optional[np.ndarray] = None

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        self.angles_rad = np.atleast_1d(np.asarray(self.angles_rad, dtype=float))
        self.delays_s = np.atleast_1d(np.asarray(self.delays_s, dtype=float))
        if self.ranges_m is not None:
            self.ranges_m = np.atleast_1d(np.asarray(self.ranges_m, dtype=float))
        L = self.gains.size
        if L == 0:
            raise ValueError("a path set needs at least one path")
        shapes = {self.angles_rad.size, self.delays_s.size}
        if self.ranges_m is not None:
            shapes.add(self.ranges_m.size)
        if shapes != {L}:
            raise ValueError("path parameter arrays must have equal length")
        if np.any(np.abs(self.angles_rad) >= np.pi / 2):
            raise ValueError("path angles must satisfy |theta| < pi/2")
        if np.any(self.delays_s < 0):
            raise ValueError("path delays must be nonnegative")

    def __len__(self):
        return self.gains.size

    @classmethod
    def random(cls, n_paths: int, rng: np.random.Generator, *,
               max_delay_s: float = DEFAULT_MAX_DELAY_S,
               max_angle_rad: float = DEFAULT_MAX_ANGLE_RAD,
               angle_grid: Optional[np.ndarray] = None) -> "PathSet":
        """Draw CN(0, 1/L) gains, uniform angles and uniform delays.

        With ``angle_grid`` the angles are drawn (without replacement) from the
        grid points inside ``[-max_angle_rad, max_angle_rad]``.
        """
        if n_paths < 1:
            raise ValueError("n_paths must be positive")
        gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2 * n_paths)
        if angle_grid is None:
            angles = rng.uniform(-max_angle_rad, max_angle_rad, n_paths)
        else:
            pool = np.asarray(angle_grid)[np.abs(angle_grid) <= max_angle_rad]
            angles = rng.choice(pool, n_paths, replace=False)
        delays = rng.uniform(0.0, max_delay_s, n_paths)
        return cls(gains, angles, delays)

    def subset(self, idx) -> "PathSet":
        idx = np.asarray(idx)
        return PathSet(self.gains[idx], self.angles_rad[idx], self.delays_s[idx],
                       None if self.ranges_m is None else self.ranges_m[idx])


@dataclass
class WidebandChannel:
    """Per-subcarrier MISO channel ``h[m]`` (shape M x N) plus the paths that built it."""

    h: np.ndarray
    paths: PathSet
    array: ArrayConfig
    grid: SubcarrierGrid

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def narrowband_model(self) -> "WidebandChannel":
        """Same paths with every steering vector taken at the carrier.

        This is the channel a designer assuming frequency-flat array
        responses believes in; delay phases stay per subcarrier.
        """
        return generate_channel(self.array, self.grid, self.paths, steering_at_carrier=True)


@dataclass
class WidebandScenario:
    array: ArrayConfig
    grid: SubcarrierGrid
    n_rf: int = 8
    users: List[PathSet] = field(default_factory=list)
    targets_rad: List[float] = field(default_factory=list)
    snr_db: float = 0.0
    eta: float = 1.0
    trials: int = 50
    seed: int = 0
    n_paths: int = 4

    def __post_init__(self):
        if self.grid.carrier_hz != self.array.carrier_hz:
            raise ValueError("grid and array carriers differ")
        if not 1 <= self.n_rf <= self.array.n_antennas:
            raise ValueError(f"n_rf must be in [1, n_antennas], got {self.n_rf}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")


def generate_channel(array: ArrayConfig, grid: SubcarrierGrid, paths: PathSet, *,
                     steering_at_carrier: bool = False) -> WidebandChannel:
    """h_m = sum_l gain_l * exp(-2j*pi*f_m*delay_l) * a_m(angle_l)."""
    if len(paths) == 0:
        raise ValueError("empty path set")
    f = grid.frequencies
    f_steer = np.full_like(f, grid.carrier_hz) if steering_at_carrier else f
    if paths.ranges_m is None:
        A = far_field_steering(array, f_steer[:, None], paths.angles_rad)  # M, L, N
    else:
        A = near_field_steering(array, f_steer[:, None], paths.angles_rad, paths.ranges_m)
    coeff = paths.gains * np.exp(-2j * np.pi * np.outer(f, paths.delays_s))  # M, L
    h = np.einsum("ml,mln->mn", coeff, A)
    return WidebandChannel(h=h, paths=paths, array=array, grid=grid)


def add_awgn(signal: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` below the mean signal power."""
    signal = np.asarray(signal)
    if not np.all(np.isfinite(signal)):
        raise ValueError("signal must be finite")
    if snr_db == np.inf:
        return signal.copy()
    p = np.mean(np.abs(signal) ** 2)
    if p == 0:
        raise ValueError("zero-power signal has no defined SNR")
    return signal + complex_noise(signal.shape, p / 10 ** (snr_db / 10), rng)


def complex_noise(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def received_pilots(channel: WidebandChannel, combiners: np.ndarray, snr_db: float,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Unit pilots observed through per-frame combiners.

    ``combiners`` has shape (P, N, K) for subcarrier-independent combiners
    or (P, M, N, K) for per-subcarrier ones.  Noise of variance
    ``10**(-snr_db/10)`` is added at every antenna before combining, so
    ``snr_db`` is the per-antenna receive SNR for a unit-average-power
    channel.  Returns the stacked observations with shape (M, P*K).
    """
    h = channel.h
    M, N = h.shape
    W = np.asarray(combiners)
    if W.ndim == 3:
        W = np.broadcast_to(W[:, None], (W.shape[0], M) + W.shape[1:])
    if W.ndim != 4 or W.shape[1] != M or W.shape[2] != N:
        raise ValueError(f"combiner shape {np.shape(combiners)} does not match channel {h.shape}")
    P, _, _, K = W.shape
    rx = np.broadcast_to(h[None], (P, M, N))
    if snr_db != np.inf:
        if rng is None:
            raise ValueError("noisy pilots need an rng")
        rx = rx + complex_noise((P, M, N), 10 ** (-snr_db / 10), rng)
    y = np.einsum("pmnk,pmn->mpk", W.conj(), rx)
    return y.reshape(M, P * K)


def pilot_sensing_matrix(combiners: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Stacked ``W^H`` per subcarrier, shape (M, P*K, N), matching :func:`received_pilots`."""
    W = np.asarray(combiners)
    if W.ndim == 3:
        W = np.broadcast_to(W[:, None], (W.shape[0], n_subcarriers) + W.shape[1:])
    P, M, N, K = W.shape
    return np.transpose(W.conj(), (1, 0, 3, 2)).reshape(M, P * K, N)


def random_combiners(n_frames: int, n_antennas: int, n_rf: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Random-phase analog combiners with unit-norm columns, shape (P, N, K)."""
    phases = rng.uniform(0, 2 * np.pi, (n_frames, n_antennas, n_rf))
    return np.exp(1j * phases) / np.sqrt(n_antennas)
