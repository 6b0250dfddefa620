"""
Beam-squint metrics: squinted directions, band deviation profiles and beampatterns.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .array import ArrayConfig, far_field_steering, near_field_steering
from .channel import SubcarrierGrid

log = logging.getLogger(__name__)

SQUINT_MODES = ("far-field", "near-field")


def squinted_direction(theta0_rad, f_m, f_c):
    """Peak direction at ``f_m`` of a phase-shifter beam steered to ``theta0`` at ``f_c``."""
    theta0 = np.asarray(theta0_rad, dtype=float)
    if np.any(np.abs(theta0) >= np.pi / 2):
        raise ValueError("|theta0| must be < pi/2")
    f_m = np.asarray(f_m, dtype=float)
    if np.any(f_m <= 0) or f_c <= 0:
        raise ValueError("frequencies must be positive")
    return np.arcsin(np.clip((f_c / f_m) * np.sin(theta0), -1.0, 1.0))


@dataclass
class SquintReport:
    """Per-subcarrier squint.

    Deviations are ``pointed - designed``: positive means the beam moved
    away from broadside (low-end subcarriers for a positive steering angle).
    """

    frequencies_hz: np.ndarray
    pointed_angle_rad: np.ndarray
    deviation_rad: np.ndarray
    gain_loss_db: np.ndarray
    pointed_range_m: Optional[np.ndarray] = None
    range_deviation_m: Optional[np.ndarray] = None
    on_boundary: Optional[np.ndarray] = None

    def rows(self):
        for i, f in enumerate(self.frequencies_hz):
            row = {
                "subcarrier_hz": float(f),
                "deviation_deg": float(np.rad2deg(self.deviation_rad[i])),
                "gain_loss_db": float(self.gain_loss_db[i]),
            }
            if self.range_deviation_m is not None:
                row["range_dev_m"] = float(self.range_deviation_m[i])
            yield row

    def to_csv(self) -> str:
        rows = list(self.rows())
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


def squint_deviation_profile(cfg: ArrayConfig, grid: SubcarrierGrid, theta0_rad: float) -> SquintReport:
    f = grid.frequencies
    pointed = squinted_direction(theta0_rad, f, grid.carrier_hz)
    w = far_field_steering(cfg, grid.carrier_hz, theta0_rad) / np.sqrt(cfg.n_antennas)
    a_m = far_field_steering(cfg, f[:, None], np.full(1, theta0_rad))[:, 0]
    g_m = np.abs(a_m.conj() @ w) ** 2
    # matched gain at the carrier is exactly N for this w
    loss_db = 10 * np.log10(np.maximum(g_m, 1e-300) / cfg.n_antennas)
    return SquintReport(f, pointed, pointed - theta0_rad, np.minimum(loss_db, 0.0))


def beampattern(weights, cfg: ArrayConfig, f_hz: float, angle_grid_rad) -> np.ndarray:
    """``|a_f(theta)^H w|^2`` over the grid.

    With ``||w|| = 1`` a beam matched at ``f_hz`` peaks at ``N``; in general
    the peak of a matched full-array beam is ``N * ||w||**2``.
    """
    w = np.asarray(weights)
    if w.shape != (cfg.n_antennas,):
        raise ValueError(f"weights must have length {cfg.n_antennas}")
    if np.linalg.norm(w) == 0:
        raise ValueError("weights must be nonzero")
    grid = np.atleast_1d(np.asarray(angle_grid_rad, dtype=float))
    if grid.size == 0:
        raise ValueError("empty angle grid")
    A = far_field_steering(cfg, f_hz, grid)
    return np.abs(A.conj() @ w) ** 2


def beamwidth_3db(pattern: np.ndarray, angle_grid) -> float:
    """Width of the contiguous region around the peak that stays within 3 dB of it."""
    g = np.asarray(pattern)
    p = int(np.argmax(g))
    above = g >= g[p] / 2
    lo = p
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = p
    while hi < g.size - 1 and above[hi + 1]:
        hi += 1
    return float(angle_grid[hi] - angle_grid[lo])


def _near_field_gain(cfg, f, w, thetas, ranges):
    th, rr = np.meshgrid(thetas, ranges, indexing="ij")
    A = near_field_steering(cfg, f, th, rr)  # T, R, N
    return np.abs(A.conj() @ w) ** 2


def near_field_squint_deviation(cfg: ArrayConfig, grid: SubcarrierGrid, theta0_rad: float,
                                range0_m: float, *, theta_span_rad: float = np.deg2rad(8.0),
                                range_span: tuple = (0.25, 4.0),
                                theta_step_rad: float = np.deg2rad(0.05),
                                range_step_m: float = 0.1,
                                polish: bool = True) -> SquintReport:
    """Gain-argmax focus point of a carrier-focused near-field beam at every subcarrier.

    The search window is ``theta0 +/- theta_span_rad`` by
    ``[range_span[0]*r0, range_span[1]*r0]``.  A coarse scan (half a
    beamwidth in angle, ten range steps) is refined on the
    ``theta_step_rad`` x ``range_step_m`` grid and then, if ``polish``,
    by a Nelder-Mead search on the continuous gain.  The focal ridge is
    very flat along range, so without polishing the range deviation is
    only as good as the grid.  Maxima on the window edge are reported in
    ``on_boundary`` and logged.
    """
    if range0_m <= 0:
        raise ValueError("range0_m must be positive")
    lo_t = max(theta0_rad - theta_span_rad, -np.pi / 2 + 1e-6)
    hi_t = min(theta0_rad + theta_span_rad, np.pi / 2 - 1e-6)
    lo_r, hi_r = range_span[0] * range0_m, range_span[1] * range0_m
    if not lo_r < range0_m < hi_r:
        raise ValueError("range0 outside the search window")
    w = near_field_steering(cfg, grid.carrier_hz, theta0_rad, range0_m) / np.sqrt(cfg.n_antennas)
    f_all = grid.frequencies
    coarse_t = min(10 * theta_step_rad, 1.0 / (cfg.n_antennas * max(np.cos(theta0_rad), 0.05)))
    coarse_r = 10 * range_step_m
    theta_c = np.arange(lo_t, hi_t + 1e-12, coarse_t)
    range_c = np.arange(lo_r, hi_r + 1e-9, coarse_r)
    pointed_t = np.empty(f_all.size)
    pointed_r = np.empty(f_all.size)
    boundary = np.zeros(f_all.size, dtype=bool)
    for i, f in enumerate(f_all):
        g = _near_field_gain(cfg, f, w, theta_c, range_c)
        it, ir = np.unravel_index(np.argmax(g), g.shape)
        thetas = np.arange(max(theta_c[it] - 2 * coarse_t, lo_t),
                           min(theta_c[it] + 2 * coarse_t, hi_t) + 1e-12, theta_step_rad)
        ranges = np.arange(max(range_c[ir] - 2 * coarse_r, lo_r),
                           min(range_c[ir] + 2 * coarse_r, hi_r) + 1e-9, range_step_m)
        g = _near_field_gain(cfg, f, w, thetas, ranges)
        it, ir = np.unravel_index(np.argmax(g), g.shape)
        t_best, r_best = thetas[it], ranges[ir]
        if polish:
            def neg_gain(x):
                t, r = x
                if not (lo_t <= t <= hi_t and lo_r <= r <= hi_r):
                    return 0.0
                return -np.abs(near_field_steering(cfg, f, t, r).conj() @ w) ** 2
            res = optimize.minimize(neg_gain, [t_best, r_best], method="Nelder-Mead",
                                    options={"xatol": 1e-9, "fatol": 1e-12,
                                             "initial_simplex": [[t_best, r_best],
                                                                 [t_best + theta_step_rad, r_best],
                                                                 [t_best, r_best + range_step_m]]})
            if -res.fun >= g[it, ir]:
                t_best, r_best = res.x
        pointed_t[i], pointed_r[i] = t_best, r_best
        boundary[i] = (t_best <= lo_t + theta_step_rad / 2 or t_best >= hi_t - theta_step_rad / 2
                       or r_best <= lo_r + range_step_m / 2 or r_best >= hi_r - range_step_m / 2)
    if boundary.any():
        log.warning("near-field focus hit the search window edge at %d subcarriers", boundary.sum())
    a0 = near_field_steering(cfg, f_all[:, None], np.full(1, theta0_rad), np.full(1, range0_m))[:, 0]
    g0 = np.abs(a0.conj() @ w) ** 2
    loss_db = np.minimum(10 * np.log10(np.maximum(g0, 1e-300) / cfg.n_antennas), 0.0)
    return SquintReport(f_all, pointed_t, pointed_t - theta0_rad, loss_db,
                        pointed_range_m=pointed_r, range_deviation_m=pointed_r - range0_m,
                        on_boundary=boundary)
