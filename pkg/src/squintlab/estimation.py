"""
Wideband sparse channel estimation and subspace DoA estimation.

Channel estimation runs a block OMP whose support is shared by all
subcarriers.  The dictionary either follows the subcarrier frequency
(``bsc``, beam-split compensated) or repeats the carrier response at every
subcarrier (``plain``).

DoA estimation uses MUSIC.  ``uncorrected`` treats every subcarrier as a
narrowband snapshot set at the carrier and produces one estimate per
subcarrier; ``squint-corrected`` scans per-subcarrier noise subspaces with
per-subcarrier steering vectors and combines them into one spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.optimize import linear_sum_assignment
from scipy.signal import find_peaks

from .array import ArrayConfig, far_field_steering
from .channel import SubcarrierGrid

NMSE_FLOOR_DB = -150.0
ESTIMATION_MODES = ("bsc", "plain")
DOA_MODES = ("uncorrected", "squint-corrected")
# experiment-level ablations: the two MUSIC modes plus coupling-only runs at B = 0
DOA_EXPERIMENT_MODES = DOA_MODES + ("mc-only", "mc-calibrated")


@dataclass
class SdDictionary:
    """Per-subcarrier steering dictionaries (M x N x G), unit-norm columns."""

    angle_grid: np.ndarray
    atoms: np.ndarray
    mode: str

    @classmethod
    def build(cls, cfg: ArrayConfig, grid: SubcarrierGrid, angle_grid, mode: str = "bsc") -> "SdDictionary":
        if mode not in ESTIMATION_MODES:
            raise ValueError(f"mode must be one of {ESTIMATION_MODES}")
        angles = np.asarray(angle_grid, dtype=float)
        if np.any(np.diff(angles) <= 0):
            raise ValueError("angle grid must be strictly increasing")
        f = grid.frequencies if mode == "bsc" else np.full(grid.n_subcarriers, grid.carrier_hz)
        A = far_field_steering(cfg, f[:, None], angles) / np.sqrt(cfg.n_antennas)  # M, G, N
        return cls(angles, np.transpose(A, (0, 2, 1)), mode)


@dataclass
class EstimationResult:
    support: np.ndarray
    gains: Optional[np.ndarray] = None
    estimate: Optional[np.ndarray] = None
    angles_rad: Optional[np.ndarray] = None
    metric: Optional[float] = None
    residuals: list = field(default_factory=list)
    missing_peaks: int = 0


def omp_block_estimate(pilots: np.ndarray, sensing: np.ndarray, dictionary: SdDictionary,
                       sparsity: int) -> EstimationResult:
    """Block OMP with a support common to all subcarriers.

    Parameters
    ----------
    pilots : ndarray, shape (M, Y)
        Observations per subcarrier.
    sensing : ndarray, shape (M, Y, N)
        Measurement matrices (stacked ``W^H``) per subcarrier.
    dictionary : SdDictionary
    sparsity : int
        Number of iterations (paths).

    Ties in the correlation score go to the lowest grid index.  The loop
    stops early if the residual vanishes.
    """
    y = np.asarray(pilots)
    Phi = np.asarray(sensing)
    M, Y = y.shape
    if Phi.shape[:2] != (M, Y):
        raise ValueError(f"sensing shape {Phi.shape} does not match pilots {y.shape}")
    G = dictionary.atoms.shape[2]
    if sparsity > G:
        raise ValueError("sparsity exceeds dictionary size")
    B = Phi @ dictionary.atoms  # M, Y, G
    col_norm = np.linalg.norm(B, axis=1)
    Bn = B / np.where(col_norm > 0, col_norm, 1.0)[:, None, :]
    r = y.copy()
    support: list = []
    residuals = [float(np.linalg.norm(r))]
    x = np.zeros((M, 0), complex)
    for _ in range(sparsity):
        if residuals[-1] <= 1e-14 * max(residuals[0], 1e-300):
            break
        score = np.sum(np.abs(np.einsum("myg,my->mg", Bn.conj(), r)), axis=0)
        score[support] = -np.inf
        support.append(int(np.argmax(score)))
        Bs = B[:, :, support]
        x = np.stack([np.linalg.lstsq(Bs[m], y[m], rcond=None)[0] for m in range(M)])
        r = y - np.einsum("myl,ml->my", Bs, x)
        residuals.append(float(np.linalg.norm(r)))
    support_arr = np.asarray(support, dtype=int)
    est = np.einsum("mnl,ml->mn", dictionary.atoms[:, :, support_arr], x)
    return EstimationResult(support=support_arr, gains=x, estimate=est,
                            angles_rad=dictionary.angle_grid[support_arr], residuals=residuals)


def nmse_db(truth: np.ndarray, estimate: np.ndarray) -> float:
    """||H - H_hat||^2 / ||H||^2 over all subcarriers, in dB, floored at -150 dB."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.size == 0:
        raise ValueError("empty input")
    if truth.shape != estimate.shape:
        raise ValueError("shape mismatch")
    num = np.sum(np.abs(truth - estimate) ** 2)
    den = np.sum(np.abs(truth) ** 2)
    if den == 0:
        raise ValueError("truth has zero energy")
    if num == 0:
        return NMSE_FLOOR_DB
    return max(10 * np.log10(num / den), NMSE_FLOOR_DB)


def rmse_deg(truth_rad, est_rad) -> float:
    """Root-mean-square angle error after minimal-cost matching of estimates to truths.

    ``est_rad`` may be 1-D (one estimate per source) or 2-D with one row
    per independent estimate set (e.g. per subcarrier); each row is
    matched separately.  Non-finite estimates (sources without a
    spectrum peak) are dropped before matching; if nothing is left the
    result is NaN.
    """
    truth = np.atleast_1d(np.asarray(truth_rad, dtype=float))
    est = np.asarray(est_rad, dtype=float)
    if truth.size == 0 or est.size == 0:
        raise ValueError("empty input")
    est = np.atleast_2d(est)
    sq = []
    for row in est:
        row = row[np.isfinite(row)]
        cost = np.subtract.outer(truth, row) ** 2
        ti, ei = linear_sum_assignment(cost)
        sq.extend(cost[ti, ei])
    if not sq:
        return float("nan")
    return float(np.rad2deg(np.sqrt(np.mean(sq))))


def covariance(snapshots: np.ndarray) -> np.ndarray:
    """Sample covariance per subcarrier; ``snapshots`` is (M, N, T) -> (M, N, N)."""
    X = np.asarray(snapshots)
    if X.ndim == 2:
        X = X[None]
    T = X.shape[-1]
    if T < 1:
        raise ValueError("need at least one snapshot")
    R = X @ np.conj(np.swapaxes(X, -1, -2)) / T
    return 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))


def signal_subspace(R: np.ndarray, n_sources: int) -> np.ndarray:
    _, E = np.linalg.eigh(R)
    return E[..., -n_sources:]


def _interp_peak(spectrum: np.ndarray, grid: np.ndarray, i: int) -> float:
    """Three-point quadratic interpolation around grid index ``i``."""
    if i == 0 or i == spectrum.size - 1:
        return float(grid[i])
    y0, y1, y2 = spectrum[i - 1], spectrum[i], spectrum[i + 1]
    den = y0 - 2 * y1 + y2
    delta = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return float(grid[i] + delta * (grid[i + 1] - grid[i]))


def _coarse_grid(coarse: float, limit: float) -> np.ndarray:
    return np.arange(-limit, limit + 1e-12, coarse)


def _scan_peaks(null_energy, n_sources: int, step: float, coarse: float, limit: float, refine: bool,
                coarse_energy: Optional[np.ndarray] = None):
    """Coarse scan, local fine scan at ``step``, quadratic interpolation, optional polish.

    ``null_energy`` maps an angle array to the denominator of the MUSIC
    spectrum; ``coarse_energy`` may hold its precomputed values on the
    coarse grid.  Returns the sorted peaks and the number of missing ones.
    """
    scan = _coarse_grid(coarse, limit)
    spec = 1.0 / np.maximum(null_energy(scan) if coarse_energy is None else coarse_energy, 1e-15)
    idx, _ = find_peaks(spec)
    idx = idx[np.argsort(spec[idx], kind="stable")[::-1][:n_sources]]
    out = []
    for i in idx:
        fine = np.arange(max(scan[i] - 2 * coarse, -limit), min(scan[i] + 2 * coarse, limit) + 1e-12, step)
        fspec = 1.0 / np.maximum(null_energy(fine), 1e-15)
        peak = _interp_peak(fspec, fine, int(np.argmax(fspec)))
        if refine:
            lo, hi = max(peak - step, -limit), min(peak + step, limit)
            res = optimize.minimize_scalar(lambda t: float(null_energy(np.array([t]))[0]), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-12})
            if res.fun <= float(null_energy(np.array([peak]))[0]):
                peak = float(res.x)
        out.append(peak)
    return np.sort(np.asarray(out)), n_sources - len(idx)


def music_doa(covariances: np.ndarray, n_sources: int, cfg: ArrayConfig, grid: SubcarrierGrid,
              mode: str = "squint-corrected", calibrate_mc: Optional[np.ndarray] = None,
              scan_step_rad: float = np.deg2rad(0.01), max_angle_rad: float = np.deg2rad(89.0),
              refine: bool = True) -> EstimationResult:
    """MUSIC on per-subcarrier covariances (M x N x N).

    The pseudo-spectrum is first scanned at a coarse step (a fraction of
    the beamwidth), then on a ``scan_step_rad`` grid around each retained
    peak.  Peaks are located by quadratic interpolation and, if
    ``refine``, polished by a bounded scalar search on the exact spectrum
    (interpolation bias would otherwise dominate the error at high SNR).
    With ``calibrate_mc`` every scanning vector is premultiplied by the
    known coupling matrix.

    ``uncorrected`` returns an (M, n_sources) array of per-subcarrier
    estimates; ``squint-corrected`` returns n_sources estimates.
    ``missing_peaks`` counts sources for which no spectrum peak was found.
    """
    if mode not in DOA_MODES:
        raise ValueError(f"mode must be one of {DOA_MODES}")
    R = np.asarray(covariances)
    M, N, _ = R.shape
    if n_sources < 1 or n_sources >= N:
        raise ValueError("n_sources must be in [1, N)")
    if M != grid.n_subcarriers:
        raise ValueError("covariance count does not match the subcarrier grid")
    Es = signal_subspace(R, n_sources)  # M, N, n_sources
    coarse = max(min(10 * scan_step_rad, 0.25 / N), scan_step_rad)

    def steer(f, th):
        a = far_field_steering(cfg, f, th)
        if calibrate_mc is not None:
            a = a @ calibrate_mc.T
        return a / np.linalg.norm(a, axis=-1, keepdims=True)

    def null_energy(f, E, th):
        # a^H Pi a with Pi = I - E E^H and unit-norm a
        return 1.0 - np.sum(np.abs(steer(f, th).conj() @ E) ** 2, axis=-1)

    if mode == "uncorrected":
        fc = grid.carrier_hz
        est = np.full((M, n_sources), np.nan)
        missing = 0
        # carrier steering is shared by all subcarriers: one coarse scan matrix
        Ac = steer(fc, _coarse_grid(coarse, max_angle_rad)).conj()
        coarse_all = 1.0 - np.sum(np.abs(Ac @ Es) ** 2, axis=-1)  # M, G
        for m in range(M):
            pk, miss = _scan_peaks(lambda t, E=Es[m]: null_energy(fc, E, t), n_sources,
                                   scan_step_rad, coarse, max_angle_rad, refine, coarse_all[m])
            est[m, :pk.size] = pk
            missing += miss
        return EstimationResult(support=np.arange(0), angles_rad=est, missing_peaks=missing)

    f = grid.frequencies

    def combined(th):
        return sum(null_energy(f[m], Es[m], th) for m in range(M))

    pk, miss = _scan_peaks(combined, n_sources, scan_step_rad, coarse, max_angle_rad, refine)
    return EstimationResult(support=np.arange(0), angles_rad=pk, missing_peaks=miss)


def wideband_snapshots(cfg: ArrayConfig, grid: SubcarrierGrid, angles_rad, snr_db: float,
                       n_snapshots: int, rng: np.random.Generator,
                       mc: Optional[np.ndarray] = None, gpm: Optional[np.ndarray] = None) -> np.ndarray:
    """Unit-power uncorrelated sources seen through the array at every subcarrier, (M, N, T)."""
    from .array import apply_imperfections
    from .channel import complex_noise

    angles = np.atleast_1d(angles_rad)
    A = far_field_steering(cfg, grid.frequencies[:, None], angles)  # M, K, N
    A = apply_imperfections(A, mc, gpm)
    M, K, N = A.shape
    s = complex_noise((M, K, n_snapshots), 1.0, rng)
    X = np.einsum("mkn,mkt->mnt", A, s)
    if snr_db != np.inf:
        X = X + complex_noise(X.shape, 10 ** (-snr_db / 10), rng)
    return X
