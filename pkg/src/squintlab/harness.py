"""
Experiment configuration, seeded Monte-Carlo runner and result emission.

Configs are INI text with three sections::

    [scenario]
    n_antennas = 128
    carrier_hz = 300e9
    bandwidth_hz = 30e9

    [run]
    experiment = beamforming-se
    trials = 50
    sweep = snr_db: -10, 0, 10

    [options]
    n_paths = 4

Random streams are derived from ``(seed, trial)`` for everything that
describes the scene (paths, targets, combiners) and from
``(seed, trial, sweep_index)`` for noise, so every sweep point sees the same
scenes and curves are compared on common random numbers.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .array import ArrayConfig, ImperfectionModel, mutual_coupling_matrix
from .beamformers import BeamformerKind, angle_dictionary, design, design_digital_sd, spectral_efficiency
from .channel import (PathSet, SubcarrierGrid, WidebandScenario, generate_channel, pilot_sensing_matrix,
                      random_combiners, received_pilots)
from .estimation import (DOA_EXPERIMENT_MODES, ESTIMATION_MODES, SdDictionary, covariance, music_doa,
                         nmse_db, omp_block_estimate, rmse_deg, wideband_snapshots)
from .isac import IM_KINDS, SELECTION_MODES, ImConfig, SubarrayCodebook, im_spectral_efficiency, select_subarray
from .squint import SQUINT_MODES, near_field_squint_deviation, squint_deviation_profile

EXPERIMENTS = ("squint-profile", "beamforming-se", "chanest-nmse", "doa-rmse",
               "antenna-selection", "index-modulation")

SWEEPS = {
    "squint-profile": ("bandwidth_hz", "theta0"),
    "beamforming-se": ("snr_db", "bandwidth_hz"),
    "chanest-nmse": ("snr_db", "bandwidth_hz"),
    "doa-rmse": ("snr_db", "bandwidth_hz"),
    "antenna-selection": ("eta", "snr_db", "bandwidth_hz"),
    "index-modulation": ("bandwidth_hz", "eta", "snr_db"),
}

CSV_HEADER = ("sweep", "metric", "mode", "mean", "std", "trials")

SCENARIO_KEYS = {
    "n_antennas": int, "n_rf": int, "n_subcarriers": int, "carrier_hz": float,
    "bandwidth_hz": float, "snr_db": float, "eta": float,
}
RUN_KEYS = {"experiment": str, "trials": int, "seed": int, "sweep": str, "output": str}
REQUIRED = ("n_antennas", "carrier_hz", "experiment")
SCENARIO_DEFAULTS = {"n_rf": 8, "n_subcarriers": 32, "bandwidth_hz": 0.0, "snr_db": 0.0, "eta": 0.5}
RUN_DEFAULTS = {"trials": 50, "seed": 0, "output": ""}


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


# option name -> (parser, default); a dict default means per-experiment values
OPTIONS = {
    "n_paths": (int, {"index-modulation": 8, None: 4}),
    "theta0_deg": (float, 60.0),
    "range_m": (float, 0.0),
    "n_ttd": (int, 16),
    "quantize_ttd": (_bool, False),
    "n_sub": (int, 8),
    "dictionary_size": (int, 256),
    "n_pilot_frames": (int, 12),
    "n_snapshots": (int, 128),
    "source_deg": (_floats, (60.0,)),
    "mc_band": (int, 0),
    "mc_coeff": (complex, 0j),
    "subarray_size": (int, 8),
    "n_targets": (int, 1),
    "n_active": (int, 3),
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ExperimentError(RuntimeError):
    """A trial failed; carries the Monte-Carlo coordinates."""

    def __init__(self, trial: int, sweep: str, cause: BaseException):
        super().__init__(f"trial {trial}, {sweep}: {type(cause).__name__}: {cause}")
        self.trial = trial
        self.sweep = sweep
        self.cause = cause


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    n_antennas: int
    carrier_hz: float
    n_rf: int = 8
    n_subcarriers: int = 32
    bandwidth_hz: float = 0.0
    snr_db: float = 0.0
    eta: float = 0.5
    trials: int = 50
    seed: int = 0
    sweep_name: str = "snr_db"
    sweep_values: Tuple[float, ...] = (0.0,)
    output: str = ""
    options: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {self.trials}")
        if self.sweep_name not in SWEEPS[self.experiment]:
            raise ConfigError("sweep", f"{self.experiment} sweeps one of {SWEEPS[self.experiment]}, "
                                       f"got {self.sweep_name!r}")
        if not self.sweep_values:
            raise ConfigError("sweep", "needs at least one value")
        object.__setattr__(self, "options", tuple(sorted(self.options)))
        for name, _ in self.options:
            if name not in OPTIONS:
                raise ConfigError(name, "unknown option")
        try:
            cfg = ArrayConfig(self.n_antennas, self.carrier_hz)
        except ValueError as exc:
            raise ConfigError("n_antennas" if "n_antennas" in str(exc) else "carrier_hz", str(exc)) from None
        if not 1 <= self.n_rf <= self.n_antennas:
            raise ConfigError("n_rf", f"must be in [1, n_antennas={self.n_antennas}], got {self.n_rf}")
        if self.n_subcarriers < 1:
            raise ConfigError("n_subcarriers", "must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta", f"must be in [0, 1], got {self.eta}")
        for i in range(len(self.sweep_values)):
            try:
                WidebandScenario(cfg, self.grid(i), n_rf=self.n_rf, eta=self.point(i)["eta"],
                                 trials=self.trials, seed=self.seed, n_paths=self.option("n_paths"))
            except ValueError as exc:
                raise ConfigError(self.sweep_name if self.sweep_name in str(exc) else "sweep", str(exc)) from None
            if self.sweep_name == "theta0" and abs(self.sweep_values[i]) >= 90:
                raise ConfigError("sweep", "theta0 values must be in (-90, 90) degrees")

    def option(self, name: str):
        if name not in OPTIONS:
            raise KeyError(name)
        given = dict(self.options)
        if name in given:
            return given[name]
        default = OPTIONS[name][1]
        if isinstance(default, dict):
            return default.get(self.experiment, default[None])
        return default

    def resolved_options(self) -> dict:
        return {k: self.option(k) for k in OPTIONS}

    def point(self, sweep_index: int) -> dict:
        """Scenario values at one sweep point."""
        p = {"bandwidth_hz": self.bandwidth_hz, "snr_db": self.snr_db, "eta": self.eta,
             "theta0": self.option("theta0_deg")}
        p[self.sweep_name] = float(self.sweep_values[sweep_index])
        return p

    def grid(self, sweep_index: int) -> SubcarrierGrid:
        return SubcarrierGrid(self.n_subcarriers, self.carrier_hz, self.point(sweep_index)["bandwidth_hz"])

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(self.n_antennas, self.carrier_hz)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep_values"] = list(self.sweep_values)
        d["options"] = {k: _jsonable(v) for k, v in self.resolved_options().items()}
        return d


def _jsonable(v):
    if isinstance(v, complex):
        return str(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentSpec:
    """Parse INI config text into a validated :class:`ExperimentSpec`.

    ``experiment`` (e.g. from the command line) fills in or must match the
    config's ``experiment`` key.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    allowed = {"scenario": SCENARIO_KEYS, "run": RUN_KEYS, "options": {k: v[0] for k, v in OPTIONS.items()}}
    values: Dict[str, object] = {}
    options: Dict[str, object] = {}
    for section in cp.sections():
        if section not in allowed:
            raise ConfigError(section, f"unknown section (expected {', '.join(allowed)})")
        for key, raw in cp.items(section):
            if key not in allowed[section]:
                raise ConfigError(key, f"unknown key in [{section}]")
            if section != "run" or key != "sweep":
                try:
                    val = allowed[section][key](raw)
                except ValueError as exc:
                    raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
            else:
                val = raw
            (options if section == "options" else values)[key] = val
    if experiment is not None:
        if values.get("experiment", experiment) != experiment:
            raise ConfigError("experiment", f"config says {values['experiment']!r}, command line says {experiment!r}")
        values["experiment"] = experiment
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(key, "missing required key")
    for k, v in {**SCENARIO_DEFAULTS, **RUN_DEFAULTS}.items():
        values.setdefault(k, v)
    exp = values["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    sweep = values.pop("sweep", None)
    if sweep is None:
        # default: a single point at the scenario value of the primary sweep variable
        name = SWEEPS[exp][0]
        sweep_values = (float(values[name]),)
    else:
        name, sep, rest = str(sweep).partition(":")
        if not sep:
            raise ConfigError("sweep", "expected '<variable>: v1, v2, ...'")
        name = name.strip()
        try:
            sweep_values = _floats(rest)
        except ValueError as exc:
            raise ConfigError("sweep", str(exc)) from None
    return ExperimentSpec(sweep_name=name, sweep_values=sweep_values, options=tuple(options.items()),
                          **values)


def serialize_config(spec: ExperimentSpec) -> str:
    """INI text that :func:`parse_config` maps back to ``spec``."""
    lines = ["[scenario]"]
    lines += [f"{k} = {_fmt(getattr(spec, k))}" for k in SCENARIO_KEYS]
    lines += ["", "[run]", f"experiment = {spec.experiment}", f"trials = {spec.trials}",
              f"seed = {spec.seed}", f"sweep = {spec.sweep_name}: {_fmt(tuple(spec.sweep_values))}"]
    if spec.output:
        lines.append(f"output = {spec.output}")
    if spec.options:
        lines += ["", "[options]"] + [f"{k} = {_fmt(v)}" for k, v in spec.options]
    return "\n".join(lines) + "\n"


def child_seed(seed: int, *coords: int) -> np.random.SeedSequence:
    """Stable per-coordinate seed: SeedSequence hashing of ``(seed, *coords)``."""
    return np.random.SeedSequence([int(seed), *(int(c) for c in coords)])


SCENE, NOISE = 0, 1


def scene_rng(spec: ExperimentSpec, trial: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(spec.seed, SCENE, trial))


def noise_rng(spec: ExperimentSpec, trial: int, sweep_index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(spec.seed, NOISE, trial, sweep_index))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: List[dict] = field(default_factory=list)

    def metadata(self) -> dict:
        meta = {"artifact": "squintlab", "version": __version__, "seed": self.spec.seed,
                "spec": self.spec.to_dict()}
        if self.spec.experiment == "beamforming-se":
            meta["notes"] = [f"TTD elements per RF chain n_ttd={self.spec.option('n_ttd')} "
                             "(must divide n_antennas; 10 does not divide 128, so 16 is the default)"]
        return meta


# Per-trial experiment bodies: return {sweep_index: {(metric, mode): value}}

def _draw_targets(rng, n):
    return rng.uniform(-np.deg2rad(60.0), np.deg2rad(60.0), n)


def _trial_squint(spec, trial):
    out = {}
    cfg = spec.array
    r0 = spec.option("range_m")
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        grid = spec.grid(i)
        th = np.deg2rad(p["theta0"])
        reps = [("far-field", squint_deviation_profile(cfg, grid, th))]
        if r0 > 0:
            reps.append(("near-field", near_field_squint_deviation(cfg, grid, th, r0)))
        vals = {}
        for mode, rep in reps:
            dev = np.rad2deg(rep.deviation_rad)
            vals[("deviation_low_edge_deg", mode)] = float(dev[0])
            vals[("deviation_high_edge_deg", mode)] = float(dev[-1])
            vals[("max_abs_deviation_deg", mode)] = float(np.max(np.abs(dev)))
            vals[("worst_gain_loss_db", mode)] = float(np.min(rep.gain_loss_db))
            if rep.range_deviation_m is not None:
                vals[("max_abs_range_deviation_m", mode)] = float(np.max(np.abs(rep.range_deviation_m)))
        out[i] = vals
    return out


def _trial_beamforming(spec, trial):
    rng = scene_rng(spec, trial)
    cfg = spec.array
    base = PathSet.random(spec.option("n_paths"), rng)
    out = {}
    cache = {}
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        key = p["bandwidth_hz"]
        if key not in cache:
            ch = generate_channel(cfg, spec.grid(i), base)
            T = design_digital_sd(ch.h)
            Tm = design_digital_sd(ch.narrowband_model().h)
            Fs = {k.value: design(k, ch, spec.n_rf, T, Tm, n_ttd=spec.option("n_ttd"),
                                  quantize=spec.option("quantize_ttd"), n_sub=spec.option("n_sub"))
                  for k in BeamformerKind}
            cache[key] = (ch, Fs)
        ch, Fs = cache[key]
        out[i] = {("se_bits", k): spectral_efficiency(ch.h, F, p["snr_db"]) for k, F in Fs.items()}
    return out


@lru_cache(maxsize=16)
def _dictionary(n_antennas, carrier_hz, n_sub, bandwidth_hz, size, mode):
    cfg = ArrayConfig(n_antennas, carrier_hz)
    return SdDictionary.build(cfg, SubcarrierGrid(n_sub, carrier_hz, bandwidth_hz), angle_dictionary(size), mode)


def _trial_chanest(spec, trial):
    rng = scene_rng(spec, trial)
    cfg = spec.array
    G = spec.option("dictionary_size")
    L = spec.option("n_paths")
    paths = PathSet.random(L, rng, angle_grid=angle_dictionary(G))
    W = random_combiners(spec.option("n_pilot_frames"), cfg.n_antennas, spec.n_rf, rng)
    S = pilot_sensing_matrix(W, spec.n_subcarriers)
    out = {}
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        ch = generate_channel(cfg, spec.grid(i), paths)
        y = received_pilots(ch, W, p["snr_db"], noise_rng(spec, trial, i))
        vals = {}
        for mode in ESTIMATION_MODES:
            D = _dictionary(cfg.n_antennas, cfg.carrier_hz, spec.n_subcarriers, p["bandwidth_hz"], G, mode)
            vals[("nmse_db", mode)] = nmse_db(ch.h, omp_block_estimate(y, S, D, L).estimate)
        out[i] = vals
    return out


def _trial_doa(spec, trial):
    cfg = spec.array
    sources = np.deg2rad(np.asarray(spec.option("source_deg")))
    T = spec.option("n_snapshots")
    mc_band = spec.option("mc_band")
    C = None
    if mc_band > 0:
        C = mutual_coupling_matrix(cfg, ImperfectionModel(mc_band, spec.option("mc_coeff")))
    out = {}
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        rng = noise_rng(spec, trial, i)
        grid = spec.grid(i)
        R = covariance(wideband_snapshots(cfg, grid, sources, p["snr_db"], T, rng))
        runs = [("uncorrected", R, grid, "uncorrected", None),
                ("squint-corrected", R, grid, "squint-corrected", None)]
        if C is not None:
            g0 = SubcarrierGrid(spec.n_subcarriers, spec.carrier_hz, 0.0)
            R0 = covariance(wideband_snapshots(cfg, g0, sources, p["snr_db"], T, rng, mc=C))
            runs += [("mc-only", R0, g0, "uncorrected", None), ("mc-calibrated", R0, g0, "uncorrected", C)]
        vals = {}
        for name, Rm, g, mode, cal in runs:
            res = music_doa(Rm, sources.size, cfg, g, mode, calibrate_mc=cal)
            vals[("rmse_deg", name)] = rmse_deg(sources, res.angles_rad)
            vals[("missing_peaks", name)] = float(res.missing_peaks)
        out[i] = vals
    return out


@lru_cache(maxsize=4)
def _codebook(n_antennas, size):
    return SubarrayCodebook.generate(n_antennas, size)


def _trial_selection(spec, trial):
    rng = scene_rng(spec, trial)
    cfg = spec.array
    paths = PathSet.random(spec.option("n_paths"), rng)
    targets = _draw_targets(rng, spec.option("n_targets"))
    cb = _codebook(cfg.n_antennas, spec.option("subarray_size"))
    out = {}
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        ch = generate_channel(cfg, spec.grid(i), paths)
        vals = {}
        for mode in SELECTION_MODES:
            r = select_subarray(cb, ch, targets, eta=p["eta"], snr_db=p["snr_db"], mode=mode,
                                n_rf=spec.n_rf, rng=noise_rng(spec, trial, i))
            vals[("objective", mode)] = r.objective
            vals[("se_bits", mode)] = r.se
            vals[("radar_gain_db", mode)] = r.radar_gain_db
        out[i] = vals
    return out


def _trial_im(spec, trial):
    rng = scene_rng(spec, trial)
    cfg = spec.array
    im = ImConfig(spec.option("n_paths"), spec.option("n_active"))
    paths = PathSet.random(im.n_paths, rng)
    targets = _draw_targets(rng, spec.option("n_targets"))
    out = {}
    for i in range(len(spec.sweep_values)):
        p = spec.point(i)
        ch = generate_channel(cfg, spec.grid(i), paths)
        se = im_spectral_efficiency(ch, im, targets, eta=p["eta"], snr_db=p["snr_db"], n_rf=spec.n_rf)
        out[i] = {("se_bits", k): se[k] for k in IM_KINDS}
        out[i][("index_bits", "im-digital-sd")] = float(im.index_bits)
    return out


TRIAL_FUNCTIONS = {
    "squint-profile": _trial_squint,
    "beamforming-se": _trial_beamforming,
    "chanest-nmse": _trial_chanest,
    "doa-rmse": _trial_doa,
    "antenna-selection": _trial_selection,
    "index-modulation": _trial_im,
}

MODES = {
    "squint-profile": SQUINT_MODES,
    "beamforming-se": tuple(k.value for k in BeamformerKind),
    "chanest-nmse": ESTIMATION_MODES,
    "doa-rmse": DOA_EXPERIMENT_MODES,
    "antenna-selection": SELECTION_MODES,
    "index-modulation": IM_KINDS,
}


def _run_trial(spec: ExperimentSpec, trial: int):
    try:
        return TRIAL_FUNCTIONS[spec.experiment](spec, trial)
    except Exception as exc:
        raise ExperimentError(trial, f"sweep {spec.sweep_name} in {list(spec.sweep_values)}", exc) from exc


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Run every trial and aggregate mean/std per (sweep value, metric, mode).

    Trials are independent and reduced in trial order, so the output does
    not depend on ``workers``.  The squint profile is deterministic and
    runs a single trial.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n = 1 if spec.experiment == "squint-profile" else spec.trials
    if workers == 1 or n == 1:
        per_trial = [_run_trial(spec, t) for t in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_run_trial, [spec] * n, range(n)))
    rows = []
    for i, v in enumerate(spec.sweep_values):
        keys = list(per_trial[0][i])
        for metric, mode in keys:
            x = np.array([pt[i][(metric, mode)] for pt in per_trial], dtype=float)
            rows.append({"sweep": float(v), "metric": metric, "mode": mode,
                         "mean": float(np.mean(x)), "std": float(np.std(x)), "trials": int(x.size)})
    return ExperimentResult(spec, rows)


def _csv_text(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow([repr(r["sweep"]), r["metric"], r["mode"], repr(r["mean"]), repr(r["std"]), r["trials"]])
    return buf.getvalue()


def emit_csv(result: ExperimentResult, path=None) -> str:
    """Write the rows as CSV (header ``sweep,metric,mode,mean,std,trials``); returns the text."""
    text = _csv_text(result)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def emit_json(result: ExperimentResult, path=None) -> str:
    """Write ``{"metadata": ..., "rows": [...]}``; non-finite numbers become strings."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    doc = {"metadata": result.metadata(),
           "rows": [{k: clean(v) for k, v in r.items()} for r in result.rows]}
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
