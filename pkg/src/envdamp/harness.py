"""Monte-Carlo studies: scenario SNR sweeps, mode interference, baseline comparison.

A study is a grid of independent work items, one per ``(snr, trial)`` (and
per frequency gap for the interference study). Each item draws a fresh
ensemble of observed records and runs every requested method on it. Rows are
sorted before they are written, so the worker count never changes output
bytes.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import baselines as bl
from .damping import EnsembleConfig, EstimationError, estimate_from_ensemble, estimate_impact_index
from .envelope import ALL_FORMS, KernelForm, KernelSpec
from .optimize import FitResult, OptimizationError, TrainConfig, optimize_theta
from .segment import SegmentError, SegmentPolicy
from .signal_model import (DEFAULT_N_SAMPLES, DEFAULT_SAMPLE_RATE_HZ, DatasetSpec, ModalMode,
                           ModalSystem, ObservationConfig, TimeRecord, draw_observations,
                           generate_dataset, synthesize_response)
from .spectral import (FrfData, average_frfs, average_power, frf_impulse_ratio,
                       frf_truncate, one_sided)

logger = logging.getLogger(__name__)

RESULTS_HEADER = ("scenario", "method", "snr_db", "trial", "zeta_hat", "valid", "wall_ms")
REGISTRY_VERSION = 1
SUMMARY_VERSION = 1

DEFAULT_SNR_GRID_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

ENVELOPE_METHODS = tuple(form.value for form in ALL_FORMS)
BASELINE_METHODS = ("pp", "sdof", "yoshida", "lsrf", "plscf")
ALL_METHODS = ENVELOPE_METHODS + BASELINE_METHODS
TOP_TIER_METHODS = ("gaussian_window", "triangle_window", "welch_window", "blackman_filter")
COMPARE_METHODS = TOP_TIER_METHODS + ("lsrf", "plscf", "pp", "yoshida")

# failures a method may raise on a bad ensemble; anything else is a bug
_METHOD_ERRORS = (bl.BaselineError, EstimationError, SegmentError, ValueError,
                  np.linalg.LinAlgError, FloatingPointError)


class MissingFitError(KeyError):
    pass


# --------------------------------------------------------------------------
# configuration types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    modes: ModalSystem
    target_mode_index: int = 1
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID_DB
    n_recordings: int = 20
    n_trials: int = 50
    rng_seed: int = 0
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    n_samples: int = DEFAULT_N_SAMPLES
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if not 0 <= self.target_mode_index < len(self.modes.modes):
            raise ValueError("target_mode_index out of range")
        if not self.snr_grid_db:
            raise ValueError("snr grid is empty")
        if self.n_recordings < 1 or self.n_trials < 1:
            raise ValueError("n_recordings and n_trials must be positive")

    @property
    def target(self) -> ModalMode:
        return self.modes.modes[self.target_mode_index]

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _scenario(name, freqs, zetas_pct, amps):
    return ScenarioConfig(name, ModalSystem.from_arrays(freqs, np.array(zetas_pct) / 100.0, amps))


SCENARIOS = {
    "scenario1": _scenario("scenario1", (3.27, 15.56, 26.50), (1.5, 1.0, 0.8), (1.5, 2.5, 1.0)),
    "scenario2": _scenario("scenario2", (1.15, 6.33, 10.95), (1.5, 1.0, 0.8), (2.8, 1.5, 4.7)),
    "scenario3": _scenario("scenario3", (3.27, 15.56, 26.50), (3.5, 4.0, 3.0), (1.5, 2.5, 1.0)),
}


@dataclass(frozen=True)
class InterferenceConfig:
    """Target mode flanked by two stronger, more damped modes at ``+-delta_f``."""

    target: ModalMode = ModalMode(15.56, 0.01, 1.0)
    interferer_zeta: float = 0.04
    interferer_amp: float = 5.0
    delta_f_grid_hz: tuple[float, ...] = (10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0)
    snr_points_db: tuple[float, ...] = (0.0, 10.0)
    n_recordings: int = 20
    n_trials: int = 50
    rng_seed: int = 0
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    fit_scenario: str = "scenario1"
    fit_mode_index: int = 1
    n_samples: int = DEFAULT_N_SAMPLES
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "delta_f_grid_hz", tuple(float(d) for d in self.delta_f_grid_hz))
        object.__setattr__(self, "snr_points_db", tuple(float(s) for s in self.snr_points_db))
        if not self.delta_f_grid_hz or any(d <= 0 for d in self.delta_f_grid_hz):
            raise ValueError("frequency gaps must be positive")
        if any(d >= self.target.damped_freq_hz for d in self.delta_f_grid_hz):
            raise ValueError("a gap puts the lower interferer at or below 0 Hz")
        if not self.snr_points_db:
            raise ValueError("snr grid is empty")

    def system(self, delta_f_hz: float) -> ModalSystem:
        f = self.target.damped_freq_hz
        side = dict(damping_ratio=self.interferer_zeta, amplitude=self.interferer_amp)
        return ModalSystem((ModalMode(f - delta_f_hz, **side), self.target,
                            ModalMode(f + delta_f_hz, **side)))

    @staticmethod
    def scenario_label(delta_f_hz: float) -> str:
        return f"interference_df{delta_f_hz:g}"


@dataclass(frozen=True)
class BaselineOptions:
    """How the frequency-domain baselines see an ensemble.

    ``*_frf`` picks ``"truncate"`` (drop samples before the impact estimate)
    or ``"impulse"`` (divide by a unit impulse at the impact estimate).
    Methods that only use magnitudes average power across records; the
    complex fits average (LSRF) or stack (pLSCF) complex FRFs.
    """

    pp_frf: str = "truncate"
    sdof_frf: str = "truncate"
    yoshida_frf: str = "impulse"
    lsrf_frf: str = "impulse"
    plscf_frf: str = "impulse"
    lsrf_data: str = "magnitude"
    lsrf_iters: int = 20
    spare_pole_pairs: int = 2
    band_rel: tuple[float, float] = (0.25, 1.5)
    sdof_half_width: int = 3
    peak_rel_window: float = 0.1
    match_rel_window: float = 0.2

    def __post_init__(self):
        for name in ("pp_frf", "sdof_frf", "yoshida_frf", "lsrf_frf", "plscf_frf"):
            if getattr(self, name) not in ("truncate", "impulse"):
                raise ValueError(f"{name} must be 'truncate' or 'impulse'")
        if self.lsrf_data not in ("complex", "magnitude"):
            raise ValueError("lsrf_data must be 'complex' or 'magnitude'")
        lo, hi = self.band_rel
        if not 0 < lo < 1 < hi:
            raise ValueError("band_rel must satisfy 0 < low < 1 < high")


@dataclass(frozen=True)
class TrainingConfig:
    n_records: int = 500
    split: tuple[int, int] = (400, 100)
    zeta_range: tuple[float, float] = (0.001, 0.10)
    amplitude_range: tuple[float, float] = (1.0, 5.0)
    snr_range_db: tuple[float, float] = (10.0, 30.0)
    optimizer: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if sum(self.split) > self.n_records:
            raise ValueError("split exceeds n_records")


FULL_SCALE_TRAINING = TrainingConfig(n_records=8500, split=(7000, 1500))
FULL_SCALE_RECORDINGS = 100


# --------------------------------------------------------------------------
# fit registry
# --------------------------------------------------------------------------

class FitRegistry:
    """``(scenario, mode_index, form) -> theta_opt`` with training metadata."""

    def __init__(self, entries: Mapping | None = None):
        self.entries: dict[tuple[str, int, str], dict] = dict(entries or {})

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        scenario, mode, form = key
        return (scenario, int(mode), KernelForm.parse(form).value) in self.entries

    def add(self, scenario: str, mode_index: int, fit: FitResult, seed: int | None = None):
        entry = {
            "theta_opt": float(fit.theta_opt),
            "train_loss": float(fit.train_loss),
            "val_loss": float(fit.val_loss),
            "theta_bounds": list(fit.theta_bounds) if fit.theta_bounds else None,
            "n_restarts": len(fit.restart_traces),
            "seed": seed,
        }
        self.entries[(scenario, int(mode_index), fit.form.value)] = entry

    def set_theta(self, scenario: str, mode_index: int, form, theta: float):
        self.entries[(scenario, int(mode_index), KernelForm.parse(form).value)] = {
            "theta_opt": float(theta)}

    def theta(self, scenario: str, mode_index: int, form) -> float:
        key = (scenario, int(mode_index), KernelForm.parse(form).value)
        try:
            return self.entries[key]["theta_opt"]
        except KeyError:
            raise MissingFitError(
                f"no fitted theta for {key[2]} on {scenario} mode {mode_index}; "
                "run `envdamp optimize` first") from None

    def kernel(self, scenario: str, mode_index: int, form, center_freq_hz: float) -> KernelSpec:
        return KernelSpec(KernelForm.parse(form), self.theta(scenario, mode_index, form),
                          center_freq_hz)

    def to_dict(self):
        fits = [dict(scenario=s, mode_index=m, form=f, **self.entries[(s, m, f)])
                for s, m, f in sorted(self.entries)]
        return {"registry_version": REGISTRY_VERSION, "fits": fits}

    @classmethod
    def from_dict(cls, data) -> "FitRegistry":
        if data.get("registry_version") != REGISTRY_VERSION:
            raise ValueError(f"unsupported registry_version {data.get('registry_version')!r}")
        entries = {}
        for item in data["fits"]:
            item = dict(item)
            key = (str(item.pop("scenario")), int(item.pop("mode_index")),
                   KernelForm.parse(item.pop("form")).value)
            if not float(item.get("theta_opt", 0)) > 0:
                raise ValueError(f"fit {key} has no positive theta_opt")
            entries[key] = item
        return cls(entries)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "FitRegistry":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def merge(self, other: "FitRegistry") -> "FitRegistry":
        self.entries.update(other.entries)
        return self


def training_spec(scenario: ScenarioConfig, training: TrainingConfig,
                  policy: SegmentPolicy = SegmentPolicy()) -> DatasetSpec:
    """Dataset for fitting kernels on one scenario's mode frequencies.

    The damping range is capped at what the segment policy can represent;
    faster decays leave no room for the requested number of cycles.
    """
    lo, hi = training.zeta_range
    hi = min(hi, policy.max_supported_zeta())
    if not lo < hi:
        raise ValueError("zeta range is empty after capping to the segment policy")
    return DatasetSpec(system_frequencies=scenario.modes.frequencies,
                       zeta_range=(lo, hi), amplitude_range=training.amplitude_range,
                       snr_range_db=training.snr_range_db,
                       n_samples_per_record=scenario.n_samples,
                       sample_rate_hz=scenario.sample_rate_hz,
                       n_records=training.n_records, rng_seed=training.seed)


def train_fits(scenario: ScenarioConfig, forms=None, training: TrainingConfig = TrainingConfig(),
               policy: SegmentPolicy = SegmentPolicy(), mode_indices=None,
               registry: FitRegistry | None = None) -> tuple[FitRegistry, list[FitResult]]:
    """Optimize ``theta`` for each form and mode; returns the registry and raw fits."""
    forms = [KernelForm.parse(f) for f in (forms or ALL_FORMS)]
    modes = [scenario.target_mode_index] if mode_indices is None else list(mode_indices)
    registry = FitRegistry() if registry is None else registry
    dataset = generate_dataset(training_spec(scenario, training, policy))
    train, val = dataset.split(*training.split)
    cfg = replace(training.optimizer, seed=training.seed, split=training.split)
    results = []
    for mode in modes:
        for form in forms:
            t0 = time.perf_counter()
            fit = optimize_theta(form, train, val, cfg, mode, policy=policy)
            logger.info("%s mode %d %s: theta %.5g train %.5g val %.5g (%.1f s)",
                        scenario.name, mode, form.value, fit.theta_opt, fit.train_loss,
                        fit.val_loss, time.perf_counter() - t0)
            registry.add(scenario.name, mode, fit, training.seed)
            results.append(fit)
    return registry, results


# --------------------------------------------------------------------------
# one ensemble, many methods
# --------------------------------------------------------------------------

class ResultRow(NamedTuple):
    scenario: str
    method: str
    snr_db: float
    trial: int
    zeta_hat: float | None
    valid: bool
    wall_ms: float | None = None


class _Ensemble:
    """Observed records of one work item plus lazily built FRFs."""

    def __init__(self, records: Sequence[TimeRecord], impact_kernel: KernelSpec | None):
        self.records = list(records)
        self.impact_kernel = impact_kernel
        self._impacts = None
        self._frfs: dict[str, list[FrfData]] = {}

    @property
    def impacts(self) -> list[int]:
        if self._impacts is None:
            if self.impact_kernel is None:
                raise MissingFitError("baselines need a Gaussian-window fit for the impact time")
            self._impacts = [estimate_impact_index(r, self.impact_kernel) for r in self.records]
        return self._impacts

    def frfs(self, kind: str) -> list[FrfData]:
        if kind not in self._frfs:
            if kind == "truncate":
                out = [one_sided(frf_truncate(r, i, len(r))) for r, i in zip(self.records, self.impacts)]
            else:
                out = [frf_impulse_ratio(r, i) for r, i in zip(self.records, self.impacts)]
            # drop the DC line; every baseline works on w > 0
            self._frfs[kind] = [FrfData(f.freqs_hz[1:], f.values[1:]) for f in out]
        return self._frfs[kind]


def _fit_band(system_freqs, options: BaselineOptions, nyquist: float):
    lo = options.band_rel[0] * min(system_freqs)
    hi = min(options.band_rel[1] * max(system_freqs), 0.95 * nyquist)
    return lo, hi


def _run_baseline(method: str, ens: _Ensemble, target_hz: float, system_freqs,
                  options: BaselineOptions) -> float:
    fs = ens.records[0].sample_rate_hz
    n_pairs = len(system_freqs) + options.spare_pole_pairs
    if method in ("pp", "sdof", "yoshida"):
        frf = average_power(ens.frfs(getattr(options, f"{method}_frf")))
        peak = bl.find_peak(frf, target_hz, options.peak_rel_window)
        if method == "pp":
            return bl.half_power_damping(frf, peak)
        if method == "sdof":
            return bl.sdof_local_fit(frf, peak, bl.SdofFitWindowSpec(options.sdof_half_width))[1]
        return bl.yoshida_three_point(frf, peak)[1]
    band = _fit_band(system_freqs, options, fs / 2)
    if method == "lsrf":
        frfs = ens.frfs(options.lsrf_frf)
        if options.lsrf_data == "magnitude":
            frf = average_power(frfs).band(*band)
        else:
            frf = average_frfs(frfs).band(*band)
        order = 2 * n_pairs
        poles = bl.lsrf_fit(frf, order, order, options.lsrf_iters, options.lsrf_data)
    elif method == "plscf":
        frfs = [f.band(*band) for f in ens.frfs(options.plscf_frf)]
        poles = bl.plscf_fit(frfs, 2 * n_pairs)
    else:
        raise ValueError(f"unknown method {method!r}")
    return bl.match_pole_to_mode(poles, target_hz, options.match_rel_window)[1]


def run_methods(records: Sequence[TimeRecord], methods: Sequence[str], target_hz: float,
                system_freqs, kernels: Mapping[str, KernelSpec],
                impact_kernel: KernelSpec | None, options: BaselineOptions = BaselineOptions(),
                policy: SegmentPolicy = SegmentPolicy(), timing: bool = False):
    """``(method, zeta_or_None, wall_ms_or_None)`` for each method on one ensemble."""
    ens = _Ensemble(records, impact_kernel)
    out = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method in kernels:
                zeta = estimate_from_ensemble(records, EnsembleConfig(kernels[method], policy),
                                              target_hz).zeta
            else:
                zeta = _run_baseline(method, ens, target_hz, system_freqs, options)
            if not (math.isfinite(zeta) and 0 < zeta < 1):
                raise EstimationError(f"estimate {zeta!r} outside (0, 1)")
        except _METHOD_ERRORS as exc:
            logger.debug("%s failed: %s", method, exc)
            zeta = None
        ms = (time.perf_counter() - t0) * 1e3 if timing else None
        out.append((method, zeta, ms))
    return out


def _check_methods(methods):
    methods = list(dict.fromkeys(methods))
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {', '.join(unknown)}")
    if not methods:
        raise ValueError("no methods requested")
    return methods


def _resolve_kernels(methods, fits: FitRegistry, scenario: str, mode_index: int, target_hz: float):
    kernels = {m: fits.kernel(scenario, mode_index, m, target_hz)
               for m in methods if m in ENVELOPE_METHODS}
    impact = None
    if any(m in BASELINE_METHODS for m in methods):
        impact = fits.kernel(scenario, mode_index, KernelForm.GAUSSIAN_WINDOW, target_hz)
    return kernels, impact


# --------------------------------------------------------------------------
# studies
# --------------------------------------------------------------------------

@dataclass
class StudyResult:
    rows: list[ResultRow]
    methods: list[str]
    truth: dict[str, float]

    def summary(self):
        return summarize(self.rows, self.truth, self.methods)


def _method_rank(methods):
    rank = {m: i for i, m in enumerate(methods)}
    return lambda row: (row.scenario, row.snr_db, row.trial, rank.get(row.method, len(rank)),
                        row.method)


def _execute(items, worker, workers: int):
    if workers <= 1:
        return [r for item in items for r in worker(item)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return [r for chunk in pool.map(worker, items) for r in chunk]


def plan_scenario_sweep(cfg: ScenarioConfig, methods) -> dict:
    methods = _check_methods(methods)
    return {
        "study": "sweep",
        "scenario": cfg.name,
        "target_hz": cfg.target.damped_freq_hz,
        "snr_grid_db": [_json_snr(s) for s in cfg.snr_grid_db],
        "n_trials": cfg.n_trials,
        "n_recordings": cfg.n_recordings,
        "methods": methods,
        "n_rows": len(methods) * len(cfg.snr_grid_db) * cfg.n_trials,
    }


def run_scenario_sweep(cfg: ScenarioConfig, methods, fits: FitRegistry, *,
                       options: BaselineOptions = BaselineOptions(),
                       policy: SegmentPolicy = SegmentPolicy(), timing: bool = False,
                       workers: int = 1) -> StudyResult:
    """Every method on fresh ensembles for each SNR and trial.

    Work item ``(snr_index, trial)`` draws its records from the seed
    ``(cfg.rng_seed, snr_index, trial)``.
    """
    methods = _check_methods(methods)
    target = cfg.target
    kernels, impact = _resolve_kernels(methods, fits, cfg.name, cfg.target_mode_index,
                                       target.damped_freq_hz)
    clean = synthesize_response(cfg.modes, cfg.n_samples, cfg.sample_rate_hz)
    freqs = cfg.modes.frequencies

    def work(item):
        si, trial = item
        snr = cfg.snr_grid_db[si]
        records = draw_observations(clean, cfg.observation, snr, cfg.n_recordings,
                                    (cfg.rng_seed, si, trial))
        return [ResultRow(cfg.name, m, snr, trial, z, z is not None, ms)
                for m, z, ms in run_methods(records, methods, target.damped_freq_hz, freqs,
                                            kernels, impact, options, policy, timing)]

    items = [(si, t) for si in range(len(cfg.snr_grid_db)) for t in range(cfg.n_trials)]
    rows = sorted(_execute(items, work, workers), key=_method_rank(methods))
    return StudyResult(rows, methods, {cfg.name: target.damping_ratio})


def run_comparison(cfg: ScenarioConfig, fits: FitRegistry, methods=COMPARE_METHODS,
                   **kwargs) -> StudyResult:
    """Top-tier envelope estimators against the frequency-domain baselines."""
    return run_scenario_sweep(cfg, methods, fits, **kwargs)


def plan_interference_study(cfg: InterferenceConfig, methods) -> dict:
    methods = _check_methods(methods)
    return {
        "study": "interfere",
        "target_hz": cfg.target.damped_freq_hz,
        "delta_f_grid_hz": list(cfg.delta_f_grid_hz),
        "snr_points_db": list(cfg.snr_points_db),
        "n_trials": cfg.n_trials,
        "n_recordings": cfg.n_recordings,
        "methods": methods,
        "n_rows": len(methods) * len(cfg.delta_f_grid_hz) * len(cfg.snr_points_db) * cfg.n_trials,
    }


def run_interference_study(cfg: InterferenceConfig, methods, fits: FitRegistry, *,
                           options: BaselineOptions = BaselineOptions(),
                           policy: SegmentPolicy = SegmentPolicy(), timing: bool = False,
                           workers: int = 1) -> StudyResult:
    """Sweep the gap to two flanking modes; kernels come from ``cfg.fit_scenario``.

    Work item ``(gap_index, snr_index, trial)`` draws from the seed
    ``(cfg.rng_seed, gap_index, snr_index, trial)``.
    """
    methods = _check_methods(methods)
    f = cfg.target.damped_freq_hz
    kernels, impact = _resolve_kernels(methods, fits, cfg.fit_scenario, cfg.fit_mode_index, f)
    systems = [cfg.system(d) for d in cfg.delta_f_grid_hz]
    cleans = [synthesize_response(s, cfg.n_samples, cfg.sample_rate_hz) for s in systems]

    def work(item):
        di, si, trial = item
        snr = cfg.snr_points_db[si]
        label = cfg.scenario_label(cfg.delta_f_grid_hz[di])
        records = draw_observations(cleans[di], cfg.observation, snr, cfg.n_recordings,
                                    (cfg.rng_seed, di, si, trial))
        return [ResultRow(label, m, snr, trial, z, z is not None, ms)
                for m, z, ms in run_methods(records, methods, f, systems[di].frequencies,
                                            kernels, impact, options, policy, timing)]

    items = [(di, si, t) for di in range(len(cfg.delta_f_grid_hz))
             for si in range(len(cfg.snr_points_db)) for t in range(cfg.n_trials)]
    rows = sorted(_execute(items, work, workers), key=_method_rank(methods))
    truth = {cfg.scenario_label(d): cfg.target.damping_ratio for d in cfg.delta_f_grid_hz}
    return StudyResult(rows, methods, truth)


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

def summarize(rows: Sequence[ResultRow], truth, methods=None) -> list[dict]:
    """Per ``(scenario, method, snr)`` statistics over valid rows.

    ``truth`` is a damping ratio or a mapping from scenario to one. RMSE is
    in percentage points of damping ratio. Cells without a single valid row
    are kept with ``absent=True`` and null statistics.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to summarize")
    cells: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        cells.setdefault((row.scenario, row.method, row.snr_db), []).append(row)
    order = {m: i for i, m in enumerate(methods or [])}
    out = []
    for (scenario, method, snr) in sorted(cells, key=lambda k: (k[0], order.get(k[1], len(order)),
                                                                 k[1], k[2])):
        group = cells[(scenario, method, snr)]
        zt = truth[scenario] if isinstance(truth, Mapping) else float(truth)
        z = np.array([r.zeta_hat for r in group if r.valid], dtype=float)
        cell = {"scenario": scenario, "method": method, "snr_db": _json_snr(snr),
                "zeta_true": zt, "n": len(group), "n_valid": int(z.size),
                "valid_fraction": z.size / len(group), "absent": z.size == 0}
        if z.size:
            q1, med, q3 = np.quantile(z, [0.25, 0.5, 0.75])
            cell.update(median=float(med), q1=float(q1), q3=float(q3),
                        min=float(z.min()), max=float(z.max()), mean=float(z.mean()),
                        rmse_percent=float(np.sqrt(np.mean((z - zt) ** 2)) * 100.0))
        else:
            cell.update(median=None, q1=None, q3=None, min=None, max=None, mean=None,
                        rmse_percent=None)
        out.append(cell)
    return out


def _json_snr(snr: float):
    return snr if math.isfinite(snr) else "inf"


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt_snr(snr: float) -> str:
    return "inf" if math.isinf(snr) else repr(float(snr))


def write_results_csv(rows: Sequence[ResultRow], path) -> Path:
    """One row per estimate; ``zeta_hat`` blank when invalid, ``wall_ms`` blank unless timed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow([r.scenario, r.method, _fmt_snr(r.snr_db), r.trial,
                             "" if r.zeta_hat is None else repr(float(r.zeta_hat)),
                             int(bool(r.valid)),
                             "" if r.wall_ms is None else f"{r.wall_ms:.3f}"])
    return path


def read_results_csv(path) -> list[ResultRow]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError("unexpected results header")
        for d in reader:
            rows.append(ResultRow(d["scenario"], d["method"], float(d["snr_db"]), int(d["trial"]),
                                  float(d["zeta_hat"]) if d["zeta_hat"] else None,
                                  d["valid"] == "1",
                                  float(d["wall_ms"]) if d["wall_ms"] else None))
    return rows


def write_summary_json(cells, path, meta: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"summary_version": SUMMARY_VERSION, "meta": dict(meta or {}), "cells": list(cells)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_plot_table(cells, path, value: str = "rmse_percent", row_key: str = "snr_db",
                     methods=None) -> Path:
    """Whitespace-separated table for gnuplot: one line per ``row_key``, one column per method.

    Missing or absent cells print as ``NaN``.
    """
    cells = list(cells)
    methods = list(methods or dict.fromkeys(c["method"] for c in cells))
    table: dict = {}
    for c in cells:
        table.setdefault(c[row_key], {})[c["method"]] = c.get(value)
    keys = sorted(table, key=lambda k: math.inf if k == "inf" else float(k))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("# " + " ".join([row_key] + methods) + "\n")
        for k in keys:
            vals = [table[k].get(m) for m in methods]
            fh.write(" ".join([str(k)] + ["NaN" if v is None else repr(float(v)) for v in vals])
                     + "\n")
    return path


def write_study(result: StudyResult, out_dir, meta: Mapping | None = None) -> dict[str, Path]:
    """``results.csv``, ``summary.json`` and gnuplot tables into ``out_dir``."""
    out_dir = Path(out_dir)
    cells = result.summary()
    paths = {
        "results": write_results_csv(result.rows, out_dir / "results.csv"),
        "summary": write_summary_json(cells, out_dir / "summary.json", meta),
    }
    for scenario in sorted({c["scenario"] for c in cells}):
        sub = [c for c in cells if c["scenario"] == scenario]
        for value in ("rmse_percent", "median"):
            name = f"{scenario}_{value}.dat"
            paths[name] = write_plot_table(sub, out_dir / name, value, methods=result.methods)
    return paths


def interference_table(cells, snr_db: float, value: str = "median") -> dict[str, dict[float, float]]:
    """``method -> {delta_f: value}`` at one SNR from interference summary cells."""
    out: dict[str, dict[float, float]] = {}
    prefix = "interference_df"
    for c in cells:
        if c["snr_db"] != snr_db or not c["scenario"].startswith(prefix):
            continue
        out.setdefault(c["method"], {})[float(c["scenario"][len(prefix):])] = c.get(value)
    return out


def noiseless_fixture(n_records: int = 20, seed: int = 0,
                      mode: ModalMode = ModalMode(15.56, 0.01, 1.0)) -> tuple[list[TimeRecord], ModalMode]:
    """Single-mode ensemble with random gain and delay but no noise."""
    clean = synthesize_response(ModalSystem((mode,)))
    return draw_observations(clean, ObservationConfig(), None, n_records, seed), mode


__all__ = [
    "ALL_METHODS", "BASELINE_METHODS", "BaselineOptions", "COMPARE_METHODS", "ENVELOPE_METHODS",
    "FitRegistry", "InterferenceConfig", "MissingFitError", "OptimizationError", "ResultRow",
    "SCENARIOS", "ScenarioConfig", "StudyResult", "TOP_TIER_METHODS", "TrainingConfig",
    "interference_table", "noiseless_fixture", "plan_interference_study", "plan_scenario_sweep",
    "read_results_csv",
    "run_comparison", "run_interference_study", "run_methods", "run_scenario_sweep",
    "summarize", "train_fits", "training_spec", "write_plot_table", "write_results_csv",
    "write_study", "write_summary_json",
]
