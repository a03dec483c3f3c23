"""Synthetic modal impulse responses and the observation model.

A measured record is modelled as ``B * x(t - tau0) + noise`` where ``x`` is
a superposition of underdamped modes. Everything here is a pure function of
its inputs; randomness is always keyed by an explicit seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels

DEFAULT_N_SAMPLES = 4096
DEFAULT_SAMPLE_RATE_HZ = 800.0
DATASET_SCHEMA_VERSION = 1


def _check_range(name, rng, lower=None, upper=None, open_bounds=False):
    lo, hi = (float(v) for v in rng)
    if lo > hi:
        raise ValueError(f"{name}: min {lo} exceeds max {hi}")
    if lower is not None and (lo <= lower if open_bounds else lo < lower):
        raise ValueError(f"{name}: lower bound {lo} out of range")
    if upper is not None and (hi >= upper if open_bounds else hi > upper):
        raise ValueError(f"{name}: upper bound {hi} out of range")
    return lo, hi


@dataclass(frozen=True)
class ModalMode:
    """One underdamped mode.

    ``amplitude`` is the product of mode shape entry and modal amplitude, so
    the mode contributes ``amplitude * exp(-zeta*wn*t) * sin(wd*t)``.
    """

    damped_freq_hz: float
    damping_ratio: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.damped_freq_hz > 0:
            raise ValueError("damped_freq_hz must be positive")
        if not 0.0 < self.damping_ratio < 1.0:
            raise ValueError("damping_ratio must lie in (0, 1)")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def natural_freq_rad(self) -> float:
        return natural_freq_rad(self)

    @property
    def decay_rate(self) -> float:
        """zeta * omega_n in 1/s."""
        return self.damping_ratio * natural_freq_rad(self)


@dataclass(frozen=True)
class ModalSystem:
    modes: tuple[ModalMode, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise ValueError("a modal system needs at least one mode")
        freqs = [m.damped_freq_hz for m in modes]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError("damped frequencies must be strictly increasing")

    @classmethod
    def from_arrays(cls, freqs_hz, zetas, amplitudes) -> "ModalSystem":
        return cls(tuple(ModalMode(float(f), float(z), float(a))
                         for f, z, a in zip(freqs_hz, zetas, amplitudes)))

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, i) -> ModalMode:
        return self.modes[i]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.damped_freq_hz for m in self.modes])

    def to_dict(self):
        return {"modes": [asdict(m) for m in self.modes]}

    @classmethod
    def from_dict(cls, data) -> "ModalSystem":
        return cls(tuple(ModalMode(**m) for m in data["modes"]))


@dataclass(frozen=True, eq=False)
class TimeRecord:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a record needs a 1-D array of at least 2 samples")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz


@dataclass(frozen=True)
class ObservationConfig:
    """Bounds for the unknown gain, impact delay and noise level."""

    scale_range: tuple[float, float] = (1.0, 5.0)
    shift_range_s: tuple[float, float] = (0.0, 2.0)
    snr_range_db: tuple[float, float] = (-5.0, 30.0)

    def __post_init__(self):
        _check_range("scale_range", self.scale_range, lower=0.0, open_bounds=True)
        _check_range("shift_range_s", self.shift_range_s, lower=0.0)
        _check_range("snr_range_db", self.snr_range_db)

    def validate_for(self, duration_s: float):
        if self.shift_range_s[1] >= duration_s:
            raise ValueError("maximum shift must be shorter than the record")


@dataclass(frozen=True)
class DatasetSpec:
    system_frequencies: tuple[float, ...]
    zeta_range: tuple[float, float] = (0.001, 0.10)
    amplitude_range: tuple[float, float] = (1.0, 5.0)
    snr_range_db: tuple[float, float] = (10.0, 30.0)
    n_samples_per_record: int = DEFAULT_N_SAMPLES
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    n_records: int = 500
    rng_seed: int = 0

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.system_frequencies)
        object.__setattr__(self, "system_frequencies", freqs)
        if not freqs or any(b <= a for a, b in zip(freqs, freqs[1:])) or freqs[0] <= 0:
            raise ValueError("system_frequencies must be positive and strictly increasing")
        if freqs[-1] >= self.sample_rate_hz / 2:
            raise ValueError("system frequencies must stay below Nyquist")
        _check_range("zeta_range", self.zeta_range, lower=0.0, upper=1.0, open_bounds=True)
        _check_range("amplitude_range", self.amplitude_range, lower=0.0, open_bounds=True)
        _check_range("snr_range_db", self.snr_range_db)
        if self.n_samples_per_record < 2 or self.n_records < 1:
            raise ValueError("record length and count must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "DatasetSpec":
        data = dict(data)
        for key in ("system_frequencies", "zeta_range", "amplitude_range", "snr_range_db"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def natural_freq_rad(mode: ModalMode) -> float:
    """Undamped natural frequency in rad/s from the damped frequency."""
    return 2.0 * math.pi * mode.damped_freq_hz / math.sqrt(1.0 - mode.damping_ratio ** 2)


def synthesize_response(system: ModalSystem, n: int = DEFAULT_N_SAMPLES,
                        fs: float = DEFAULT_SAMPLE_RATE_HZ) -> TimeRecord:
    """Noise-free impulse response, sample 0 at the impact instant."""
    if any(m.damped_freq_hz >= fs / 2 for m in system.modes):
        raise ValueError("modal frequencies must lie below Nyquist")
    amps = np.array([m.amplitude for m in system.modes], dtype=float)
    decays = np.array([m.decay_rate for m in system.modes], dtype=float)
    omegas = np.array([2 * math.pi * m.damped_freq_hz for m in system.modes], dtype=float)
    samples = _kernels.damped_sines(amps, decays, omegas, int(n), float(fs))
    return TimeRecord(samples, fs)


def true_envelope(mode: ModalMode, n: int = DEFAULT_N_SAMPLES,
                  fs: float = DEFAULT_SAMPLE_RATE_HZ):
    from .envelope import Envelope
    t = np.arange(n) / fs
    return Envelope(mode.amplitude * np.exp(-mode.decay_rate * t), fs)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng([int(s) % 2 ** 64 for s in seed])
    return np.random.default_rng(int(seed) % 2 ** 64)


def apply_observation(record: TimeRecord, scale: float = 1.0, shift_s: float = 0.0,
                      snr_db: float | None = None, seed=0) -> TimeRecord:
    """Delay, scale and corrupt a clean record.

    The delay is rounded to whole samples, zeros fill the front and the tail is
    cut. ``snr_db=None`` (or ``inf``) skips the noise. The noise vector is
    rescaled so its mean square hits the requested SNR exactly, with signal
    power taken over the whole shifted and scaled record.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    if shift_s < 0:
        raise ValueError("shift must be nonnegative")
    n = len(record)
    k = int(math.floor(shift_s * record.sample_rate_hz + 0.5))
    if k >= n:
        raise ValueError("shift exceeds the record length")
    shifted = np.zeros(n)
    shifted[k:] = record.samples[:n - k]
    shifted *= scale
    if snr_db is None or math.isinf(snr_db):
        return TimeRecord(shifted, record.sample_rate_hz)
    p_signal = float(np.mean(shifted ** 2))
    if p_signal == 0.0:
        raise ValueError("cannot set an SNR on an all-zero record")
    noise = _rng(seed).standard_normal(n)
    noise *= math.sqrt(p_signal / 10.0 ** (snr_db / 10.0) / np.mean(noise ** 2))
    return TimeRecord(shifted + noise, record.sample_rate_hz)


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    resid = np.asarray(noisy) - np.asarray(clean)
    return 10.0 * math.log10(np.mean(np.asarray(clean) ** 2) / np.mean(resid ** 2))


def draw_observations(clean: TimeRecord, config: ObservationConfig, snr_db: float | None,
                      count: int, seed) -> list[TimeRecord]:
    """Independent observed copies of ``clean`` with fresh gain, delay and noise."""
    config.validate_for(clean.duration_s)
    root = np.random.SeedSequence([int(s) % 2 ** 64 for s in np.atleast_1d(seed)])
    out = []
    for child in root.spawn(count):
        rng = np.random.default_rng(child)
        scale = rng.uniform(*config.scale_range)
        shift = rng.uniform(*config.shift_range_s)
        out.append(apply_observation(clean, scale, shift, snr_db, rng))
    return out


class DatasetItem(NamedTuple):
    record: TimeRecord
    envelopes: list
    zetas: list


@dataclass(eq=False)
class SyntheticDataset:
    """Labelled training records stored as dense arrays.

    Indexing yields :class:`DatasetItem` tuples; the array attributes are what
    the optimizer works on.
    """

    records: np.ndarray        # (n_records, n_samples)
    zetas: np.ndarray          # (n_records, n_modes)
    amplitudes: np.ndarray     # (n_records, n_modes)
    snr_db: np.ndarray         # (n_records,)
    frequencies: np.ndarray    # (n_modes,)
    sample_rate_hz: float
    spec: DatasetSpec | None = None
    _env_cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.records.shape[0]

    def __getitem__(self, i) -> DatasetItem:
        if isinstance(i, slice):
            raise TypeError("use subset() for slicing")
        record = TimeRecord(self.records[i], self.sample_rate_hz)
        system = self.system(i)
        n = self.records.shape[1]
        envs = [true_envelope(m, n, self.sample_rate_hz) for m in system.modes]
        return DatasetItem(record, envs, [m.damping_ratio for m in system.modes])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def n_samples(self) -> int:
        return self.records.shape[1]

    def system(self, i) -> ModalSystem:
        return ModalSystem.from_arrays(self.frequencies, self.zetas[i], self.amplitudes[i])

    def true_envelopes(self, mode_index: int) -> np.ndarray:
        """Ground-truth envelopes of one mode for every record, shape (n_records, n)."""
        if mode_index not in self._env_cache:
            f = self.frequencies[mode_index]
            z = self.zetas[:, mode_index]
            wn = 2 * np.pi * f / np.sqrt(1.0 - z ** 2)
            t = np.arange(self.n_samples) / self.sample_rate_hz
            env = self.amplitudes[:, mode_index, None] * np.exp(-(z * wn)[:, None] * t[None, :])
            self._env_cache[mode_index] = env
        return self._env_cache[mode_index]

    def subset(self, index) -> "SyntheticDataset":
        index = np.asarray(index)
        return SyntheticDataset(self.records[index], self.zetas[index], self.amplitudes[index],
                                self.snr_db[index], self.frequencies, self.sample_rate_hz,
                                self.spec)

    def split(self, n_train: int, n_val: int):
        if n_train + n_val > len(self):
            raise ValueError("split larger than the dataset")
        return (self.subset(np.arange(n_train)),
                self.subset(np.arange(n_train, n_train + n_val)))


def generate_dataset(spec: DatasetSpec) -> SyntheticDataset:
    """Draw ``spec.n_records`` labelled records.

    Record ``i`` uses a generator keyed by ``(rng_seed, i)``, so any record can
    be regenerated on its own and the draw order never matters.
    """
    n, fs = spec.n_samples_per_record, spec.sample_rate_hz
    freqs = np.array(spec.system_frequencies)
    n_modes = freqs.size
    records = np.empty((spec.n_records, n))
    zetas = np.empty((spec.n_records, n_modes))
    amps = np.empty((spec.n_records, n_modes))
    snrs = np.empty(spec.n_records)
    for i in range(spec.n_records):
        rng = _rng((spec.rng_seed, i))
        zetas[i] = rng.uniform(*spec.zeta_range, size=n_modes)
        amps[i] = rng.uniform(*spec.amplitude_range, size=n_modes)
        snrs[i] = rng.uniform(*spec.snr_range_db)
        clean = synthesize_response(ModalSystem.from_arrays(freqs, zetas[i], amps[i]), n, fs)
        records[i] = apply_observation(clean, 1.0, 0.0, snrs[i], rng).samples
    return SyntheticDataset(records, zetas, amps, snrs, freqs, fs, spec)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def save_dataset(dataset: SyntheticDataset, path) -> tuple[Path, Path]:
    """Write ``<path>.npz`` plus a ``<path>.manifest.json`` sidecar.

    npz arrays: ``records`` (R, N) float64, ``zetas`` (R, M), ``amplitudes``
    (R, M), ``snr_db`` (R,), ``frequencies_hz`` (M,), ``sample_rate_hz`` scalar,
    ``schema_version`` scalar.
    """
    path = Path(path)
    base = path.with_suffix("") if path.suffix == ".npz" else path
    npz = base.with_suffix(".npz")
    manifest = base.with_name(base.name + ".manifest.json")
    npz.parent.mkdir(parents=True, exist_ok=True)
    np.savez(npz, records=dataset.records, zetas=dataset.zetas,
             amplitudes=dataset.amplitudes, snr_db=dataset.snr_db,
             frequencies_hz=dataset.frequencies,
             sample_rate_hz=np.float64(dataset.sample_rate_hz),
             schema_version=np.int64(DATASET_SCHEMA_VERSION))
    meta = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "data_file": npz.name,
        "n_records": len(dataset),
        "n_samples": dataset.n_samples,
        "spec": dataset.spec.to_dict() if dataset.spec else None,
    }
    manifest.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return npz, manifest


def load_dataset(path) -> SyntheticDataset:
    path = Path(path)
    with np.load(path if path.suffix == ".npz" else path.with_suffix(".npz")) as data:
        if int(data["schema_version"]) != DATASET_SCHEMA_VERSION:
            raise ValueError("unsupported dataset schema version")
        ds = SyntheticDataset(data["records"], data["zetas"], data["amplitudes"],
                              data["snr_db"], data["frequencies_hz"],
                              float(data["sample_rate_hz"]))
    manifest = path.with_suffix("").with_name(path.with_suffix("").name + ".manifest.json")
    if manifest.exists():
        spec = json.loads(manifest.read_text()).get("spec")
        if spec:
            ds.spec = DatasetSpec.from_dict(spec)
    return ds


def records_from_arrays(samples: Sequence[np.ndarray], fs: float) -> list[TimeRecord]:
    return [TimeRecord(s, fs) for s in samples]
