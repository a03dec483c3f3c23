"""DFT helpers, spectral-multiplication filtering and FRF construction.

Normalization follows numpy: unnormalized forward transform, ``1/N`` on the
inverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import TimeRecord


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    bins: np.ndarray
    bin_spacing_hz: float

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=complex)
        if bins.ndim != 1 or bins.size < 2:
            raise ValueError("a spectrum needs at least 2 bins")
        if not self.bin_spacing_hz > 0:
            raise ValueError("bin spacing must be positive")
        object.__setattr__(self, "bins", bins)

    def __len__(self):
        return self.bins.size

    @property
    def sample_rate_hz(self) -> float:
        return self.bin_spacing_hz * self.bins.size

    @property
    def freqs_hz(self) -> np.ndarray:
        return np.fft.fftfreq(self.bins.size, 1.0 / self.sample_rate_hz)


@dataclass(frozen=True, eq=False)
class FrfData:
    freqs_hz: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs_hz, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValueError("frequency and value arrays must be 1-D and equally long")
        if f.size >= 2 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.freqs_hz.size

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * self.freqs_hz

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def band(self, f_lo: float, f_hi: float) -> "FrfData":
        keep = (self.freqs_hz >= f_lo) & (self.freqs_hz <= f_hi)
        if keep.sum() < 2:
            raise ValueError(f"band [{f_lo}, {f_hi}] Hz holds fewer than 2 lines")
        return FrfData(self.freqs_hz[keep], self.values[keep])

    def scaled(self, factor: complex) -> "FrfData":
        return FrfData(self.freqs_hz, self.values * factor)


def forward_transform(record: TimeRecord) -> ComplexSpectrum:
    n = len(record)
    return ComplexSpectrum(np.fft.fft(record.samples), record.sample_rate_hz / n)


def inverse_transform(spectrum: ComplexSpectrum) -> np.ndarray:
    return np.fft.ifft(spectrum.bins)


def fast_filter(record: TimeRecord, freq_response) -> np.ndarray:
    """Circular convolution of ``record`` with the kernel whose DFT is ``freq_response``."""
    h = np.asarray(freq_response)
    if h.shape != (len(record),):
        raise ValueError(f"frequency response has {h.size} bins, record has {len(record)} samples")
    return np.fft.ifft(np.fft.fft(record.samples) * h)


def one_sided(spectrum: ComplexSpectrum) -> FrfData:
    """Bins 0..N//2 of a full spectrum as an FRF grid."""
    m = len(spectrum) // 2 + 1
    freqs = np.arange(m) * spectrum.bin_spacing_hz
    return FrfData(freqs, spectrum.bins[:m])


def frf_truncate(record: TimeRecord, impact_index: int, n_fft: int | None = None) -> ComplexSpectrum:
    """DFT of the record from ``impact_index`` on.

    ``n_fft`` zero-pads the remainder to a fixed analysis length so grids stay
    comparable across impact times.
    """
    n = len(record)
    if not 0 <= impact_index < n - 1:
        raise ValueError(f"impact index {impact_index} leaves fewer than 2 samples")
    tail = record.samples[impact_index:]
    n_fft = tail.size if n_fft is None else int(n_fft)
    if n_fft < tail.size:
        raise ValueError("analysis length shorter than the truncated record")
    return ComplexSpectrum(np.fft.fft(tail, n_fft), record.sample_rate_hz / n_fft)


def frf_impulse_ratio(record: TimeRecord, impact_index: int) -> FrfData:
    """One-sided FRF against a unit impulse placed at ``impact_index``.

    The impulse spectrum has unit modulus, so this only removes the linear
    phase of the delay.
    """
    n = len(record)
    if not 0 <= impact_index < n - 1:
        raise ValueError(f"impact index {impact_index} out of range")
    spec = np.fft.fft(record.samples)
    m = n // 2 + 1
    k = np.arange(m)
    impulse = np.exp(-2j * np.pi * k * impact_index / n)
    freqs = k * record.sample_rate_hz / n
    return FrfData(freqs, spec[:m] / impulse)


def average_frfs(frfs) -> FrfData:
    """Complex mean of FRFs that share a grid."""
    frfs = list(frfs)
    if not frfs:
        raise ValueError("nothing to average")
    grid = frfs[0].freqs_hz
    for f in frfs[1:]:
        if f.freqs_hz.shape != grid.shape or not np.array_equal(f.freqs_hz, grid):
            raise ValueError("FRFs must share a frequency grid")
    return FrfData(grid, np.mean([f.values for f in frfs], axis=0))


def average_power(frfs) -> FrfData:
    """Root-mean-square magnitude of FRFs that share a grid.

    Phase is discarded, so jitter in the impact estimate between records
    does not cancel the average the way it does in :func:`average_frfs`.
    """
    frfs = list(frfs)
    mean = average_frfs(FrfData(f.freqs_hz, np.abs(f.values) ** 2) for f in frfs)
    return FrfData(mean.freqs_hz, np.sqrt(mean.values.real))
