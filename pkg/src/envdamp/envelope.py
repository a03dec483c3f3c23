"""The nine envelope estimators as one-sided band-pass frequency responses.

Time windows are modulated to the carrier, placed zero-phase (centred on
sample 0 of the circular buffer) and transformed; frequency filters are laid
directly on the positive-frequency bins around the carrier. In both cases
the negative-frequency half is zeroed, so the filtered record is analytic
and its magnitude is the envelope.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .signal_model import TimeRecord
from .spectral import fast_filter

BLACKMAN_A0 = 7938 / 18608
BLACKMAN_A1 = 9240 / 18608
BLACKMAN_A2 = 1430 / 18608

# closed rect boundary, with room for rounding in the coordinate transform
_RECT_EDGE = 0.5 + 1e-12


class KernelForm(str, enum.Enum):
    GAUSSIAN_WINDOW = "gaussian_window"
    RECT_WINDOW = "rect_window"
    SHANNON_FILTER = "shannon_filter"
    TRIANGLE_FILTER = "triangle_filter"
    TRIANGLE_WINDOW = "triangle_window"
    WELCH_FILTER = "welch_filter"
    WELCH_WINDOW = "welch_window"
    BLACKMAN_FILTER = "blackman_filter"
    BLACKMAN_WINDOW = "blackman_window"

    @property
    def is_filter(self) -> bool:
        return self.value.endswith("_filter")

    @property
    def theta_unit(self) -> str:
        return "rad/s" if self.is_filter else "s"

    @classmethod
    def parse(cls, name) -> "KernelForm":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            return cls[key.upper()]


ALL_FORMS = tuple(KernelForm)


def _shape(form: KernelForm, x):
    """Table shapes on the normalized coordinate ``x = t/L`` or ``omega/L``."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= _RECT_EDGE
    base = form.value.split("_")[0]
    if base in ("rect", "shannon"):
        vals = np.ones_like(x)
    elif base == "triangle":
        vals = 1.0 - np.abs(2.0 * x)
    elif base == "welch":
        vals = 1.0 - (2.0 * x) ** 2
    elif base == "blackman":
        phase = 2.0 * np.pi * (x + 0.5)
        vals = BLACKMAN_A0 - BLACKMAN_A1 * np.cos(phase) + BLACKMAN_A2 * np.cos(2.0 * phase)
    else:
        raise ValueError(f"{form} has no compact-support shape")
    return np.where(inside, np.clip(vals, 0.0, None), 0.0)


def window_samples(form: KernelForm, theta: float, t) -> np.ndarray:
    """Real time window ``w(t)`` for a time-window form."""
    if form.is_filter:
        raise ValueError(f"{form.value} is a frequency filter")
    t = np.asarray(t, dtype=float)
    if form is KernelForm.GAUSSIAN_WINDOW:
        return np.exp(-t ** 2 / (2.0 * theta ** 2))
    return _shape(form, t / theta)


@dataclass(frozen=True)
class KernelSpec:
    """Estimator form, width ``theta`` and carrier frequency.

    ``theta`` is sigma in seconds for the Gaussian window, the window length in
    seconds for the other windows and the pass-band width in rad/s for filters.
    """

    form: KernelForm
    theta: float
    center_freq_hz: float

    def __post_init__(self):
        object.__setattr__(self, "form", KernelForm.parse(self.form))
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.center_freq_hz > 0:
            raise ValueError("center frequency must be positive")
        if self.form.is_filter and self.theta / 2 >= 2 * math.pi * self.center_freq_hz:
            raise ValueError("filter support reaches non-positive frequencies")

    def with_theta(self, theta: float) -> "KernelSpec":
        return replace(self, theta=float(theta))

    def to_dict(self):
        return {"form": self.form.value, "theta": self.theta,
                "center_freq_hz": self.center_freq_hz}

    @classmethod
    def from_dict(cls, data) -> "KernelSpec":
        return cls(KernelForm.parse(data["form"]), float(data["theta"]),
                   float(data["center_freq_hz"]))


@dataclass(frozen=True, eq=False)
class Envelope:
    values: np.ndarray
    sample_rate_hz: float
    segment: tuple[int, int] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("envelope must be 1-D")
        if np.any(v < 0):
            raise ValueError("envelope values must be nonnegative")
        object.__setattr__(self, "values", v)
        if self.segment is not None:
            n1, n2 = (int(i) for i in self.segment)
            if not 0 <= n1 < n2 < v.size:
                raise ValueError(f"segment {self.segment} invalid for length {v.size}")
            object.__setattr__(self, "segment", (n1, n2))

    def __len__(self):
        return self.values.size

    def with_segment(self, segment) -> "Envelope":
        return Envelope(self.values, self.sample_rate_hz, segment)


def circular_time(n: int, fs: float) -> np.ndarray:
    """Sample times of a zero-phase buffer: 0, 1/fs, ... then negative times."""
    k = np.arange(n)
    return np.where(k < (n + 1) // 2, k, k - n) / fs


def _positive_bins(n: int) -> np.ndarray:
    k = np.arange(n)
    return (k >= 1) & (k < (n + 1) // 2)


def half_power_bandwidth_hz(form: KernelForm, theta: float, n: int, fs: float) -> float:
    """Full -3 dB width of a time window's baseband spectrum, bin-interpolated."""
    w = window_samples(form, theta, circular_time(n, fs))
    mag = np.abs(np.fft.fft(w))[: n // 2 + 1]
    if mag[0] == 0:
        return math.inf
    target = mag[0] / math.sqrt(2.0)
    below = np.flatnonzero(mag < target)
    if below.size == 0:
        return math.inf
    k = int(below[0])
    frac = (mag[k - 1] - target) / (mag[k - 1] - mag[k])
    return 2.0 * (k - 1 + frac) * fs / n


def check_kernel(spec: KernelSpec, n: int, fs: float) -> None:
    """Raise ``ValueError`` if the kernel cannot be realized on this grid."""
    fc = spec.center_freq_hz
    if fc >= fs / 2:
        raise ValueError("center frequency at or above Nyquist")
    if spec.form.is_filter:
        half_hz = spec.theta / (4 * math.pi)
        if fc + half_hz >= fs / 2:
            raise ValueError("filter support crosses Nyquist")
        if half_hz * 2 < fs / n * 1e-3:
            raise ValueError("filter narrower than the frequency grid resolves")
    else:
        if spec.theta * fs < 0.5:
            raise ValueError("window shorter than one sample")
        if half_power_bandwidth_hz(spec.form, spec.theta, n, fs) >= fc:
            raise ValueError("window bandwidth too wide for an analytic kernel")


@lru_cache(maxsize=256)
def _freq_response_cached(form: KernelForm, theta: float, fc: float, n: int, fs: float):
    spec = KernelSpec(form, theta, fc)
    check_kernel(spec, n, fs)
    pos = _positive_bins(n)
    if form.is_filter:
        f = np.arange(n) * fs / n
        h = np.zeros(n, dtype=complex)
        h[pos] = _shape(form, 2 * np.pi * (f[pos] - fc) / theta)
    else:
        t = circular_time(n, fs)
        psi = window_samples(form, theta, t) * np.exp(2j * np.pi * fc * t)
        h = np.fft.fft(psi)
        h[~pos] = 0.0
    peak = np.max(np.abs(h))
    if peak == 0:
        raise ValueError("kernel has no support on the positive-frequency bins")
    h /= peak
    h.setflags(write=False)
    return h


def build_freq_response(spec: KernelSpec, n: int, fs: float) -> np.ndarray:
    """One-sided, peak-normalized frequency response of length ``n``.

    The returned array is shared through a cache and is read-only.
    """
    return _freq_response_cached(spec.form, float(spec.theta), float(spec.center_freq_hz),
                                 int(n), float(fs))


def extract_envelope(record: TimeRecord, spec: KernelSpec) -> Envelope:
    h = build_freq_response(spec, len(record), record.sample_rate_hz)
    return Envelope(np.abs(fast_filter(record, h)), record.sample_rate_hz)


def envelopes_from_spectra(spectra: np.ndarray, freq_response: np.ndarray) -> np.ndarray:
    """Envelopes of many records at once from their precomputed DFTs (rows)."""
    return np.abs(np.fft.ifft(spectra * freq_response[None, :], axis=1))


def kernel_half_support(spec: KernelSpec, n: int, fs: float, energy: float = 0.99) -> int:
    """Smallest half-width in samples holding ``energy`` of the kernel's impulse response.

    Envelope samples closer than this to the end of a record mix in the
    record's beginning through the circular convolution.
    """
    if not 0.0 < energy <= 1.0:
        raise ValueError("energy must lie in (0, 1]")
    h = np.abs(np.fft.ifft(build_freq_response(spec, n, fs))) ** 2
    # fold lags +k and -k together; lag 0 counted once
    folded = h[: n // 2 + 1].copy()
    folded[1:(n + 1) // 2] += h[:n // 2:-1][: (n + 1) // 2 - 1]
    cum = np.cumsum(folded)
    return int(np.searchsorted(cum, energy * cum[-1]))


def normalize_to_segment_start(env: Envelope) -> Envelope:
    if env.segment is None:
        raise ValueError("envelope has no evaluation segment")
    n1 = env.segment[0]
    ref = env.values[n1]
    if ref <= 0:
        raise ValueError("envelope is zero at the segment start")
    return Envelope(env.values / ref, env.sample_rate_hz, env.segment)
