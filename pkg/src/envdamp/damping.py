"""Damping ratio from one or many observed records via envelope regression."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .envelope import (Envelope, KernelForm, KernelSpec, extract_envelope,
                       kernel_half_support, normalize_to_segment_start)
from .segment import SegmentPolicy, select_segment
from .signal_model import TimeRecord


class EstimationError(ValueError):
    pass


class NonDecayingError(EstimationError):
    """Log-envelope slope is not negative."""


@dataclass(frozen=True)
class EnsembleConfig:
    kernel: KernelSpec
    segment_policy: SegmentPolicy = field(default_factory=SegmentPolicy)
    n_records: int = 20
    guard_energy: float = 0.999
    max_guard_fraction: float = 0.125

    def __post_init__(self):
        if self.n_records < 1:
            raise ValueError("n_records must be at least 1")


@dataclass(frozen=True)
class DampingEstimate:
    zeta: float
    slope: float
    intercept: float
    segment: tuple[int, int]
    r_squared: float


def zeta_from_slope(slope: float, damped_freq_hz: float) -> float:
    """Invert ``slope = -zeta*omega_n`` with ``omega_n = omega_d/sqrt(1 - zeta^2)``."""
    r = -slope / (2 * math.pi * damped_freq_hz)
    return r / math.sqrt(1.0 + r * r)


def estimate_impact_index(record: TimeRecord, reference_kernel: KernelSpec) -> int:
    """Sample where the Gaussian-window envelope peaks."""
    if reference_kernel.form is not KernelForm.GAUSSIAN_WINDOW:
        raise ValueError("impact time is referenced to the Gaussian window")
    if not np.any(record.samples):
        raise EstimationError("record is all zeros")
    return int(np.argmax(extract_envelope(record, reference_kernel).values))


def align_and_average(envelopes, tail_guard: int = 0) -> Envelope:
    """Align envelopes at their maxima and average them over the common span.

    Every envelope is shifted so its peak lands on the earliest peak index of
    the set; the output is as long as the region all shifted envelopes cover.
    The last ``tail_guard`` samples of each envelope are treated as invalid.
    """
    envelopes = list(envelopes)
    if not envelopes:
        raise ValueError("no envelopes to average")
    fs = envelopes[0].sample_rate_hz
    n = len(envelopes[0])
    if any(e.sample_rate_hz != fs or len(e) != n for e in envelopes):
        raise ValueError("envelopes must share sample rate and length")
    stack = np.stack([e.values for e in envelopes])
    peaks = np.argmax(stack, axis=1)
    starts = (peaks - peaks.min()).astype(np.int64)
    if tail_guard < 0:
        raise ValueError("tail_guard must be nonnegative")
    length = int(n - tail_guard - starts.max())
    if length < 2:
        raise EstimationError("envelopes share fewer than 2 aligned samples")
    return Envelope(_kernels.align_average(stack, starts, length), fs)


def fit_damping(env: Envelope, mode_freq_hz: float,
                policy: SegmentPolicy = SegmentPolicy()) -> DampingEstimate:
    """Least-squares line through the log-envelope on its segment.

    Uses ``env.segment`` when set, otherwise selects one with ``policy``.
    """
    n1, n2 = env.segment if env.segment is not None else select_segment(env, mode_freq_hz, policy)
    seg = env.values[n1:n2 + 1]
    if np.any(seg <= 0):
        raise EstimationError("envelope not positive over the segment")
    slope, intercept, r2 = _kernels.log_line_fit(env.values, float(env.sample_rate_hz),
                                                 int(n1), int(n2))
    if not slope < 0:
        raise NonDecayingError(f"log-envelope slope {slope:.4g} is not negative")
    return DampingEstimate(zeta_from_slope(slope, mode_freq_hz), float(slope),
                           float(intercept), (int(n1), int(n2)), float(min(max(r2, 0.0), 1.0)))


def estimate_from_ensemble(records, cfg: EnsembleConfig, mode_freq_hz: float) -> DampingEstimate:
    """Extract, align, average, segment, normalize and regress."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    envs = [extract_envelope(r, cfg.kernel) for r in records]
    n = len(records[0])
    guard = min(kernel_half_support(cfg.kernel, n, records[0].sample_rate_hz, cfg.guard_energy),
                int(cfg.max_guard_fraction * n))
    mean_env = align_and_average(envs, tail_guard=guard)
    segment = select_segment(mean_env, mode_freq_hz, cfg.segment_policy)
    normalized = normalize_to_segment_start(mean_env.with_segment(segment))
    return fit_damping(normalized, mode_freq_hz, cfg.segment_policy)
