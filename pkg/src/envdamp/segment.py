"""Evaluation segment selection and the discrete envelope loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .envelope import Envelope


class SegmentError(ValueError):
    """The envelope cannot host a segment of the requested length."""


@dataclass(frozen=True)
class SegmentPolicy:
    """``floor_fraction`` of the peak marks the segment end; ``cycles`` sets its length.

    ``tail_guard_s`` keeps the segment that far from the end of the envelope,
    where a circular filter mixes the record's onset back in.
    """

    floor_fraction: float = 0.05
    cycles: float = 10.0
    tail_guard_s: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.floor_fraction < 1.0:
            raise ValueError("floor_fraction must lie in (0, 1)")
        if not self.cycles > 0:
            raise ValueError("cycles must be positive")
        if not self.tail_guard_s >= 0:
            raise ValueError("tail_guard_s must be nonnegative")

    def tail_guard(self, fs: float) -> int:
        return int(math.floor(self.tail_guard_s * fs + 0.5))

    def segment_length(self, mode_freq_hz: float, fs: float) -> int:
        return int(math.floor(self.cycles * fs / mode_freq_hz + 0.5))

    def max_supported_zeta(self) -> float:
        """Largest damping ratio whose exact decay still spans ``cycles`` before the floor."""
        r = math.log(1.0 / self.floor_fraction) / (2 * math.pi * self.cycles)
        return r / math.sqrt(1.0 + r * r)


def select_segment(env: Envelope, mode_freq_hz: float,
                   policy: SegmentPolicy = SegmentPolicy()) -> tuple[int, int]:
    """Return ``(N1, N2)``.

    N2 is the last sample at or above ``floor_fraction`` of the peak, looking
    no later than ``policy.tail_guard_s`` before the end of the envelope.
    N1 sits ``cycles`` carrier periods earlier but never before the peak.
    """
    values = env.values
    peak_idx = int(np.argmax(values))
    peak = values[peak_idx]
    if not peak > 0:
        raise SegmentError("envelope has no positive maximum")
    stop = len(values) - 1 - policy.tail_guard(env.sample_rate_hz)
    if stop <= peak_idx:
        raise SegmentError("envelope peaks inside the tail guard")
    n2 = int(_kernels.last_at_least(values, peak_idx, stop, policy.floor_fraction * peak))
    length = policy.segment_length(mode_freq_hz, env.sample_rate_hz)
    n1 = max(n2 - length, peak_idx)
    if n2 - n1 < length or length < 1:
        raise SegmentError(
            f"only {n2 - n1} samples between peak and floor, {length} required")
    return n1, n2


def envelope_mse(estimated: Envelope, truth: Envelope, segment) -> float:
    """Mean squared difference over ``[N1, N2]`` inclusive of two normalized envelopes."""
    n1, n2 = (int(i) for i in segment)
    if len(estimated) != len(truth):
        raise ValueError("envelopes differ in length")
    if not 0 <= n1 < n2 < len(truth):
        raise ValueError(f"segment {segment} out of range")
    for name, env in (("estimated", estimated), ("truth", truth)):
        if abs(env.values[n1] - 1.0) > 1e-12:
            raise ValueError(f"{name} envelope is not normalized at N1")
    return float(_kernels.segment_mse(estimated.values, truth.values, n1, n2))
