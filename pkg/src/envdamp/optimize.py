"""Fit the width parameter of an envelope estimator on labelled records.

The loss for one record is the mean squared difference between the
normalized estimated envelope and the normalized true envelope over the
record's evaluation segment; the dataset loss is the mean over records.
Minimization is a multi-start finite-difference descent in ``log(theta)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .envelope import (Envelope, KernelForm, KernelSpec, build_freq_response,
                       envelopes_from_spectra)
from .segment import SegmentError, SegmentPolicy, select_segment
from .signal_model import SyntheticDataset

logger = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.10
GAUSSIAN_SPAN_SIGMAS = 6.0


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_restarts: int = 15
    step_size: float = 0.01
    max_iters: int = 500
    tol: float = 1e-6
    theta_bounds: tuple[float, float] | None = None
    split: tuple[int, int] = (400, 100)
    n_grid_seeds: int = 8
    n_prescan: int = 40
    selection_tolerance: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ValueError("n_restarts and max_iters must be positive")
        if not self.step_size > 0 or not self.tol > 0:
            raise ValueError("step_size and tol must be positive")
        if self.theta_bounds is not None:
            lo, hi = self.theta_bounds
            if not 0 < lo < hi:
                raise ValueError("theta_bounds must satisfy 0 < min < max")
        if min(self.split) < 1:
            raise ValueError("split counts must be positive")
        if self.n_grid_seeds < 0 or self.n_prescan < 0:
            raise ValueError("n_grid_seeds and n_prescan must be nonnegative")
        if not self.selection_tolerance >= 0:
            raise ValueError("selection_tolerance must be nonnegative")


class RestartTrace(NamedTuple):
    theta_init: float
    theta_final: float
    final_loss: float
    val_loss: float


@dataclass
class FitResult:
    form: KernelForm
    theta_opt: float
    train_loss: float
    val_loss: float
    restart_traces: list[RestartTrace] = field(default_factory=list)
    theta_bounds: tuple[float, float] | None = None
    n_evaluations: int = 0

    def to_dict(self):
        return {
            "form": self.form.value,
            "theta_opt": self.theta_opt,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "theta_bounds": list(self.theta_bounds) if self.theta_bounds else None,
            "n_evaluations": self.n_evaluations,
            "restart_traces": [t._asdict() for t in self.restart_traces],
        }


def default_theta_bounds(form: KernelForm, frequencies, target_mode_index: int,
                         duration_s: float) -> tuple[float, float]:
    """Search range for ``theta``.

    Windows span at least two carrier periods and at most half the record.
    The Gaussian has no edge, so its span is taken as ``6 sigma``. Filters
    run from 5 % of the carrier up to the carrier or twice the gap to the
    nearest other mode, whichever is smaller.
    """
    form = KernelForm.parse(form)
    freqs = np.asarray(frequencies, dtype=float)
    f = float(freqs[target_mode_index])
    if not form.is_filter:
        per_span = GAUSSIAN_SPAN_SIGMAS if form is KernelForm.GAUSSIAN_WINDOW else 1.0
        return 2.0 / f / per_span, 0.5 * duration_s / per_span
    others = np.delete(freqs, target_mode_index)
    gap = float(np.min(np.abs(others - f))) if others.size else math.inf
    return 2 * math.pi * 0.05 * f, 2 * math.pi * min(f, 2.0 * gap)


class DatasetLoss:
    """Mean envelope loss of one form over a dataset, as a function of ``theta``.

    Record spectra, normalized true envelopes and per-record segments are
    computed once; each evaluation costs one batched inverse FFT.
    """

    def __init__(self, form, dataset: SyntheticDataset, target_mode_index: int,
                 policy: SegmentPolicy = SegmentPolicy()):
        self.form = KernelForm.parse(form)
        self.dataset = dataset
        self.center_freq_hz = float(dataset.frequencies[target_mode_index])
        fs = dataset.sample_rate_hz
        truth = dataset.true_envelopes(target_mode_index)
        n1 = np.empty(len(dataset), dtype=np.int64)
        n2 = np.empty(len(dataset), dtype=np.int64)
        keep = np.zeros(len(dataset), dtype=bool)
        for i in range(len(dataset)):
            try:
                n1[i], n2[i] = select_segment(Envelope(truth[i], fs), self.center_freq_hz, policy)
                keep[i] = True
            except SegmentError:
                pass
        self.n_skipped = int((~keep).sum())
        if self.n_skipped > MAX_SKIP_FRACTION * len(dataset):
            raise OptimizationError(
                f"{self.n_skipped} of {len(dataset)} records cannot host an evaluation segment")
        if self.n_skipped:
            logger.info("skipping %d records without a usable segment", self.n_skipped)
        self.index = np.flatnonzero(keep)
        self.n1 = np.ascontiguousarray(n1[keep])
        self.n2 = np.ascontiguousarray(n2[keep])
        self.truth = np.ascontiguousarray(truth[keep])
        self.spectra = np.fft.fft(dataset.records[keep], axis=1)
        self._memo: dict[float, float] = {}
        self.n_evaluations = 0

    def per_record(self, theta: float) -> np.ndarray:
        spec = KernelSpec(self.form, float(theta), self.center_freq_hz)
        h = build_freq_response(spec, self.dataset.n_samples, self.dataset.sample_rate_hz)
        env = envelopes_from_spectra(self.spectra, h)
        return _kernels.batch_normalized_mse(env, self.truth, self.n1, self.n2)

    def __call__(self, theta: float) -> float:
        theta = float(theta)
        if theta not in self._memo:
            self.n_evaluations += 1
            losses = self.per_record(theta)
            # records whose estimate vanishes at N1 get the worst finite loss
            if np.any(~np.isfinite(losses)):
                losses = np.where(np.isfinite(losses), losses, 1.0)
            self._memo[theta] = float(np.mean(losses))
        return self._memo[theta]


def mean_dataset_loss(form, theta: float, dataset: SyntheticDataset, target_mode_index: int,
                      policy: SegmentPolicy = SegmentPolicy()) -> float:
    return DatasetLoss(form, dataset, target_mode_index, policy)(theta)


def descend(loss: Callable[[float], float], theta_init: float, bounds, cfg: TrainConfig):
    """Finite-difference descent on ``u = log(theta)`` inside ``bounds``.

    Each iteration probes ``u +- step_size``; a convex parabola through the
    three points gives a Newton step, otherwise the step follows the secant
    slope with an adaptive length. Flat probes widen the stencil so
    piecewise-constant losses still make progress. Returns
    ``(theta, loss, iterations)``.
    """
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    span = hi - lo
    f = lambda u: loss(math.exp(min(max(u, lo), hi)))  # noqa: E731
    u = min(max(math.log(theta_init), lo), hi)
    fu = f(u)
    trial = 0.1 * span
    it = 0
    for it in range(1, cfg.max_iters + 1):
        h = cfg.step_size
        while True:
            up, um = min(u + h, hi), max(u - h, lo)
            fp, fm = f(up), f(um)
            if fp != fu or fm != fu or h >= span:
                break
            h *= 4.0
        if fp == fu and fm == fu:
            break  # flat over the whole range

        # parabola through (um, fm), (u, fu), (up, fp)
        cand = None
        if up > u > um:
            d1 = (fu - fm) / (u - um)
            d2 = (fp - fu) / (up - u)
            curv = (d2 - d1) / (up - um) * 2.0
            slope = (d1 * (up - u) + d2 * (u - um)) / (up - um)
            if curv > 0:
                cand = u - slope / curv
        else:
            slope = (fp - fm) / (up - um)
        if cand is None:
            cand = u - math.copysign(trial, slope) if slope != 0 else u
        step = max(min(cand - u, 0.5 * span), -0.5 * span)

        best_u, best_f = u, fu
        for probe_u, probe_f in ((up, fp), (um, fm)):
            if probe_f < best_f:
                best_u, best_f = probe_u, probe_f
        for _ in range(8):
            if step == 0:
                break
            cu = min(max(u + step, lo), hi)
            fc = f(cu)
            if fc < best_f:
                best_u, best_f = cu, fc
                break
            step *= 0.5
        if best_u == u:
            break  # local minimum at the stencil scale
        trial = min(max(2.0 * abs(best_u - u), cfg.step_size), 0.5 * span)
        change = fu - best_f
        u, fu_prev, fu = best_u, fu, best_f
        if change <= cfg.tol * abs(fu_prev):
            break
    return math.exp(u), fu, it


def prescan_starts(loss: Callable[[float], float], bounds, n_starts: int,
                   n_points: int) -> list[float]:
    """Pick ``n_starts`` initial widths from a log-spaced scan of ``n_points``.

    Local minima of the scan come first, lowest loss first; remaining slots
    take the lowest of the other scan points. The loss surfaces of the
    windowed forms have many narrow basins, so seeding from the scan finds
    the deep ones far more reliably than evenly spaced starts. With fewer
    scan points than starts, the starts are simply evenly spaced.
    """
    if n_starts < 1:
        return []
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    if n_points <= n_starts:
        if n_starts == 1:
            return [math.exp(0.5 * (lo + hi))]
        return list(np.exp(np.linspace(lo, hi, n_starts)))
    grid = np.exp(np.linspace(lo, hi, n_points))
    vals = np.array([loss(float(g)) for g in grid])
    vals = np.where(np.isfinite(vals), vals, np.inf)
    padded = np.concatenate([[np.inf], vals, [np.inf]])
    is_min = (vals <= padded[:-2]) & (vals <= padded[2:])
    order = np.lexsort((vals, ~is_min))
    return [float(grid[i]) for i in order[:n_starts]]


def select_restart(traces, tolerance: float = math.inf) -> RestartTrace:
    """Lowest validation loss among restarts near the best training loss.

    The default ``tolerance=inf`` is plain validation selection. A finite
    tolerance restricts the choice to restarts within ``(1 + tolerance)`` of
    the best training loss, for small validation sets that might rank a
    clearly worse training minimum first by chance.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no restarts to choose from")
    eligible = traces
    if math.isfinite(tolerance):
        cutoff = min(tr.final_loss for tr in traces) * (1.0 + tolerance)
        eligible = [tr for tr in traces if tr.final_loss <= cutoff]
    return min(eligible, key=lambda tr: (tr.val_loss, tr.final_loss, tr.theta_final))


def optimize_theta(form, train: SyntheticDataset | None, val: SyntheticDataset | None,
                   cfg: TrainConfig = TrainConfig(), target_mode_index: int = 0, *,
                   policy: SegmentPolicy = SegmentPolicy(),
                   train_loss: Callable[[float], float] | None = None,
                   val_loss: Callable[[float], float] | None = None) -> FitResult:
    """Multi-start descent; the restart with the lowest validation loss wins.

    A finite ``cfg.selection_tolerance`` limits the candidates to restarts
    with near-best training loss (see :func:`select_restart`).
    ``cfg.n_grid_seeds`` restarts begin at the best points of a
    ``cfg.n_prescan``-point log scan of the training loss (see
    :func:`prescan_starts`); the rest start log-uniformly at random.

    ``train_loss``/``val_loss`` override the dataset losses (used by tests to
    inject synthetic objectives).
    """
    form = KernelForm.parse(form)
    if train_loss is None:
        if train is None or len(train) == 0:
            raise ValueError("empty training set")
        train_loss = DatasetLoss(form, train, target_mode_index, policy)
    if val_loss is None:
        if val is None or len(val) == 0:
            raise ValueError("empty validation set")
        val_loss = DatasetLoss(form, val, target_mode_index, policy)

    if cfg.theta_bounds is not None:
        bounds = tuple(float(b) for b in cfg.theta_bounds)
    elif train is not None:
        bounds = default_theta_bounds(form, train.frequencies, target_mode_index,
                                      train.n_samples / train.sample_rate_hz)
    else:
        raise ValueError("theta_bounds required without a training set")
    lo, hi = math.log(bounds[0]), math.log(bounds[1])

    starts = prescan_starts(train_loss, bounds, min(cfg.n_grid_seeds, cfg.n_restarts),
                            cfg.n_prescan)
    rng = np.random.default_rng([cfg.seed % 2 ** 64, list(KernelForm).index(form)])
    starts += list(np.exp(rng.uniform(lo, hi, cfg.n_restarts - len(starts))))

    traces = []
    for theta0 in starts:
        try:
            theta, floss, _ = descend(train_loss, float(theta0), bounds, cfg)
            vloss = float(val_loss(theta))
        except (ValueError, FloatingPointError) as exc:
            logger.warning("restart from %.4g failed: %s", theta0, exc)
            continue
        if not (math.isfinite(floss) and math.isfinite(vloss)):
            continue
        traces.append(RestartTrace(float(theta0), float(theta), float(floss), vloss))
    if not traces:
        raise OptimizationError(f"all restarts failed for {form.value}")
    best = select_restart(traces, cfg.selection_tolerance)
    n_evals = getattr(train_loss, "n_evaluations", 0)
    return FitResult(form, best.theta_final, best.final_loss, best.val_loss, traces,
                     bounds, n_evals)
