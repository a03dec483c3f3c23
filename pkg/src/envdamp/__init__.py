"""Damping-ratio estimation from ensembles of free-decay records.

The estimator band-passes each record around a modal frequency with a
one-sided analytic kernel, aligns and averages the resulting envelopes and
fits a line to the log of the decaying part. Kernel widths are tuned on
labelled synthetic data.
"""
__version__ = "0.1.0"

from .damping import DampingEstimate, EnsembleConfig, EstimationError, estimate_from_ensemble
from .envelope import ALL_FORMS, Envelope, KernelForm, KernelSpec, extract_envelope
from .optimize import FitResult, TrainConfig, optimize_theta
from .segment import SegmentError, SegmentPolicy, select_segment
from .signal_model import (DatasetSpec, ModalMode, ModalSystem, ObservationConfig, TimeRecord,
                           generate_dataset, synthesize_response)

__all__ = [
    "ALL_FORMS", "DampingEstimate", "DatasetSpec", "EnsembleConfig", "Envelope",
    "EstimationError", "FitResult", "KernelForm", "KernelSpec", "ModalMode", "ModalSystem",
    "ObservationConfig", "SegmentError", "SegmentPolicy", "TimeRecord", "TrainConfig",
    "estimate_from_ensemble", "extract_envelope", "generate_dataset", "optimize_theta",
    "select_segment", "synthesize_response", "__version__",
]
