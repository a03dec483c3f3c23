"""Frequency-domain damping baselines.

Peak picking with the half-power bandwidth, a local SDOF least-squares fit,
the Bertocco-Yoshida three-point fit, LSRF rational fitting and a
single-reference pLSCF (PolyMAX) common-denominator fit.

The SDOF fits rest on the identity

    1/|H(w)|^2 = k * (w^4 + (4 zeta^2 - 2) wn^2 w^2 + wn^4)

for ``H = 1/(wn^2 - w^2 + 2j zeta wn w)``. Fitting ``a w^4 + b w^2 + c`` gives
``wn^2 = sqrt(c/a)`` and ``zeta^2 = (b/(a wn^2) + 2)/4``. The three-point
variant solves this system exactly through the peak bin and its two
neighbours; it is a reconstruction of the Yoshida closed form, which is
cited but not written out in the literature this package follows.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .spectral import FrfData

logger = logging.getLogger(__name__)


class BaselineError(ValueError):
    pass


class DegeneratePeakError(BaselineError):
    """The local fit does not describe an underdamped resonance."""


class NoPoleError(BaselineError):
    pass


@dataclass(frozen=True, eq=False)
class PoleSet:
    """Continuous-time poles in rad/s, stable ones have ``Re < 0``."""

    poles: np.ndarray
    model_order: int

    def __post_init__(self):
        object.__setattr__(self, "poles", np.asarray(self.poles, dtype=complex).ravel())

    def __len__(self):
        return self.poles.size

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.abs(self.poles.imag) / (2 * np.pi)

    @property
    def zetas(self) -> np.ndarray:
        return np.array([pole_zeta(p) for p in self.poles])

    def positive(self) -> np.ndarray:
        return self.poles[self.poles.imag > 0]


@dataclass(frozen=True)
class SdofFitWindowSpec:
    half_width_bins: int = 3

    def __post_init__(self):
        if self.half_width_bins < 1:
            raise ValueError("half_width_bins must be at least 1")


def pole_zeta(pole: complex) -> float:
    return float(-pole.real / abs(pole))


def is_oscillatory(pole: complex) -> bool:
    return pole.imag != 0.0


def _stable_pairs(poles: np.ndarray) -> np.ndarray:
    """Stable poles, completed into conjugate pairs and sorted by frequency."""
    stable = poles[poles.real < 0]
    upper = stable[stable.imag > 0]
    real = stable[stable.imag == 0]
    out = np.concatenate([upper, upper.conj(), real])
    return out[np.lexsort((out.imag, np.abs(out.imag)))]


# --------------------------------------------------------------------------
# peak picking and local SDOF fits
# --------------------------------------------------------------------------

def find_peak(frf: FrfData, target_freq_hz: float, rel_window: float = 0.1) -> int:
    """Index of the largest |H| within ``rel_window`` of ``target_freq_hz``."""
    f = frf.freqs_hz
    idx = np.flatnonzero(np.abs(f - target_freq_hz) <= rel_window * target_freq_hz)
    if idx.size == 0:
        raise BaselineError("no FRF lines near the target frequency")
    return int(idx[np.argmax(np.abs(frf.values[idx]))])


def _crossing(f, mag, k_in, k_out, level):
    """Linear interpolation of the frequency where ``mag`` passes ``level``."""
    m_in, m_out = mag[k_in], mag[k_out]
    return f[k_in] + (level - m_in) / (m_out - m_in) * (f[k_out] - f[k_in])


def half_power_damping(frf: FrfData, peak_index: int) -> float:
    """``zeta = (f_hi - f_lo) / (2 f_r)`` from the -3 dB crossings around the peak."""
    mag = frf.magnitude
    f = frf.freqs_hz
    p = int(peak_index)
    n = mag.size
    if not 0 < p < n - 1 or mag[p] < mag[p - 1] or mag[p] < mag[p + 1]:
        raise BaselineError("peak_index is not a local maximum")
    level = mag[p] / math.sqrt(2.0)
    lo = p
    while lo > 0 and mag[lo] >= level:
        lo -= 1
    hi = p
    while hi < n - 1 and mag[hi] >= level:
        hi += 1
    if mag[lo] >= level or mag[hi] >= level:
        raise BaselineError("half-power crossing outside the FRF range")
    span = mag[lo:hi + 1]
    bumps = np.flatnonzero((span[1:-1] > span[:-2]) & (span[1:-1] > span[2:])) + lo + 1
    if np.any(bumps != p):
        raise BaselineError("peak is not isolated between its half-power points")
    f_lo = _crossing(f, mag, lo + 1, lo, level)
    f_hi = _crossing(f, mag, hi - 1, hi, level)
    return float((f_hi - f_lo) / (2.0 * f[p]))


def _sdof_from_points(omega: np.ndarray, mag: np.ndarray) -> tuple[float, float]:
    # magnitude-squared rational: (peak / |H|)^2 = a x^2 + b x + c with x = (w / w_peak)^2
    if np.any(mag <= 0) or np.any(~np.isfinite(mag)):
        raise DegeneratePeakError("zero or non-finite FRF magnitude in the fit window")
    w0 = omega[np.argmax(mag)]
    x = (omega / w0) ** 2
    y = (mag.max() / mag) ** 2
    design = np.column_stack([x * x, x, np.ones_like(x)])
    if x.size == 3:
        try:
            a, b, c = np.linalg.solve(design, y)
        except np.linalg.LinAlgError as exc:
            raise DegeneratePeakError("singular three-point system") from exc
    else:
        a, b, c = np.linalg.lstsq(design, y, rcond=None)[0]
    if not (a > 0 and c > 0):
        raise DegeneratePeakError("fit is not a resonance (a or c not positive)")
    wn2 = math.sqrt(c / a)
    zeta2 = (b / (a * wn2) + 2.0) / 4.0
    if not 0.0 <= zeta2 < 1.0:
        raise DegeneratePeakError(f"damping radicand {zeta2:.4g} outside [0, 1)")
    wn = w0 * math.sqrt(wn2)
    return wn / (2 * math.pi), math.sqrt(zeta2)


def sdof_local_fit(frf: FrfData, peak_index: int,
                   window: SdofFitWindowSpec = SdofFitWindowSpec()) -> tuple[float, float]:
    """Least-squares SDOF fit of ``1/|H|^2`` on ``peak +- half_width_bins``.

    Returns ``(natural frequency in Hz, zeta)``.
    """
    p, hw = int(peak_index), window.half_width_bins
    if p - hw < 0 or p + hw >= len(frf):
        raise BaselineError("fit window does not fit inside the FRF")
    sl = slice(p - hw, p + hw + 1)
    return _sdof_from_points(frf.omega[sl], frf.magnitude[sl])


def yoshida_three_point(frf: FrfData, peak_index: int) -> tuple[float, float]:
    """Closed-form SDOF fit through the peak bin and its two neighbours.

    This is a magnitude-squared rational reconstruction: the three
    parameters of ``1 / |H|^2`` as a quadratic in ``w^2`` are solved exactly
    from the three magnitudes, so phase is never used.
    """
    p = int(peak_index)
    if p - 1 < 0 or p + 1 >= len(frf):
        raise BaselineError("peak needs a neighbour on each side")
    sl = slice(p - 1, p + 2)
    return _sdof_from_points(frf.omega[sl], frf.magnitude[sl])


# --------------------------------------------------------------------------
# rational fits
# --------------------------------------------------------------------------

def _weighted_lstsq(design: np.ndarray, rhs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    a = design * weights[:, None]
    b = rhs * weights
    scale = np.linalg.norm(a, axis=0)
    scale[scale == 0] = 1.0
    sol, *_ = np.linalg.lstsq(a / scale, b, rcond=None)
    return sol / scale


def lsrf_fit(frf: FrfData, num_order: int, den_order: int, n_iters: int = 20,
             data: str = "complex") -> PoleSet:
    """Rational fit ``N/D`` by Sanathanan-Koerner iterations.

    ``data="complex"`` fits ``H(s)`` with ``s = j w``. ``data="magnitude"``
    fits ``|H|^2`` as a rational function of ``w^2``, whose denominator is
    ``D(jw) D(-jw)``; each of its roots ``x`` maps to the left-half-plane pole
    ``-sqrt(-x)``. The magnitude form ignores FRF phase, so a residual delay
    in the FRF does not bias it. Frequencies are scaled by the top of the
    grid before fitting; every linear solve goes through an orthogonal
    decomposition (``lstsq``).
    """
    if den_order < 1 or num_order < 0:
        raise ValueError("orders must be positive")
    omega = frf.omega
    if np.any(omega <= 0):
        raise ValueError("FRF grid must exclude DC")
    w0 = omega.max()
    n = den_order
    if data == "complex":
        var = 1j * omega / w0
        target = frf.values
    elif data == "magnitude":
        var = (omega / w0) ** 2
        target = np.abs(frf.values) ** 2
    else:
        raise ValueError(f"unknown data mode {data!r}")

    num_pows = np.vander(var, num_order + 1, increasing=True)
    den_pows = np.vander(var, n + 1, increasing=True)
    design = np.hstack([num_pows, -target[:, None] * den_pows[:, :n]])
    rhs = target * den_pows[:, n]
    weights = np.ones(omega.size)
    den = None
    for _ in range(max(n_iters, 1)):
        if data == "complex":
            sol = _weighted_lstsq(np.vstack([design.real, design.imag]),
                                  np.concatenate([rhs.real, rhs.imag]),
                                  np.concatenate([weights, weights]))
        else:
            sol = _weighted_lstsq(design.real, rhs.real, weights)
        den = np.append(sol[num_order + 1:], 1.0)
        d_val = np.abs(den_pows @ den)
        if np.any(d_val == 0) or not np.all(np.isfinite(d_val)):
            raise BaselineError("denominator vanishes on the grid")
        new_weights = 1.0 / d_val
        weights = new_weights / new_weights.max()
    roots = np.roots(den[::-1])
    if data == "complex":
        poles = roots * w0
    else:
        poles = -np.sqrt(-roots.astype(complex)) * w0
    return PoleSet(_stable_pairs(poles), den_order)


def plscf_fit(frfs, model_order: int, sample_interval_s: float | None = None) -> PoleSet:
    """Common-denominator LSCF fit over several FRFs on one grid.

    The basis is ``z^j`` with ``z = exp(j w dt)``; ``dt`` defaults to
    ``1/(2 f_max)`` of the grid. Real coefficients, highest denominator
    coefficient fixed to 1, reduced normal equations summed over outputs.
    """
    frfs = [frfs] if isinstance(frfs, FrfData) else list(frfs)
    if not frfs:
        raise ValueError("no FRFs")
    grid = frfs[0].freqs_hz
    for frf in frfs[1:]:
        if not np.array_equal(frf.freqs_hz, grid):
            raise ValueError("pLSCF needs a common frequency grid")
    p = int(model_order)
    if p < 1:
        raise ValueError("model_order must be positive")
    dt = sample_interval_s if sample_interval_s is not None else 1.0 / (2.0 * grid.max())
    omega = 2 * np.pi * grid
    basis = np.exp(1j * np.outer(omega * dt, np.arange(p + 1)))
    r = (basis.conj().T @ basis).real
    try:
        r_inv = np.linalg.inv(r)
    except np.linalg.LinAlgError as exc:
        raise BaselineError("numerator normal matrix is singular") from exc
    m = np.zeros((p + 1, p + 1))
    for frf in frfs:
        y = -frf.values[:, None] * basis
        s = (basis.conj().T @ y).real
        t = (y.conj().T @ y).real
        m += t - s.T @ r_inv @ s
    sol, _, rank, _ = np.linalg.lstsq(m[:p, :p], -m[:p, p], rcond=None)
    if rank == 0:
        raise BaselineError("reduced normal equations have rank 0")
    if rank < p:
        # an over-sized model on clean data; the minimum-norm solution keeps the true poles
        logger.debug("pLSCF normal equations rank %d < %d", rank, p)
    alpha = np.append(sol, 1.0)
    z = np.roots(alpha[::-1])
    z = z[z != 0]
    poles = np.log(z.astype(complex)) / dt
    pairs = _stable_pairs(poles)
    if pairs.size == 0:
        raise NoPoleError("no stable poles")
    return PoleSet(pairs, p)


def match_pole_to_mode(poles: PoleSet, target_freq_hz: float,
                       rel_window: float = 0.2) -> tuple[complex, float]:
    """Stable positive-frequency pole nearest ``target_freq_hz`` and its zeta.

    Ties go to the lower frequency.
    """
    cand = poles.positive()
    cand = cand[cand.real < 0]
    if cand.size == 0:
        raise NoPoleError("pole set has no stable oscillatory poles")
    freqs = cand.imag / (2 * np.pi)
    dist = np.abs(freqs - target_freq_hz)
    ok = dist <= rel_window * target_freq_hz
    if not np.any(ok):
        raise NoPoleError(f"no pole within {rel_window:.0%} of {target_freq_hz} Hz")
    cand, freqs, dist = cand[ok], freqs[ok], dist[ok]
    # distances equal to rounding count as ties
    near = dist <= dist.min() + 1e-9 * target_freq_hz
    best = np.flatnonzero(near)[np.argmin(freqs[near])]
    pole = complex(cand[best])
    return pole, pole_zeta(pole)
