"""Hot inner loops, each with a numba kernel and a numpy twin.

The public names at the bottom of the module point at whichever backend
``_accel.USE_NUMBA`` selects. Both twins are importable directly so the
benchmark and the equivalence tests can call either one.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def damped_sines_np(amps, decays, omegas, n, fs):
    t = np.arange(n) / fs
    out = np.zeros(n)
    for a, d, w in zip(amps, decays, omegas):
        out += a * np.exp(-d * t) * np.sin(w * t)
    return out


def last_at_least_np(values, start, stop, threshold):
    hits = np.flatnonzero(values[start:stop + 1] >= threshold)
    return int(start + hits[-1]) if hits.size else start - 1


def segment_mse_np(est, truth, n1, n2):
    diff = est[n1:n2 + 1] - truth[n1:n2 + 1]
    return float(np.mean(diff * diff))


def batch_normalized_mse_np(env, truth, n1, n2):
    rows = np.arange(env.shape[0])
    e0 = env[rows, n1]
    t0 = truth[rows, n1]
    out = np.full(env.shape[0], np.nan)
    for i in rows:
        if e0[i] <= 0.0 or t0[i] <= 0.0:
            continue
        d = env[i, n1[i]:n2[i] + 1] / e0[i] - truth[i, n1[i]:n2[i] + 1] / t0[i]
        out[i] = np.mean(d * d)
    return out


def log_line_fit_np(values, fs, n1, n2):
    y = np.log(values[n1:n2 + 1])
    t = np.arange(n1, n2 + 1) / fs
    tm = t.mean()
    ym = y.mean()
    dt = t - tm
    dy = y - ym
    sxx = np.dot(dt, dt)
    slope = np.dot(dt, dy) / sxx
    intercept = ym - slope * tm
    resid = dy - slope * dt
    syy = np.dot(dy, dy)
    r2 = 1.0 - np.dot(resid, resid) / syy if syy > 0.0 else 1.0
    return float(slope), float(intercept), float(r2)


def align_average_np(envs, starts, length):
    stack = np.empty((envs.shape[0], length))
    for j in range(envs.shape[0]):
        stack[j] = envs[j, starts[j]:starts[j] + length]
    return stack.mean(axis=0)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

@njit
def damped_sines_nb(amps, decays, omegas, n, fs):
    out = np.zeros(n)
    for m in range(amps.shape[0]):
        a = amps[m]
        d = decays[m]
        w = omegas[m]
        for k in range(n):
            t = k / fs
            out[k] += a * math.exp(-d * t) * math.sin(w * t)
    return out


@njit
def last_at_least_nb(values, start, stop, threshold):
    for k in range(stop, start - 1, -1):
        if values[k] >= threshold:
            return k
    return start - 1


@njit
def segment_mse_nb(est, truth, n1, n2):
    acc = 0.0
    for k in range(n1, n2 + 1):
        d = est[k] - truth[k]
        acc += d * d
    return acc / (n2 - n1 + 1)


@njit
def batch_normalized_mse_nb(env, truth, n1, n2):
    n_rows = env.shape[0]
    out = np.empty(n_rows)
    for i in range(n_rows):
        a = n1[i]
        b = n2[i]
        e0 = env[i, a]
        t0 = truth[i, a]
        if e0 <= 0.0 or t0 <= 0.0:
            out[i] = np.nan
            continue
        acc = 0.0
        for k in range(a, b + 1):
            d = env[i, k] / e0 - truth[i, k] / t0
            acc += d * d
        out[i] = acc / (b - a + 1)
    return out


@njit
def log_line_fit_nb(values, fs, n1, n2):
    m = n2 - n1 + 1
    tm = 0.0
    ym = 0.0
    for k in range(n1, n2 + 1):
        tm += k / fs
        ym += math.log(values[k])
    tm /= m
    ym /= m
    sxx = 0.0
    sxy = 0.0
    syy = 0.0
    for k in range(n1, n2 + 1):
        dt = k / fs - tm
        dy = math.log(values[k]) - ym
        sxx += dt * dt
        sxy += dt * dy
        syy += dy * dy
    slope = sxy / sxx
    intercept = ym - slope * tm
    sse = 0.0
    for k in range(n1, n2 + 1):
        r = math.log(values[k]) - ym - slope * (k / fs - tm)
        sse += r * r
    r2 = 1.0 - sse / syy if syy > 0.0 else 1.0
    return slope, intercept, r2


@njit
def align_average_nb(envs, starts, length):
    n_env = envs.shape[0]
    out = np.zeros(length)
    for j in range(n_env):
        s = starts[j]
        for k in range(length):
            out[k] += envs[j, s + k]
    for k in range(length):
        out[k] /= n_env
    return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

NUMPY = {
    "damped_sines": damped_sines_np,
    "last_at_least": last_at_least_np,
    "segment_mse": segment_mse_np,
    "batch_normalized_mse": batch_normalized_mse_np,
    "log_line_fit": log_line_fit_np,
    "align_average": align_average_np,
}

NUMBA = {
    "damped_sines": damped_sines_nb,
    "last_at_least": last_at_least_nb,
    "segment_mse": segment_mse_nb,
    "batch_normalized_mse": batch_normalized_mse_nb,
    "log_line_fit": log_line_fit_nb,
    "align_average": align_average_nb,
}

_ACTIVE = NUMBA if USE_NUMBA else NUMPY

damped_sines = _ACTIVE["damped_sines"]
last_at_least = _ACTIVE["last_at_least"]
segment_mse = _ACTIVE["segment_mse"]
batch_normalized_mse = _ACTIVE["batch_normalized_mse"]
log_line_fit = _ACTIVE["log_line_fit"]
align_average = _ACTIVE["align_average"]
