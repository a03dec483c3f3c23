"""Time the numba kernels against their numpy twins.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called once before timing so numba compilation is excluded. Both backends
get identical inputs sized like a desk-scale training batch.
"""
import argparse
import timeit

import numpy as np

from envdamp import _kernels as K
from envdamp.signal_model import DEFAULT_N_SAMPLES, DEFAULT_SAMPLE_RATE_HZ


def _inputs(seed=0):
    rng = np.random.default_rng(seed)
    n, fs = DEFAULT_N_SAMPLES, DEFAULT_SAMPLE_RATE_HZ
    decay = np.exp(-np.arange(n) / fs)
    env = np.abs(rng.standard_normal((400, n))) * 0.05 + decay
    truth = np.tile(decay, (400, 1))
    n1 = rng.integers(100, 600, 400)
    n2 = n1 + 514
    starts = rng.integers(0, 1600, 20)
    return {
        "damped_sines": (np.array([1.5, 2.5, 1.0]), np.array([0.3, 0.98, 1.33]),
                         np.array([20.5, 97.8, 166.5]), n, fs),
        "last_at_least": (decay, 0, n - 401, 0.05),
        "segment_mse": (env[0], truth[0], 300, 814),
        "batch_normalized_mse": (env, truth, n1, n2),
        "log_line_fit": (decay, fs, 300, 814),
        "align_average": (env[:20], starts, n - 1600),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200, help="calls per timing")
    args = parser.parse_args(argv)
    inputs = _inputs()
    print(f"{'kernel':22s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, call_args in inputs.items():
        fast, slow = K.NUMBA[name], K.NUMPY[name]
        np.testing.assert_allclose(fast(*call_args), slow(*call_args), rtol=1e-10, atol=1e-12)
        t_np = timeit.timeit(lambda: slow(*call_args), number=args.repeat) / args.repeat
        t_nb = timeit.timeit(lambda: fast(*call_args), number=args.repeat) / args.repeat
        print(f"{name:22s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
