import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envdamp.envelope import (ALL_FORMS, BLACKMAN_A0, BLACKMAN_A1, BLACKMAN_A2, Envelope,
                              KernelForm, KernelSpec, build_freq_response, check_kernel,
                              circular_time, extract_envelope, half_power_bandwidth_hz,
                              kernel_half_support, normalize_to_segment_start, window_samples)
from envdamp.signal_model import ModalMode, ModalSystem, TimeRecord, synthesize_response

N, FS = 4096, 800.0
BIN_RAD = 2 * math.pi * FS / N

# widths comfortably inside every form's admissible range at 15.56 Hz
WIDTHS = {
    KernelForm.GAUSSIAN_WINDOW: 0.1, KernelForm.RECT_WINDOW: 0.4, KernelForm.TRIANGLE_WINDOW: 0.4,
    KernelForm.WELCH_WINDOW: 0.4, KernelForm.BLACKMAN_WINDOW: 0.6,
    KernelForm.SHANNON_FILTER: 40.0, KernelForm.TRIANGLE_FILTER: 60.0,
    KernelForm.WELCH_FILTER: 50.0, KernelForm.BLACKMAN_FILTER: 80.0,
}


def spec(form, fc=15.56):
    return KernelSpec(form, WIDTHS[form], fc)


class TestForms:
    def test_parse(self):
        assert KernelForm.parse("Gaussian-Window") is KernelForm.GAUSSIAN_WINDOW
        assert KernelForm.parse("BLACKMAN_FILTER") is KernelForm.BLACKMAN_FILTER
        with pytest.raises((KeyError, ValueError)):
            KernelForm.parse("hann")

    def test_units(self):
        assert KernelForm.SHANNON_FILTER.theta_unit == "rad/s"
        assert KernelForm.RECT_WINDOW.theta_unit == "s"
        assert len(ALL_FORMS) == 9

    def test_blackman_coefficients(self):
        assert BLACKMAN_A0 - BLACKMAN_A1 + BLACKMAN_A2 == pytest.approx(128 / 18608, rel=1e-15)

    def test_rect_edge_closed(self):
        np.testing.assert_array_equal(window_samples(KernelForm.RECT_WINDOW, 1.0, [-0.5, 0.5, 0.51]),
                                      [1, 1, 0])

    def test_spec_round_trip(self):
        s = spec(KernelForm.WELCH_FILTER)
        assert KernelSpec.from_dict(s.to_dict()) == s

    def test_spec_rejects_negative_frequency_support(self):
        with pytest.raises(ValueError):
            KernelSpec(KernelForm.SHANNON_FILTER, 4 * math.pi * 16.0, 15.56)


class TestFreqResponse:
    @pytest.mark.parametrize("form", ALL_FORMS)
    def test_one_sided_unit_peak(self, form):
        h = build_freq_response(spec(form), N, FS)
        k = np.arange(N)
        assert not np.any(h[(k == 0) | (k >= N // 2)])
        assert np.max(np.abs(h)) == pytest.approx(1.0, rel=1e-15)

    def test_shannon_three_bins(self):
        h = build_freq_response(KernelSpec(KernelForm.SHANNON_FILTER, 2 * BIN_RAD, 80 * FS / N), N, FS)
        nz = np.flatnonzero(h)
        np.testing.assert_array_equal(nz, [79, 80, 81])
        np.testing.assert_array_equal(h[nz], 1.0)

    def test_triangle_filter_shape(self):
        fc = 80 * FS / N
        h = build_freq_response(KernelSpec(KernelForm.TRIANGLE_FILTER, 20 * BIN_RAD, fc), N, FS).real
        np.testing.assert_allclose(h[70:91], 1 - np.abs(np.arange(-10, 11)) / 10, atol=1e-12)

    def test_blackman_filter_edge(self):
        fc = 80 * FS / N
        h = build_freq_response(KernelSpec(KernelForm.BLACKMAN_FILTER, 20 * BIN_RAD, fc), N, FS).real
        assert h[70] == pytest.approx(128 / 18608, rel=1e-9)
        assert h[90] == pytest.approx(128 / 18608, rel=1e-9)
        assert h[69] == 0 and h[91] == 0

    def test_read_only_cache(self):
        h = build_freq_response(spec(KernelForm.GAUSSIAN_WINDOW), N, FS)
        assert h is build_freq_response(spec(KernelForm.GAUSSIAN_WINDOW), N, FS)
        with pytest.raises(ValueError):
            h[0] = 1

    def test_window_too_wide_in_frequency(self):
        with pytest.raises(ValueError):
            check_kernel(KernelSpec(KernelForm.RECT_WINDOW, 0.02, 15.56), N, FS)

    def test_gaussian_bandwidth(self):
        # |W(f)| = exp(-2 pi^2 s^2 f^2) falls to 1/sqrt(2) at f = sqrt(ln 2)/(2 pi s)
        sigma = 0.2
        want = math.sqrt(math.log(2)) / (math.pi * sigma)
        got = half_power_bandwidth_hz(KernelForm.GAUSSIAN_WINDOW, sigma, 2 ** 16, FS)
        assert got == pytest.approx(want, rel=1e-3)

    def test_circular_time(self):
        np.testing.assert_array_equal(circular_time(4, 1.0), [0, 1, -2, -1])


class TestExtractEnvelope:
    def test_recovers_decay(self, single_record):
        env = extract_envelope(single_record, KernelSpec(KernelForm.GAUSSIAN_WINDOW, 0.1, 15.56)).values
        t = np.arange(N) / FS
        seg = slice(400, 2400)
        slope = np.polyfit(t[seg], np.log(env[seg]), 1)[0]
        wn = 2 * math.pi * 15.56 / math.sqrt(1 - 1e-4)
        assert -slope / wn == pytest.approx(0.01, rel=0.02)

    def test_tone_is_flat(self):
        t = np.arange(N) / FS
        fc = 80 * FS / N
        rec = TimeRecord(np.sin(2 * np.pi * fc * t), FS)
        env = extract_envelope(rec, KernelSpec(KernelForm.SHANNON_FILTER, 10 * BIN_RAD, fc)).values
        inner = env[N // 10: -N // 10]
        assert (inner.max() - inner.min()) / inner.mean() < 0.01

    def test_zero_record(self):
        env = extract_envelope(TimeRecord(np.zeros(N), FS), spec(KernelForm.WELCH_WINDOW))
        assert not np.any(env.values)

    @pytest.mark.parametrize("form", ALL_FORMS)
    def test_scale_equivariance(self, single_record, form):
        a = extract_envelope(single_record, spec(form)).values
        b = extract_envelope(TimeRecord(3.7 * single_record.samples, FS), spec(form)).values
        np.testing.assert_allclose(b, 3.7 * a, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("form", [KernelForm.BLACKMAN_WINDOW, KernelForm.WELCH_FILTER])
    def test_shift_covariance(self, single_record, form):
        k = 321
        a = extract_envelope(single_record, spec(form)).values
        b = extract_envelope(TimeRecord(np.roll(single_record.samples, k), FS), spec(form)).values
        assert np.max(np.abs(b - np.roll(a, k))) < 1e-9

    def test_mode_rejection(self):
        target = ModalMode(15.56, 0.01, 1.0)
        two = ModalSystem((target, ModalMode(22.56, 0.01, 1.0)))
        s = KernelSpec(KernelForm.BLACKMAN_FILTER, 2 * math.pi * 6.0, 15.56)
        a = extract_envelope(synthesize_response(two), s).values
        b = extract_envelope(synthesize_response(ModalSystem((target,))), s).values
        inner = slice(400, 2800)
        assert np.max(np.abs(a[inner] - b[inner]) / b[inner]) < 0.05

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3), k=st.integers(0, N - 1))
    def test_scale_and_shift_property(self, c, k):
        rec = synthesize_response(ModalSystem((ModalMode(15.56, 0.01),)))
        s = spec(KernelForm.GAUSSIAN_WINDOW)
        ref = extract_envelope(rec, s).values
        out = extract_envelope(TimeRecord(c * np.roll(rec.samples, k), FS), s).values
        np.testing.assert_allclose(out, c * np.roll(ref, k), rtol=1e-9, atol=1e-12 * c)


class TestSupportAndNormalization:
    def test_half_support_grows_with_width(self):
        narrow = kernel_half_support(KernelSpec(KernelForm.GAUSSIAN_WINDOW, 0.05, 15.56), N, FS)
        wide = kernel_half_support(KernelSpec(KernelForm.GAUSSIAN_WINDOW, 0.2, 15.56), N, FS)
        assert 0 < narrow < wide

    def test_half_support_of_rect(self):
        # a real rectangle of length L has all its energy within L/2; dropping the
        # negative-frequency residue smears a little of it outside
        s = KernelSpec(KernelForm.RECT_WINDOW, 0.5, 15.56)
        assert 0.95 * 0.25 * FS <= kernel_half_support(s, N, FS, energy=0.999) <= 1.05 * 0.25 * FS

    def test_normalize(self):
        env = Envelope(np.array([4.0, 2.0, 1.0, 0.5]), 1.0, (1, 3))
        out = normalize_to_segment_start(env)
        np.testing.assert_array_equal(out.values, [2, 1, 0.5, 0.25])
        again = normalize_to_segment_start(out)
        np.testing.assert_array_equal(again.values, out.values)
        assert out.values[3] / out.values[1] == env.values[3] / env.values[1]

    def test_normalize_errors(self):
        with pytest.raises(ValueError):
            normalize_to_segment_start(Envelope(np.ones(4), 1.0))
        with pytest.raises(ValueError):
            normalize_to_segment_start(Envelope(np.array([1.0, 0.0, 1.0]), 1.0, (1, 2)))

    def test_envelope_validation(self):
        with pytest.raises(ValueError):
            Envelope(np.array([-1.0, 1.0]), 1.0)
        with pytest.raises(ValueError):
            Envelope(np.ones(4), 1.0, (2, 2))
