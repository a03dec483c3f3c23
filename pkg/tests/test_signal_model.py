import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envdamp.signal_model import (DatasetSpec, ModalMode, ModalSystem, ObservationConfig,
                                  TimeRecord, apply_observation, draw_observations,
                                  generate_dataset, load_dataset, measured_snr_db,
                                  natural_freq_rad, save_dataset, synthesize_response,
                                  true_envelope)

SCEN1 = ModalSystem.from_arrays([3.27, 15.56, 26.5], [0.015, 0.01, 0.008], [1.5, 2.5, 1.0])


class TestNaturalFrequency:
    def test_target_mode_value(self):
        wn = natural_freq_rad(ModalMode(15.56, 0.01))
        # 30-digit evaluation of 2*pi*15.56/sqrt(1 - 1e-4)
        assert wn == pytest.approx(97.7712520645377686352611592593, rel=1e-14)
        assert wn / (2 * math.pi * 15.56) == pytest.approx(1 + 5.0e-5, rel=1e-8)
        assert wn * math.sqrt(1 - 0.01 ** 2) == pytest.approx(2 * math.pi * 15.56, rel=1e-14)

    def test_light_damping_limit(self):
        assert natural_freq_rad(ModalMode(1.0, 1e-9)) == pytest.approx(2 * math.pi, rel=1e-15)

    def test_exact_root(self):
        assert natural_freq_rad(ModalMode(10.0, 0.6)) == pytest.approx(25 * math.pi, rel=1e-15)

    @pytest.mark.parametrize("zeta", [0.0, 1.0, -0.1])
    def test_rejects_non_underdamped(self, zeta):
        with pytest.raises(ValueError):
            ModalMode(10.0, zeta)


class TestSynthesis:
    def test_starts_at_zero(self):
        assert synthesize_response(SCEN1).samples[0] == 0.0

    def test_matches_direct_sum(self):
        t = np.arange(4096) / 800.0
        direct = sum(m.amplitude * np.exp(-m.decay_rate * t) * np.sin(2 * np.pi * m.damped_freq_hz * t)
                     for m in SCEN1.modes)
        np.testing.assert_allclose(synthesize_response(SCEN1).samples, direct, atol=1e-12)

    def test_spectrum_peaks_at_modes(self):
        x = synthesize_response(SCEN1).samples
        mag = np.abs(np.fft.rfft(x))
        f = np.fft.rfftfreq(x.size, 1 / 800.0)
        local = np.flatnonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] > mag[2:])) + 1
        top = np.sort(f[local[np.argsort(mag[local])[-3:]]])
        np.testing.assert_allclose(top, [3.27, 15.56, 26.5], atol=800 / 4096)

    def test_rejects_above_nyquist(self):
        with pytest.raises(ValueError):
            synthesize_response(ModalSystem((ModalMode(500.0, 0.01),)))

    def test_requires_sorted_modes(self):
        with pytest.raises(ValueError):
            ModalSystem.from_arrays([5.0, 3.0], [0.01, 0.01], [1, 1])


class TestTrueEnvelope:
    def test_dyadic_decay(self):
        zeta = 0.1
        fd = math.log(2) / zeta * math.sqrt(1 - zeta ** 2) / (2 * math.pi)
        env = true_envelope(ModalMode(fd, zeta, 1.0), n=6, fs=1.0).values
        np.testing.assert_allclose(env, 0.5 ** np.arange(6), rtol=1e-12)

    def test_one_second_ratio(self):
        mode = ModalMode(15.56, 0.01, 2.5)
        env = true_envelope(mode, 4096, 800.0).values
        assert env[800] / env[0] == pytest.approx(math.exp(-0.01 * natural_freq_rad(mode)), rel=1e-12)
        assert np.all(np.diff(env) < 0)


class TestObservation:
    def test_identity(self, single_record):
        out = apply_observation(single_record, 1.0, 0.0, None)
        np.testing.assert_array_equal(out.samples, single_record.samples)

    def test_two_second_shift_prefix(self, single_record):
        out = apply_observation(single_record, 2.0, 2.0, None)
        assert not np.any(out.samples[:1600])
        np.testing.assert_array_equal(out.samples[1600:], 2.0 * single_record.samples[:4096 - 1600])

    def test_shift_rounds_half_up(self, single_record):
        out = apply_observation(single_record, 1.0, 2.5 / 800.0, None)
        assert not np.any(out.samples[:3]) and out.samples[4] != 0

    @pytest.mark.parametrize("snr", [-5.0, 0.0, 10.0, 30.0])
    def test_snr_exact(self, single_record, snr):
        clean = apply_observation(single_record, 3.0, 0.7, None).samples
        noisy = apply_observation(single_record, 3.0, 0.7, snr, seed=4).samples
        assert measured_snr_db(clean, noisy) == pytest.approx(snr, abs=1e-9)

    def test_seeded_noise_repeats(self, single_record):
        a = apply_observation(single_record, 1.0, 0.0, 5.0, seed=(1, 2))
        b = apply_observation(single_record, 1.0, 0.0, 5.0, seed=(1, 2))
        np.testing.assert_array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("kwargs", [dict(scale=0.0), dict(shift_s=-1.0), dict(shift_s=6.0)])
    def test_rejects_bad_parameters(self, single_record, kwargs):
        with pytest.raises(ValueError):
            apply_observation(single_record, **{"scale": 1.0, "shift_s": 0.0, **kwargs})

    def test_draws_are_independent_and_bounded(self, single_record):
        recs = draw_observations(single_record, ObservationConfig(), None, 30, seed=9)
        onsets = [int(np.flatnonzero(r.samples)[0]) - 1 for r in recs]
        assert all(0 <= k <= 1600 for k in onsets)
        assert len(set(onsets)) > 20
        peaks = [np.abs(r.samples).max() / np.abs(single_record.samples).max() for r in recs]
        assert all(0.99 < p < 5.01 for p in peaks)

    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(0.1, 10), snr=st.floats(-10, 40), seed=st.integers(0, 2 ** 32))
    def test_snr_property(self, scale, snr, seed):
        rec = synthesize_response(ModalSystem((ModalMode(15.56, 0.01),)), 512, 800.0)
        clean = apply_observation(rec, scale, 0.1, None).samples
        noisy = apply_observation(rec, scale, 0.1, snr, seed).samples
        assert abs(measured_snr_db(clean, noisy) - snr) < 1e-6


class TestDataset:
    spec = DatasetSpec((3.27, 15.56, 26.5), n_records=12, rng_seed=3)

    def test_deterministic(self):
        a, b = generate_dataset(self.spec), generate_dataset(self.spec)
        np.testing.assert_array_equal(a.records, b.records)
        np.testing.assert_array_equal(a.zetas, b.zetas)

    def test_labels_in_range(self):
        ds = generate_dataset(self.spec)
        assert len(ds) == 12
        assert ds.zetas.min() >= 0.001 and ds.zetas.max() <= 0.10
        assert ds.snr_db.min() >= 10 and ds.snr_db.max() <= 30

    def test_record_regenerates_alone(self):
        full = generate_dataset(self.spec)
        first = generate_dataset(DatasetSpec((3.27, 15.56, 26.5), n_records=1, rng_seed=3))
        np.testing.assert_array_equal(full.records[0], first.records[0])

    def test_item_envelopes_match_batch(self):
        ds = generate_dataset(self.spec)
        item = ds[4]
        np.testing.assert_allclose(item.envelopes[1].values, ds.true_envelopes(1)[4], rtol=1e-12)
        assert item.zetas[1] == ds.zetas[4, 1]

    def test_round_trip(self, tmp_path):
        ds = generate_dataset(self.spec)
        npz, manifest = save_dataset(ds, tmp_path / "train.npz")
        assert manifest.exists()
        back = load_dataset(npz)
        np.testing.assert_array_equal(back.records, ds.records)
        assert back.spec == self.spec

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            DatasetSpec((15.56, 3.27))
        with pytest.raises(ValueError):
            DatasetSpec((15.56,), zeta_range=(0.0, 0.1))

    def test_time_record_validation(self):
        with pytest.raises(ValueError):
            TimeRecord(np.zeros(1), 800.0)
        with pytest.raises(ValueError):
            TimeRecord(np.zeros(8), 0.0)
