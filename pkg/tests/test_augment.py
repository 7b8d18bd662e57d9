import numpy as np
import pytest

from conftest import fft_peak_hz
from ssdkit.audio_io import AudioClip
from ssdkit.augment import (
    AugmentationLog,
    AugmentationPolicy,
    MissingGenderError,
    ReplayError,
    add_gaussian_noise,
    apply_policy,
    pitch_shift,
    replay_log,
)
from ssdkit.dataset import SampleRecord


def _record(rid="r0", gender="female"):
    return SampleRecord(id=rid, audio_path="x.wav", speaker_id="s0",
                        t1_label="typical", gender=gender)


class TestNoise:
    def test_sigma_zero_bit_identical(self):
        clip = AudioClip(np.random.default_rng(0).uniform(-1, 1, 1000), 16000)
        out = add_gaussian_noise(clip, 0.0, np.random.default_rng(1))
        assert np.array_equal(out.samples, clip.samples)
        assert out.samples.tobytes() == clip.samples.tobytes()

    def test_silence_std(self):
        clip = AudioClip(np.zeros(16000), 16000)
        out = add_gaussian_noise(clip, 0.05, np.random.default_rng(123))
        assert 0.048 <= out.samples.std() <= 0.052

    def test_same_seed_same_output(self):
        clip = AudioClip(np.zeros(400), 16000)
        a = add_gaussian_noise(clip, 0.1, np.random.default_rng(9))
        b = add_gaussian_noise(clip, 0.1, np.random.default_rng(9))
        assert np.array_equal(a.samples, b.samples)

    def test_clamped_to_unit_range(self):
        clip = AudioClip(np.ones(5000) * 0.99, 16000)
        out = add_gaussian_noise(clip, 0.5, np.random.default_rng(0))
        assert out.samples.max() <= 1.0
        assert out.samples.min() >= -1.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            add_gaussian_noise(AudioClip(np.zeros(4), 16000), -0.1, np.random.default_rng(0))


class TestPitchShift:
    def test_zero_is_identity(self, sine_clip):
        clip = sine_clip()
        out = pitch_shift(clip, 0.0)
        assert np.max(np.abs(out.samples - clip.samples)) <= 1e-6

    def test_octave_up(self, sine_clip):
        out = pitch_shift(sine_clip(440), 12)
        assert abs(fft_peak_hz(out) - 880.0) <= 1.0

    def test_four_semitones(self, sine_clip):
        out = pitch_shift(sine_clip(440), 4)
        assert abs(fft_peak_hz(out) - 440 * 2 ** (4 / 12)) <= 1.0

    def test_downshift(self, sine_clip):
        out = pitch_shift(sine_clip(440), -4)
        assert abs(fft_peak_hz(out) - 440 * 2 ** (-4 / 12)) <= 1.0

    def test_duration_preserved(self, sine_clip):
        clip = sine_clip(seconds=0.73)
        out = pitch_shift(clip, 7)
        assert abs(len(out) - len(clip)) <= 0.01 * len(clip)

    def test_inverse_returns_peak(self, sine_clip):
        clip = sine_clip(440)
        out = pitch_shift(pitch_shift(clip, 5), -5)
        assert abs(fft_peak_hz(out) - 440.0) <= 1.0

    def test_range_limit(self, sine_clip):
        with pytest.raises(ValueError):
            pitch_shift(sine_clip(), 25)

    def test_output_in_unit_range(self, sine_clip):
        out = pitch_shift(sine_clip(amp=0.99), 3)
        assert np.max(np.abs(out.samples)) <= 1.0

    def test_short_clip_survives(self):
        clip = AudioClip(np.random.default_rng(0).uniform(-0.5, 0.5, 200), 16000)
        out = pitch_shift(clip, 4)
        assert len(out) == 200


class TestApplyPolicy:
    def test_noop_policy_identity(self, sine_clip):
        clip = sine_clip()
        out, log = apply_policy(_record(), clip, AugmentationPolicy(), 42)
        assert np.array_equal(out.samples, clip.samples)
        assert not log.anything_applied

    def test_deterministic_given_seed(self, sine_clip):
        clip = sine_clip(seconds=0.3)
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.05,
                                    pitch_prob=1.0, pitch_min_semitones=1,
                                    pitch_max_semitones=4)
        a, log_a = apply_policy(_record(), clip, policy, 7)
        b, log_b = apply_policy(_record(), clip, policy, 7)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert log_a == log_b

    def test_application_rate(self):
        clip = AudioClip(np.zeros(64), 16000)
        policy = AugmentationPolicy(pitch_prob=0.5, pitch_min_semitones=0,
                                    pitch_max_semitones=0)
        applied = 0
        n = 10000
        for i in range(n):
            _, log = apply_policy(_record(rid=f"r{i}"), clip, policy, i)
            applied += log.pitch_applied
        assert 0.48 <= applied / n <= 0.52

    def test_gender_direction_toward_opposite(self, sine_clip):
        clip = sine_clip(seconds=0.2)
        policy = AugmentationPolicy(pitch_prob=1.0, pitch_min_semitones=2,
                                    pitch_max_semitones=4)
        _, log_f = apply_policy(_record(gender="female"), clip, policy, 3)
        _, log_m = apply_policy(_record(gender="male"), clip, policy, 3)
        assert log_f.pitch_semitones < 0
        assert log_m.pitch_semitones > 0

    def test_missing_gender_with_dependent_strategy(self, sine_clip):
        policy = AugmentationPolicy(pitch_prob=0.5, pitch_max_semitones=4)
        with pytest.raises(MissingGenderError):
            apply_policy(_record(gender="unknown"), sine_clip(seconds=0.1), policy, 0)

    def test_random_sign_needs_no_gender(self, sine_clip):
        policy = AugmentationPolicy(pitch_prob=1.0, pitch_max_semitones=2,
                                    gender_strategy="random-sign")
        out, log = apply_policy(_record(gender="unknown"), sine_clip(seconds=0.1), policy, 0)
        assert log.pitch_applied

    def test_stratified_rate_parity(self):
        clip = AudioClip(np.zeros(64), 16000)
        policy = AugmentationPolicy(pitch_prob=0.3, pitch_min_semitones=0,
                                    pitch_max_semitones=0,
                                    gender_strategy="stratified-rate")
        rates = {}
        for gender in ("female", "male"):
            applied = 0
            for i in range(10000):
                _, log = apply_policy(_record(rid=f"{gender}{i}", gender=gender),
                                      clip, policy, hash_free_seed(gender, i))
                applied += log.pitch_applied
            rates[gender] = applied / 10000
        assert abs(rates["female"] - rates["male"]) < 0.02

    def test_noise_stays_in_range(self):
        clip = AudioClip(np.ones(2000) * 0.9, 16000)
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.5)
        out, _ = apply_policy(_record(), clip, policy, 11)
        assert np.max(np.abs(out.samples)) <= 1.0

    def test_execution_order_independence(self, sine_clip):
        # per-record seeds make batch order irrelevant
        clip = sine_clip(seconds=0.2)
        policy = AugmentationPolicy(noise_prob=0.7, noise_max_amplitude=0.05)
        solo, _ = apply_policy(_record("a"), clip, policy, 101)
        _, _ = apply_policy(_record("b"), clip, policy, 202)
        again, _ = apply_policy(_record("a"), clip, policy, 101)
        assert solo.samples.tobytes() == again.samples.tobytes()


def hash_free_seed(gender: str, i: int) -> int:
    from ssdkit.seeding import derive_seed

    return derive_seed("rate-test", gender, i)


class TestReplay:
    def test_replay_reproduces_waveform(self, sine_clip):
        clip = sine_clip(seconds=0.3)
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.08,
                                    pitch_prob=1.0, pitch_min_semitones=1,
                                    pitch_max_semitones=3)
        out, log = apply_policy(_record(), clip, policy, 77)
        replayed = replay_log(clip, policy, log)
        assert out.samples.tobytes() == replayed.samples.tobytes()

    def test_log_json_roundtrip(self, sine_clip):
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.05)
        _, log = apply_policy(_record(), sine_clip(seconds=0.1), policy, 5)
        assert AugmentationLog.from_json_line(log.to_json_line()) == log

    def test_replay_detects_policy_mismatch(self, sine_clip):
        clip = sine_clip(seconds=0.1)
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.05)
        _, log = apply_policy(_record(), clip, policy, 5)
        with pytest.raises(ReplayError):
            replay_log(clip, AugmentationPolicy(), log)

    def test_generator_input_has_no_replay_seed(self, sine_clip):
        clip = sine_clip(seconds=0.1)
        policy = AugmentationPolicy(noise_prob=1.0, noise_max_amplitude=0.05)
        _, log = apply_policy(_record(), clip, policy, np.random.default_rng(0))
        assert log.seed is None
        with pytest.raises(ReplayError):
            replay_log(clip, policy, log)


class TestPolicyValidation:
    def test_bad_probability(self):
        with pytest.raises(ValueError):
            AugmentationPolicy(noise_prob=1.5)

    def test_bad_semitone_order(self):
        with pytest.raises(ValueError):
            AugmentationPolicy(pitch_min_semitones=5, pitch_max_semitones=2)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            AugmentationPolicy(gender_strategy="sideways")
