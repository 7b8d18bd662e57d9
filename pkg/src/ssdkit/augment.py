"""Waveform augmentation: Gaussian noise and pitch shifting under a
probabilistic, seed-deterministic policy.

Pitch shifting is a phase-vocoder time stretch followed by polyphase
resampling, so duration is preserved while spectral content scales by
2^(semitones/12). Noise draws a per-call sigma uniformly from
[0, noise_max_amplitude] and clamps the sum to [-1, 1].

All randomness flows through one generator per call in a fixed draw
order (pitch gate, magnitude, sign, noise gate, sigma, noise vector), so
a logged seed replays the exact waveform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from fractions import Fraction

import numpy as np

from .audio_io import AudioClip

GENDER_STRATEGIES = ("toward-opposite", "random-sign", "stratified-rate")


class MissingGenderError(ValueError):
    """Gender-dependent pitch strategy applied to a record without gender."""


@dataclass(frozen=True)
class AugmentationPolicy:
    noise_prob: float = 0.0
    noise_max_amplitude: float = 0.0
    pitch_prob: float = 0.0
    pitch_min_semitones: int = 0
    pitch_max_semitones: int = 0
    gender_strategy: str = "toward-opposite"

    def __post_init__(self):
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValueError("noise_prob must be in [0, 1]")
        if not 0.0 <= self.pitch_prob <= 1.0:
            raise ValueError("pitch_prob must be in [0, 1]")
        if self.noise_max_amplitude < 0:
            raise ValueError("noise_max_amplitude must be >= 0")
        if self.pitch_min_semitones < 0 or self.pitch_max_semitones < self.pitch_min_semitones:
            raise ValueError("need 0 <= pitch_min_semitones <= pitch_max_semitones")
        if self.gender_strategy not in GENDER_STRATEGIES:
            raise ValueError(f"unknown gender_strategy: {self.gender_strategy}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPolicy":
        return cls(**d)


@dataclass
class AugmentationLog:
    """What one policy application actually did; replayable via the seed."""

    record_id: str
    seed: int | None
    noise_applied: bool = False
    noise_sigma: float | None = None
    pitch_applied: bool = False
    pitch_semitones: float | None = None

    @property
    def anything_applied(self) -> bool:
        return self.noise_applied or self.pitch_applied

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "AugmentationLog":
        return cls(**json.loads(line))


def add_gaussian_noise(clip: AudioClip, sigma: float, rng: np.random.Generator) -> AudioClip:
    """Add i.i.d. normal(0, sigma^2) noise and clamp to [-1, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    noisy = clip.samples + rng.normal(0.0, sigma, clip.samples.size)
    return AudioClip(np.clip(noisy, -1.0, 1.0), clip.sample_rate)


# --- phase vocoder ---------------------------------------------------------

_N_FFT = 1024
_HOP = 256


def _stft(x: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    if x.size < n_fft:
        x = np.pad(x, (0, n_fft - x.size))
    n_frames = 1 + (x.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * window[None, :], axis=1)


def _istft(frames: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    n_frames = frames.shape[0]
    length = n_fft + hop * (n_frames - 1)
    out = np.zeros(length)
    norm = np.zeros(length)
    chunks = np.fft.irfft(frames, n=n_fft, axis=1) * window[None, :]
    wsq = window * window
    for t in range(n_frames):
        start = t * hop
        out[start : start + n_fft] += chunks[t]
        norm[start : start + n_fft] += wsq
    good = norm > 1e-8
    out[good] /= norm[good]
    return out


def _time_stretch(x: np.ndarray, rate: float, n_fft: int = _N_FFT, hop: int = _HOP) -> np.ndarray:
    """Phase-vocoder speed change: output duration ~= input / rate."""
    window = np.hanning(n_fft)
    spec = _stft(x, n_fft, hop, window)
    n_frames = spec.shape[0]
    steps = np.arange(0.0, n_frames, rate)
    spec = np.vstack([spec, np.zeros((1, spec.shape[1]), dtype=spec.dtype)])

    lo = np.minimum(steps.astype(int), n_frames - 1)
    frac = (steps - lo)[:, None]
    mag = (1.0 - frac) * np.abs(spec[lo]) + frac * np.abs(spec[lo + 1])

    omega = 2.0 * np.pi * hop * np.arange(spec.shape[1]) / n_fft
    dphi = np.angle(spec[lo + 1]) - np.angle(spec[lo]) - omega[None, :]
    dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
    inst = omega[None, :] + dphi

    phase = np.empty_like(inst)
    phase[0] = np.angle(spec[lo[0]])
    if inst.shape[0] > 1:
        phase[1:] = phase[0][None, :] + np.cumsum(inst[:-1], axis=0)

    return _istft(mag * np.exp(1j * phase), n_fft, hop, window)


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Scale spectral content by 2^(semitones/12) at constant duration."""
    if abs(semitones) > 24:
        raise ValueError("|semitones| must be <= 24")
    n = clip.samples.size
    if semitones == 0 or n == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate)

    factor = 2.0 ** (semitones / 12.0)
    stretched = _time_stretch(clip.samples, 1.0 / factor)
    # resample duration by 1/factor -> frequencies scale by factor
    frac = Fraction(factor).limit_denominator(1000)
    out = _resample_by(stretched, frac.denominator, frac.numerator)
    if out.size >= n:
        out = out[:n]
    else:
        out = np.pad(out, (0, n - out.size))
    return AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate)


def _resample_by(x: np.ndarray, up: int, down: int) -> np.ndarray:
    from scipy.signal import resample_poly

    return resample_poly(x, up, down)


# --- policy application ----------------------------------------------------


def apply_policy(record, clip: AudioClip, policy: AugmentationPolicy, rng):
    """Apply the policy to one record's clip.

    ``record`` needs ``id`` and (for gender-dependent strategies)
    ``gender`` attributes. ``rng`` is an integer seed or a Generator;
    passing a seed makes the returned log replayable.
    Pitch (if drawn) is applied before noise so noise stays white.
    """
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        gen = np.random.default_rng(seed)
    else:
        seed = None
        gen = rng

    needs_gender = policy.pitch_prob > 0 and policy.gender_strategy != "random-sign"
    gender = getattr(record, "gender", "unknown")
    if needs_gender and gender not in ("female", "male"):
        raise MissingGenderError(
            f"record {record.id}: strategy {policy.gender_strategy!r} needs a known gender"
        )

    log = AugmentationLog(record_id=record.id, seed=seed)
    out = clip

    if policy.pitch_prob > 0 and gen.random() < policy.pitch_prob:
        magnitude = gen.uniform(policy.pitch_min_semitones, policy.pitch_max_semitones)
        if policy.gender_strategy == "toward-opposite":
            sign = -1.0 if gender == "female" else 1.0
        else:  # random-sign, stratified-rate
            sign = -1.0 if gen.random() < 0.5 else 1.0
        log.pitch_applied = True
        log.pitch_semitones = sign * magnitude
        out = pitch_shift(out, log.pitch_semitones)

    if policy.noise_prob > 0 and gen.random() < policy.noise_prob:
        log.noise_applied = True
        log.noise_sigma = gen.uniform(0.0, policy.noise_max_amplitude)
        out = add_gaussian_noise(out, log.noise_sigma, gen)

    if out is clip:
        out = AudioClip(clip.samples.copy(), clip.sample_rate)
    return out, log


class ReplayError(ValueError):
    """A log replay diverged from the logged decisions."""


def replay_log(clip: AudioClip, policy: AugmentationPolicy, log: AugmentationLog) -> AudioClip:
    """Reproduce the exact waveform recorded in ``log``.

    Consumes the generator in the same fixed order as apply_policy and
    cross-checks every logged decision.
    """
    if log.seed is None:
        raise ReplayError("log has no seed; only seed-driven applications replay")
    gen = np.random.default_rng(log.seed)
    out = clip

    if policy.pitch_prob > 0:
        applied = gen.random() < policy.pitch_prob
        if applied != log.pitch_applied:
            raise ReplayError("pitch gate disagrees with log")
        if applied:
            magnitude = gen.uniform(policy.pitch_min_semitones, policy.pitch_max_semitones)
            if policy.gender_strategy != "toward-opposite":
                gen.random()  # sign draw
            if not math.isclose(magnitude, abs(log.pitch_semitones), rel_tol=0, abs_tol=1e-12):
                raise ReplayError("pitch magnitude disagrees with log")
            out = pitch_shift(out, log.pitch_semitones)
    elif log.pitch_applied:
        raise ReplayError("log applied pitch but policy has pitch_prob 0")

    if policy.noise_prob > 0:
        applied = gen.random() < policy.noise_prob
        if applied != log.noise_applied:
            raise ReplayError("noise gate disagrees with log")
        if applied:
            sigma = gen.uniform(0.0, policy.noise_max_amplitude)
            if not math.isclose(sigma, log.noise_sigma, rel_tol=0, abs_tol=1e-12):
                raise ReplayError("noise sigma disagrees with log")
            out = add_gaussian_noise(out, sigma, gen)
    elif log.noise_applied:
        raise ReplayError("log applied noise but policy has noise_prob 0")

    if out is clip:
        out = AudioClip(clip.samples.copy(), clip.sample_rate)
    return out
