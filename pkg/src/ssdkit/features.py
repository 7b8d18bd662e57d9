"""Log-mel front end and statistics pooling.

Stands in for learned speech embeddings: a clip becomes per-band
mean / standard deviation / delta-mean of log mel-filterbank energies,
so the vector dimension is 3 * n_mels regardless of clip duration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, CANONICAL_RATE

LOG_EPS = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 40
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    sample_rate: int = CANONICAL_RATE

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(
            {
                "n_mels": self.n_mels,
                "frame_ms": self.frame_ms,
                "hop_ms": self.hop_ms,
                "sample_rate": self.sample_rate,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def dim(self) -> int:
        return 3 * self.n_mels


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    fingerprint: str


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters over rfft bins, (n_mels, n_fft//2 + 1)."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    corners = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, freqs.size))
    for i in range(n_mels):
        lo, mid, hi = corners[i], corners[i + 1], corners[i + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def log_mel_frames(
    clip: AudioClip,
    n_mels: int = 40,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
) -> np.ndarray:
    """Per-frame log mel-filterbank energies, shape (frames, n_mels).

    Hann-windowed power spectra through triangular mel filters, then
    log(LOG_EPS + energy). Raises on clips shorter than one frame.
    """
    if n_mels < 4:
        raise ValueError("n_mels must be >= 4")
    rate = clip.sample_rate
    frame_len = int(round(rate * frame_ms / 1000.0))
    hop = int(round(rate * hop_ms / 1000.0))
    if hop < 1 or frame_len < 2:
        raise ValueError("frame/hop too short for the sample rate")
    x = clip.samples
    if x.size < frame_len:
        raise ValueError("clip shorter than one frame")
    n_frames = (x.size - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(frame_len)[None, :]

    n_fft = 1 << (frame_len - 1).bit_length()
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    fb = mel_filterbank(n_mels, n_fft, rate)
    return np.log(LOG_EPS + power @ fb.T)


def pool_stats(frames: np.ndarray) -> np.ndarray:
    """Concatenated per-band mean, std, and delta-mean (dim = 3 * bands)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError("need a non-empty (frames x bands) matrix")
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    if frames.shape[0] > 1:
        delta = np.diff(frames, axis=0).mean(axis=0)
    else:
        delta = np.zeros(frames.shape[1])
    return np.concatenate([mean, std, delta])


def extract(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Fixed-length feature vector for a clip at the configured rate."""
    if clip.sample_rate != config.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} != feature config rate {config.sample_rate}"
        )
    frames = log_mel_frames(clip, config.n_mels, config.frame_ms, config.hop_ms)
    return FeatureVector(pool_stats(frames), config.fingerprint)


# ---------------------------------------------------------------------------
# on-disk cache: flat float32 binary + JSON sidecar


def save_feature_cache(path_base, ids, matrix: np.ndarray, config: FeatureConfig) -> None:
    ids = list(ids)
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError("matrix rows must match ids")
    base = Path(path_base)
    base.with_suffix(".bin").write_bytes(matrix.tobytes())
    sidecar = {
        "dim": int(matrix.shape[1]),
        "count": len(ids),
        "fingerprint": config.fingerprint,
        "dtype": "float32",
        "ids": ids,
    }
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_feature_cache(path_base):
    base = Path(path_base)
    sidecar = json.loads(base.with_suffix(".json").read_text())
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f4")
    matrix = raw.reshape(sidecar["count"], sidecar["dim"])
    return sidecar["ids"], matrix, sidecar["fingerprint"]
