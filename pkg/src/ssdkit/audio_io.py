"""WAV loading, writing, trimming, and resampling.

Clips are mono float64 arrays in [-1, 1]. The RIFF parser is hand-rolled
so malformed headers and unsupported encodings raise distinct exception
types; the writer emits canonical 44-byte-header 16-bit PCM.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as _signal

CANONICAL_RATE = 16000


class WavError(Exception):
    """Base for WAV container problems."""


class WavFormatError(WavError):
    """Missing or malformed RIFF/WAVE structure."""


class WavEncodingError(WavError):
    """Structurally valid file with an encoding this reader does not handle."""


@dataclass
class AudioClip:
    """Mono waveform: normalized float64 samples plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        self.sample_rate = int(self.sample_rate)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


def _decode_pcm(raw: bytes, bits: int, fmt: int, n_channels: int) -> np.ndarray:
    if fmt == 1:  # integer PCM
        if bits == 8:
            x = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
            x = (x - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            b = np.frombuffer(raw, dtype=np.uint8)
            b = b[: (len(b) // 3) * 3].reshape(-1, 3).astype(np.int32)
            x = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            x = np.where(x >= 1 << 23, x - (1 << 24), x).astype(np.float64) / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
        else:
            raise WavEncodingError(f"unsupported integer PCM bit depth: {bits}")
    elif fmt == 3:  # IEEE float
        if bits != 32:
            raise WavEncodingError(f"unsupported float bit depth: {bits}")
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        x = np.clip(x, -1.0, 1.0)
    else:
        raise WavEncodingError(f"unsupported WAV format code: {fmt}")
    if n_channels > 1:
        x = x[: (x.size // n_channels) * n_channels]
        x = x.reshape(-1, n_channels).mean(axis=1)
    return x


def load_wav(path) -> AudioClip:
    """Load a RIFF/WAVE PCM file as a mono clip scaled to [-1, 1].

    Supports 8/16/24/32-bit integer and 32-bit float encodings;
    multi-channel audio is averaged to mono. Raises FileNotFoundError,
    WavFormatError, or WavEncodingError depending on what is wrong.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt_chunk = None
    data_chunk = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt_chunk = body
        elif cid == b"data":
            data_chunk = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt_chunk is None or len(fmt_chunk) < 16:
        raise WavFormatError(f"{path}: missing or short fmt chunk")
    if data_chunk is None:
        raise WavFormatError(f"{path}: missing data chunk")

    fmt, n_channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt_chunk, 0)
    if fmt == 0xFFFE and len(fmt_chunk) >= 40:  # extensible: sub-format GUID
        (fmt,) = struct.unpack_from("<H", fmt_chunk, 24)
    if n_channels < 1 or rate <= 0:
        raise WavFormatError(f"{path}: invalid channel count or sample rate")

    samples = _decode_pcm(data_chunk, bits, fmt, n_channels)
    return AudioClip(np.clip(samples, -1.0, 1.0), rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write 16-bit little-endian PCM with the canonical 44-byte header."""
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


def trim(clip: AudioClip, max_seconds: float) -> AudioClip:
    """Keep at most the first ``max_seconds`` of the clip."""
    if max_seconds <= 0:
        raise ValueError("max_seconds must be positive")
    limit = int(round(max_seconds * clip.sample_rate))
    if clip.samples.size <= limit:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    return AudioClip(clip.samples[:limit].copy(), clip.sample_rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling; identity when rates match."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    if clip.samples.size == 0:
        return AudioClip(np.zeros(0), target_rate)
    g = np.gcd(target_rate, clip.sample_rate)
    out = _signal.resample_poly(clip.samples, target_rate // g, clip.sample_rate // g)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate)


def load_canonical(path, rate: int = CANONICAL_RATE, max_seconds: float | None = None) -> AudioClip:
    """Load, resample to the toolkit rate, and optionally trim."""
    clip = resample(load_wav(path), rate)
    if max_seconds is not None:
        clip = trim(clip, max_seconds)
    return clip
