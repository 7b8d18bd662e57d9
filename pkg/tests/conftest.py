import numpy as np
import pytest

from ssdkit import _kernels
from ssdkit.audio_io import AudioClip


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay JIT compilation before any timed assertion runs
    _kernels.warmup()


@pytest.fixture
def sine_clip():
    def make(freq=440.0, seconds=1.0, rate=16000, amp=0.5):
        t = np.arange(int(round(seconds * rate))) / rate
        return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)

    return make


def fft_peak_hz(clip: AudioClip) -> float:
    spec = np.abs(np.fft.rfft(clip.samples))
    return float(np.argmax(spec) * clip.sample_rate / clip.samples.size)
