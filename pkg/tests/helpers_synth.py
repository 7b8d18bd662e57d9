"""Synthetic audio datasets for pipeline tests.

Clips are short tones with class-specific frequencies; disordered
samples additionally carry a broadband noise floor, which is the cue the
binary gate has to learn. Everything is seed-deterministic.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from ssdkit.audio_io import AudioClip, write_wav
from ssdkit.dataset import SampleRecord
from ssdkit.seeding import spawn_rng

RATE = 16000


def tone_clip(freq: float, seconds: float = 1.0, rate: int = RATE, amp: float = 0.3,
              noise: float = 0.0, seed: int = 0, extra_freq: float | None = None,
              extra_amp: float | None = None) -> AudioClip:
    rng = spawn_rng("tone", seed)
    t = np.arange(int(round(seconds * rate))) / rate
    x = amp * np.sin(2 * np.pi * freq * t)
    if extra_freq:
        x = x + (0.5 * amp if extra_amp is None else extra_amp) * np.sin(2 * np.pi * extra_freq * t)
    if noise > 0:
        x = x + rng.normal(0.0, noise, t.size)
    return AudioClip(np.clip(x, -1.0, 1.0), rate)


# ---------------------------------------------------------------------------
# nested 3-texture-class dataset (gate + one downstream task), in memory


TEXTURES = ("addition", "substitution", "omission")  # majority, mid, minority

# texture classes are told apart by an overtone marker; the minority is
# the marker-less one, so a one-shot model must hold its margin against
# both the majority texture and the (marker-less) typical mass, while
# the gated pipeline decides pathology first and markers second
_TEXTURE_OVERTONE = {"addition": 3200.0, "substitution": 5200.0, "omission": None}
_TYPICAL_BAND = (280.0, 360.0)
_DISORDERED_BAND = (600.0, 2400.0)
_TYPICAL_NOISE = 0.01
_DISORDERED_NOISE = 0.04
_MARKER_AMP = 0.06  # barely above the disordered noise floor


def build_nested_dataset(n_records: int = 360, seed: int = 7, seconds: float = 0.6):
    """(records, clips): ~91% of records in the two majority classes
    (typical + the dominant texture), the texture labels in the symptom
    field."""
    rng = spawn_rng("nested", seed)
    quotas = {
        "typical": int(round(0.56 * n_records)),
        "addition": int(round(0.35 * n_records)),
        "substitution": int(round(0.06 * n_records)),
    }
    quotas["omission"] = n_records - sum(quotas.values())

    records, clips = [], {}
    idx = 0
    for label, count in quotas.items():
        for _ in range(count):
            gender = "female" if idx % 2 == 0 else "male"
            speaker = f"spk{idx // 2:03d}"  # two records per speaker
            rid = f"syn{idx:04d}"
            if label == "typical":
                freq = rng.uniform(*_TYPICAL_BAND)
                noise, overtone = _TYPICAL_NOISE, None
                t1, t3 = "typical", None
            else:
                freq = rng.uniform(*_DISORDERED_BAND)
                noise, overtone = _DISORDERED_NOISE, _TEXTURE_OVERTONE[label]
                t1, t3 = "disordered", label
            clips[rid] = tone_clip(
                freq, seconds=seconds, noise=noise, seed=int(rng.integers(2**31)),
                extra_freq=overtone, extra_amp=_MARKER_AMP,
            )
            records.append(
                SampleRecord(
                    id=rid, audio_path=f"{rid}.wav", speaker_id=speaker,
                    t1_label=t1, gender=gender, t3_label=t3,
                )
            )
            idx += 1
    return records, clips


# ---------------------------------------------------------------------------
# full canonical dataset on disk (all three tasks populated)


_T3_TONES = {"addition": 600.0, "substitution": 1000.0, "omission": 1600.0, "stuttering": 2300.0}


def write_full_dataset(directory, seed: int = 11, seconds: float = 0.6,
                       speakers_per_cell: int = 3, records_per_speaker: int = 2) -> Path:
    """WAV files + manifest covering every class of every task, with at
    least ``speakers_per_cell`` speakers per (label, gender) cell so the
    split keeps every cell represented everywhere. Returns manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = spawn_rng("full", seed)
    rows = []
    spk = 0

    def add_speaker(gender, t1, t2, t3):
        nonlocal spk
        sid = f"spk{spk:03d}"
        spk += 1
        for k in range(records_per_speaker):
            rid = f"{sid}_r{k}"
            if t1 == "typical":
                clip = tone_clip(rng.uniform(280, 360), seconds=seconds, noise=0.01,
                                 seed=int(rng.integers(2**31)))
            else:
                clip = tone_clip(
                    _T3_TONES[t3] * rng.uniform(0.95, 1.05), seconds=seconds, noise=0.04,
                    seed=int(rng.integers(2**31)),
                    extra_freq=3000.0 if t2 == "articulation" else None,
                )
            write_wav(clip, directory / f"{rid}.wav")
            row = {
                "id": rid, "audio_path": str(directory / f"{rid}.wav"),
                "speaker_id": sid, "gender": gender, "t1_label": t1,
            }
            if t2:
                row["t2_label"] = t2
            if t3:
                row["t3_label"] = t3
            rows.append(row)

    t3_cycle = itertools.cycle(["articulation", "articulation", "phonological"])
    for gender in ("female", "male"):
        for _ in range(2 * speakers_per_cell):
            add_speaker(gender, "typical", None, None)
        for t3 in _T3_TONES:
            for _ in range(speakers_per_cell):
                add_speaker(gender, "disordered", next(t3_cycle), t3)

    manifest = directory / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# random manifests for split-invariant fuzzing (no audio involved)


def random_manifest(rng: np.random.Generator):
    """Speaker-heterogeneous records with random labels; >=half the
    speakers own a single record so greedy filling can hit the ratios."""
    n_speakers = int(rng.integers(25, 61))
    records = []
    rid = 0
    for s in range(n_speakers):
        n_rec = 1 if rng.random() < 0.55 else int(rng.integers(2, 5))
        gender = "female" if rng.random() < 0.5 else "male"
        t1 = "disordered" if rng.random() < 0.45 else "typical"
        for _ in range(n_rec):
            t2 = t3 = None
            if t1 == "disordered":
                t2 = "articulation" if rng.random() < 0.7 else "phonological"
                t3 = ("addition", "substitution", "omission", "stuttering")[int(rng.integers(4))]
            records.append(
                SampleRecord(
                    id=f"r{rid}", audio_path="none.wav", speaker_id=f"s{s}",
                    t1_label=t1, gender=gender, t2_label=t2, t3_label=t3,
                )
            )
            rid += 1
    return records
