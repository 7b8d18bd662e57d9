"""Manifest ingestion, label spaces, speaker-disjoint stratified
splitting, oversampling, and class-weight computation.

The split assigns whole speakers, never records: a greedy pass places
the largest speakers first into the most record-deficient split, after a
coverage pre-pass that reserves one speaker per (task-label x gender)
cell per split whenever at least three speakers carry that cell. A light
repair pass fixes residual coverage gaps when it can do so without
uncovering anything else.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .seeding import derive_seed

TASKS = ("T1", "T2", "T3")
SPLITS = ("train", "val", "test")
GENDERS = ("female", "male", "unknown")

T1_CLASSES = ("typical", "disordered")
T2_CLASSES = ("articulation", "phonological")
T3_CLASSES = ("addition", "substitution", "omission", "stuttering")

DEFAULT_RATIOS = (0.64, 0.16, 0.20)


@dataclass(frozen=True)
class LabelSpace:
    task: str
    classes: tuple

    def index(self, label: str) -> int:
        return self.classes.index(label)

    def __len__(self) -> int:
        return len(self.classes)


_BUILTIN = {
    "T1": LabelSpace("T1", T1_CLASSES),
    "T2": LabelSpace("T2", T2_CLASSES),
    "T3": LabelSpace("T3", T3_CLASSES),
}


def builtin_label_space(task: str) -> LabelSpace:
    if task not in _BUILTIN:
        raise ValueError(f"unknown task: {task}")
    return _BUILTIN[task]


def flat_label_space(task: str) -> LabelSpace:
    """Label space for one-shot task models: T2/T3 gain a "typical" class
    so they can be trained on the full dataset, typical speech included."""
    if task == "T1":
        return _BUILTIN["T1"]
    base = builtin_label_space(task)
    return LabelSpace(task, ("typical",) + base.classes)


@dataclass(frozen=True)
class SampleRecord:
    id: str
    audio_path: str
    speaker_id: str
    t1_label: str
    gender: str = "unknown"
    t2_label: Optional[str] = None
    t3_label: Optional[str] = None
    transcript: Optional[str] = None

    def label_for(self, task: str) -> Optional[str]:
        if task == "T1":
            return self.t1_label
        if task == "T2":
            return self.t2_label
        if task == "T3":
            return self.t3_label
        raise ValueError(f"unknown task: {task}")


def record_label(record: SampleRecord, space: LabelSpace) -> str:
    """Record's label inside ``space``; unlabeled T2/T3 records map to
    "typical" when the space carries that class (flat-mode training)."""
    label = record.label_for(space.task)
    if label is None:
        if "typical" in space.classes:
            return "typical"
        raise ValueError(f"record {record.id} has no {space.task} label")
    if label not in space.classes:
        raise ValueError(f"record {record.id}: label {label!r} not in {space.task} space")
    return label


class ManifestError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


_REQUIRED_FIELDS = ("id", "audio_path", "speaker_id", "t1_label")


def _parse_record(obj: dict, lineno: int) -> SampleRecord:
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise ManifestError(f"missing required field {key!r}", lineno)
    t1 = obj["t1_label"]
    if t1 not in T1_CLASSES:
        raise ManifestError(f"invalid t1_label {t1!r}", lineno)
    gender = obj.get("gender", "unknown")
    if gender not in GENDERS:
        raise ManifestError(f"invalid gender {gender!r}", lineno)
    t2 = obj.get("t2_label")
    t3 = obj.get("t3_label")
    if t2 is not None and t2 not in T2_CLASSES:
        raise ManifestError(f"invalid t2_label {t2!r}", lineno)
    if t3 is not None and t3 not in T3_CLASSES:
        raise ManifestError(f"invalid t3_label {t3!r}", lineno)
    if t1 == "typical" and (t2 is not None or t3 is not None):
        raise ManifestError("typical sample must not carry t2_label/t3_label", lineno)
    transcript = obj.get("transcript")
    if transcript is not None and not isinstance(transcript, str):
        raise ManifestError("transcript must be a string", lineno)
    return SampleRecord(
        id=str(obj["id"]),
        audio_path=str(obj["audio_path"]),
        speaker_id=str(obj["speaker_id"]),
        t1_label=t1,
        gender=gender,
        t2_label=t2,
        t3_label=t3,
        transcript=transcript,
    )


def load_manifest(path) -> list[SampleRecord]:
    """Read a JSON-Lines manifest; order preserved, duplicate ids rejected."""
    records: list[SampleRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict):
                raise ManifestError("each line must be a JSON object", lineno)
            rec = _parse_record(obj, lineno)
            if rec.id in seen:
                raise ManifestError(f"duplicate id {rec.id!r}", lineno)
            seen.add(rec.id)
            records.append(rec)
    return records


def save_manifest(path, records: Iterable[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "audio_path": rec.audio_path,
                "speaker_id": rec.speaker_id,
                "gender": rec.gender,
                "t1_label": rec.t1_label,
            }
            if rec.t2_label is not None:
                obj["t2_label"] = rec.t2_label
            if rec.t3_label is not None:
                obj["t3_label"] = rec.t3_label
            if rec.transcript is not None:
                obj["transcript"] = rec.transcript
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# splitting


class SplitError(ValueError):
    pass


@dataclass
class SplitAssignment:
    by_speaker: dict
    ratios: tuple
    seed: int

    def split_of(self, speaker_id: str) -> str:
        return self.by_speaker[speaker_id]

    def records_in(self, records: Sequence[SampleRecord], split: str) -> list[SampleRecord]:
        return [r for r in records if self.by_speaker[r.speaker_id] == split]

    def counts(self, records: Sequence[SampleRecord]) -> dict:
        out = {}
        for split in SPLITS:
            recs = self.records_in(records, split)
            cells: Counter = Counter()
            for r in recs:
                for task in TASKS:
                    label = r.label_for(task)
                    if label is not None:
                        cells[f"{task}|{label}|{r.gender}"] += 1
            out[split] = {
                "records": len(recs),
                "speakers": len({r.speaker_id for r in recs}),
                "cells": dict(sorted(cells.items())),
            }
        return out

    def to_dict(self, records: Sequence[SampleRecord] | None = None) -> dict:
        d = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignment": dict(sorted(self.by_speaker.items())),
        }
        if records is not None:
            d["counts"] = self.counts(records)
        return d

    def save(self, path, records: Sequence[SampleRecord] | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(records), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SplitAssignment":
        d = json.loads(Path(path).read_text())
        return cls(by_speaker=dict(d["assignment"]), ratios=tuple(d["ratios"]), seed=d["seed"])


def _speaker_stats(records: Sequence[SampleRecord]):
    count: Counter = Counter()
    cells: dict[str, set] = defaultdict(set)
    for r in records:
        count[r.speaker_id] += 1
        for task in TASKS:
            label = r.label_for(task)
            if label is not None:
                cells[r.speaker_id].add((task, label, r.gender))
    return count, cells


def split(
    records: Sequence[SampleRecord],
    ratios: tuple = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Partition speakers into train/val/test targeting record-count ratios.

    Deterministic given the seed and invariant to input permutation: all
    orderings derive from record counts, per-speaker hash keys, and
    speaker ids.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise SplitError("ratios must be three positive numbers")
    total_ratio = sum(ratios)
    ratios = tuple(r / total_ratio for r in ratios)

    count, cells = _speaker_stats(records)
    speakers = sorted(count)
    if len(speakers) < 3:
        raise SplitError("fewer than 3 speakers")

    total = sum(count.values())
    targets = {s: ratios[i] * total for i, s in enumerate(SPLITS)}
    fill = {s: 0 for s in SPLITS}
    assignment: dict[str, str] = {}

    def assign(speaker: str, split_name: str) -> None:
        assignment[speaker] = split_name
        fill[split_name] += count[speaker]

    tie_key = {spk: derive_seed(seed, "split", spk) for spk in speakers}
    order = sorted(speakers, key=lambda s: (-count[s], tie_key[s], s))

    # coverage pre-pass: cells carried by >= 3 speakers must reach every split
    cell_speakers: dict[tuple, list] = defaultdict(list)
    for spk in speakers:
        for cell in cells[spk]:
            cell_speakers[cell].append(spk)
    eligible = {c for c, spks in cell_speakers.items() if len(spks) >= 3}

    def covered(cell: tuple, split_name: str) -> bool:
        return any(
            assignment.get(spk) == split_name for spk in cell_speakers[cell]
        )

    for cell in sorted(eligible, key=lambda c: (len(cell_speakers[c]), c)):
        lacking = [s for s in SPLITS if not covered(cell, s)]
        lacking.sort(key=lambda s: -(targets[s] - fill[s]))
        for split_name in lacking:
            candidates = [spk for spk in cell_speakers[cell] if spk not in assignment]
            if not candidates:
                break
            candidates.sort(key=lambda s: (count[s], tie_key[s], s))
            assign(candidates[0], split_name)

    # main greedy: largest speakers into the most-deficient split
    for spk in order:
        if spk in assignment:
            continue
        best = max(SPLITS, key=lambda s: (targets[s] - fill[s], -SPLITS.index(s)))
        assign(spk, best)

    _repair_coverage(assignment, fill, targets, count, cells, eligible, cell_speakers, tie_key)

    return SplitAssignment(by_speaker=assignment, ratios=ratios, seed=seed)


def _repair_coverage(assignment, fill, targets, count, cells, eligible, cell_speakers, tie_key):
    """Move speakers to close residual cell-coverage gaps, cheapest move
    first, never uncovering another eligible cell."""

    def providers(cell, split_name):
        return [s for s in cell_speakers[cell] if assignment[s] == split_name]

    for _ in range(3 * max(1, len(eligible))):
        gap = None
        for cell in sorted(eligible, key=lambda c: (len(cell_speakers[c]), c)):
            for split_name in SPLITS:
                if not providers(cell, split_name):
                    gap = (cell, split_name)
                    break
            if gap:
                break
        if gap is None:
            return
        cell, dest = gap
        moves = []
        for spk in cell_speakers[cell]:
            src = assignment[spk]
            if src == dest:
                continue
            safe = all(
                len(providers(c, src)) >= 2
                for c in cells[spk]
                if c in eligible
            )
            if not safe:
                continue
            new_dev = sum(
                abs((fill[s] + (count[spk] if s == dest else 0) - (count[spk] if s == src else 0)) - targets[s])
                for s in SPLITS
            )
            moves.append((new_dev, count[spk], tie_key[spk], spk, src))
        if not moves:
            return  # best effort: gap not closable without opening another
        moves.sort()
        _, _, _, spk, src = moves[0]
        assignment[spk] = dest
        fill[src] -= count[spk]
        fill[dest] += count[spk]


# ---------------------------------------------------------------------------
# filtering, weighting, oversampling


def filter_pathological(records: Sequence[SampleRecord]) -> list[SampleRecord]:
    """Only disordered-speech records, in the original order."""
    return [r for r in records if r.t1_label == "disordered"]


def class_weights(records: Sequence[SampleRecord], space: LabelSpace) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (K * n_c), ordered like the space."""
    counts = Counter(record_label(r, space) for r in records)
    n = len(records)
    k = len(space.classes)
    weights = np.zeros(k)
    for i, cls in enumerate(space.classes):
        if counts[cls] == 0:
            raise ValueError(f"class {cls!r} has zero count")
        weights[i] = n / (k * counts[cls])
    return weights


def oversample(
    records: Sequence[SampleRecord],
    space: LabelSpace,
    m: int,
    rng: np.random.Generator,
) -> list[SampleRecord]:
    """Repeat every non-majority-class record m times, shuffle deterministically.

    Classes tied for the highest count all count as majority, so a fully
    balanced input comes back unchanged (reordered).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    labels = [record_label(r, space) for r in records]
    counts = Counter(labels)
    if not counts:
        return []
    top = max(counts.values())
    majority = {c for c, n in counts.items() if n == top}
    out: list[SampleRecord] = []
    for rec, label in zip(records, labels):
        out.extend([rec] * (1 if label in majority else m))
    perm = rng.permutation(len(out))
    return [out[i] for i in perm]
