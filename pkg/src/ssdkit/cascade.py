"""Hierarchical routing: a binary gate decides whether the type and
symptom classifiers ever see a sample.

Routing is pure per record; the downstream backends are provably not
invoked for samples the gate rejects. Evaluation supports two scoring
modes for the downstream tasks: "subset" scores them over gold-disordered
records only, counting gate false-negatives as wrong; "end-to-end" adds
the gate's own metrics over all records. The flat counterpart scores each
task independently with no gating; a flat backend may carry an extended
label space (e.g. a "typical" class), and predictions outside the task's
scoring space count as errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import metrics
from .dataset import SampleRecord, builtin_label_space

DISORDERED = "disordered"
TYPICAL = "typical"


@dataclass
class CascadeConfig:
    t1_backend: object
    t2_backend: Optional[object] = None
    t3_backend: Optional[object] = None
    threshold: Optional[float] = None  # on p(disordered); argmax when None

    def __post_init__(self):
        if tuple(self.t1_backend.label_space.classes) != builtin_label_space("T1").classes:
            raise ValueError("t1 backend must use the binary typical/disordered space")
        for task, backend in (("T2", self.t2_backend), ("T3", self.t3_backend)):
            if backend is not None and backend.label_space.task != task:
                raise ValueError(f"{task} backend carries a {backend.label_space.task} space")
        if self.threshold is not None and not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class CascadePrediction:
    record_id: str
    t1_pred: str
    routed: bool
    t2_pred: Optional[str] = None
    t3_pred: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "t1_pred": self.t1_pred,
            "routed": self.routed,
            "t2_pred": self.t2_pred,
            "t3_pred": self.t3_pred,
        }


def route(config: CascadeConfig, record_id: str, feature=None) -> CascadePrediction:
    """Gate first; invoke downstream backends only for routed samples.

    A probability tie (argmax rule) or exactly-at-threshold score routes
    to disordered: downstream review is the safer failure mode here.
    """
    t1_probs = config.t1_backend.probs_for(record_id, feature)
    p_disordered = float(t1_probs[1])
    if config.threshold is not None:
        routed = p_disordered >= config.threshold
    else:
        routed = p_disordered >= float(t1_probs[0])
    pred = CascadePrediction(
        record_id=record_id,
        t1_pred=DISORDERED if routed else TYPICAL,
        routed=routed,
    )
    if routed:
        if config.t2_backend is not None:
            probs = config.t2_backend.probs_for(record_id, feature)
            pred.t2_pred = config.t2_backend.label_space.classes[int(np.argmax(probs))]
        if config.t3_backend is not None:
            probs = config.t3_backend.probs_for(record_id, feature)
            pred.t3_pred = config.t3_backend.label_space.classes[int(np.argmax(probs))]
    return pred


def route_all(
    config: CascadeConfig,
    records: Sequence[SampleRecord],
    features: Mapping | None = None,
) -> list[CascadePrediction]:
    features = features or {}
    return [route(config, r.id, features.get(r.id)) for r in records]


def save_predictions(path, predictions: Sequence[CascadePrediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class TaskScore:
    task: str
    mode: str
    macro_f1: float
    macro_recall: float
    confusion: np.ndarray  # over records whose prediction fell in the space
    per_gender: dict = field(default_factory=dict)
    n_records: int = 0
    n_unscored: int = 0  # gold-labelled records with no in-space prediction


def _score_task(task: str, mode: str, golds, preds, genders, classes) -> TaskScore:
    scored_golds = [g for g, p in zip(golds, preds) if p is not None]
    scored_preds = [p for p in preds if p is not None]
    per_gender = {}
    for gender in sorted(set(genders)):
        sub = [(g, p) for g, p, gd in zip(golds, preds, genders) if gd == gender]
        if sub:
            sg, sp = zip(*sub)
            per_gender[gender] = {
                "macro_f1": metrics.macro_f1(sp, sg, classes),
                "macro_recall": metrics.macro_recall(sp, sg, classes),
                "n": len(sub),
            }
    return TaskScore(
        task=task,
        mode=mode,
        macro_f1=metrics.macro_f1(preds, golds, classes),
        macro_recall=metrics.macro_recall(preds, golds, classes),
        confusion=metrics.confusion_matrix(scored_golds, scored_preds, classes),
        per_gender=per_gender,
        n_records=len(golds),
        n_unscored=len(golds) - len(scored_golds),
    )


def evaluate_cascade(
    config: CascadeConfig,
    records: Sequence[SampleRecord],
    features: Mapping | None = None,
    mode: str = "subset",
    spaces: Mapping | None = None,
) -> dict[str, TaskScore]:
    """Score the routed pipeline on gold-labelled records.

    T2/T3 are always scored over gold-disordered records, with gate
    false-negatives counted as wrong; mode "end-to-end" additionally
    scores the gate itself over all records. ``spaces`` may override the
    benchmark scoring spaces per task (synthetic fixtures); each
    downstream backend must carry exactly its task's scoring space.
    """
    if mode not in ("subset", "end-to-end"):
        raise ValueError("mode must be 'subset' or 'end-to-end'")
    if not records:
        raise ValueError("empty test set")
    features = features or {}
    spaces = spaces or {}
    predictions = {r.id: route(config, r.id, features.get(r.id)) for r in records}

    scores: dict[str, TaskScore] = {}
    if mode == "end-to-end":
        scores["T1"] = _score_task(
            "T1",
            f"cascade-{mode}",
            [r.t1_label for r in records],
            [predictions[r.id].t1_pred for r in records],
            [r.gender for r in records],
            builtin_label_space("T1").classes,
        )

    disordered = [r for r in records if r.t1_label == DISORDERED]
    for task, backend, attr in (
        ("T2", config.t2_backend, "t2_pred"),
        ("T3", config.t3_backend, "t3_pred"),
    ):
        if backend is None:
            continue
        classes = tuple(spaces.get(task, builtin_label_space(task)).classes)
        if tuple(backend.label_space.classes) != classes:
            raise ValueError(f"{task} backend space does not match the scoring space")
        subset = [r for r in disordered if r.label_for(task) is not None]
        if not subset:
            continue
        golds = [r.label_for(task) for r in subset]
        preds = [
            getattr(predictions[r.id], attr) if predictions[r.id].routed else None
            for r in subset
        ]
        scores[task] = _score_task(
            task, f"cascade-{mode}", golds, preds, [r.gender for r in subset], classes
        )
    return scores


def evaluate_flat(
    backends: Mapping[str, object],
    records: Sequence[SampleRecord],
    features: Mapping | None = None,
    spaces: Mapping | None = None,
) -> dict[str, TaskScore]:
    """Score each task independently, without gating.

    T1 runs over all records; T2/T3 over gold-disordered records. A
    backend whose label space extends beyond the task's scoring classes
    (flat training with a "typical" class) is handled by treating any
    out-of-space prediction as wrong.
    """
    if not records:
        raise ValueError("empty test set")
    features = features or {}
    spaces = spaces or {}
    scores: dict[str, TaskScore] = {}
    for task, backend in backends.items():
        scoring = tuple(spaces.get(task, builtin_label_space(task)).classes)
        if task == "T1":
            subset = list(records)
        else:
            subset = [
                r
                for r in records
                if r.t1_label == DISORDERED and r.label_for(task) is not None
            ]
        if not subset:
            continue
        golds = [r.label_for(task) for r in subset]
        preds = []
        for r in subset:
            probs = backend.probs_for(r.id, features.get(r.id))
            pred = backend.label_space.classes[int(np.argmax(probs))]
            preds.append(pred if pred in scoring else None)
        scores[task] = _score_task(task, "flat", golds, preds, [r.gender for r in subset], scoring)
    return scores
