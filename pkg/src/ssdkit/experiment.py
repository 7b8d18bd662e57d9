"""End-to-end experiment orchestration.

One experiment = one speaker-disjoint split, then per seed: materialize
(oversampled, augmented) training sets, train the gate and downstream
models, evaluate cascaded and/or flat, and persist per-seed RunResults,
models, and predictions. Augmentation touches training data only;
validation and test clips are scored untouched.

Flat-mode downstream models train on the full training split with the
typical-speech records folded in as an extra "typical" class, so they
face the raw class imbalance the gate removes; at scoring time a
"typical" prediction on a disordered test record counts as an error.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import cascade as cascade_mod
from . import classifier
from . import features
from .audio_io import load_canonical
from .augment import AugmentationPolicy, apply_policy
from .cascade import CascadeConfig, TaskScore, evaluate_cascade, evaluate_flat, route_all
from .classifier import ModelBackend, TrainConfig, load_external_probs
from .dataset import (
    SPLITS,
    LabelSpace,
    SampleRecord,
    builtin_label_space,
    class_weights,
    filter_pathological,
    flat_label_space,
    load_manifest,
    oversample,
    record_label,
    split,
)
from .features import FeatureConfig, FeatureVector
from .reporting import MetricReport, RunResult, build_report, emit, save_runs
from .seeding import derive_seed, spawn_rng

DEFAULT_SEEDS = tuple(range(10))


@dataclass
class ExperimentConfig:
    manifest: str
    out_dir: str
    ratios: tuple = (0.64, 0.16, 0.20)
    split_seed: int = 0
    seeds: tuple = DEFAULT_SEEDS
    mode: str = "both"  # cascade | flat | both
    tasks: tuple = ("T1", "T2", "T3")
    backend: str = "standin"  # standin | external-probs
    probs_paths: dict = field(default_factory=dict)  # task -> file
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    accumulation_steps: int = 1
    hidden_width: int = 0
    oversample_multiplier: int = 1  # applied to T2/T3
    oversample_t1: int = 1
    class_weighting: bool = True
    max_seconds: Optional[float] = 12.0
    n_mels: int = 40
    jobs: int = 1
    model_name: str = "standin"

    def __post_init__(self):
        if self.mode not in ("cascade", "flat", "both"):
            raise ValueError("mode must be cascade, flat, or both")
        if self.backend not in ("standin", "external-probs"):
            raise ValueError("backend must be standin or external-probs")
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        bad = [t for t in self.tasks if t not in ("T1", "T2", "T3")]
        if bad:
            raise ValueError(f"unknown tasks: {bad}")
        if self.mode in ("cascade", "both") and "T1" not in self.tasks:
            raise ValueError("cascade mode needs T1 in the task set")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.to_dict()
        return d


@dataclass
class Workspace:
    config: ExperimentConfig
    records: list
    assignment: object
    by_split: dict
    clips: dict
    base_features: dict
    feature_config: FeatureConfig


def prepare_workspace(config: ExperimentConfig) -> Workspace:
    """Load the manifest, split it, and (for the stand-in backend) load
    audio and extract unaugmented features once."""
    records = load_manifest(config.manifest)
    assignment = split(records, config.ratios, config.split_seed)
    by_split = {s: assignment.records_in(records, s) for s in SPLITS}
    feat_cfg = FeatureConfig(n_mels=config.n_mels)
    clips: dict = {}
    base: dict = {}
    if config.backend == "standin":
        for rec in records:
            clip = load_canonical(rec.audio_path, feat_cfg.sample_rate, config.max_seconds)
            clips[rec.id] = clip
            base[rec.id] = features.extract(clip, feat_cfg)
    return Workspace(config, records, assignment, by_split, clips, base, feat_cfg)


def _materialize(ws: Workspace, recs, space: LabelSpace, multiplier: int, seed: int, tag: str):
    """Oversample, augment each copy with its own derived seed, extract
    features. Copies of the same record draw independent augmentations."""
    config = ws.config
    rng = spawn_rng(seed, "oversample", tag)
    multiset = oversample(recs, space, multiplier, rng)
    x = np.empty((len(multiset), ws.feature_config.dim))
    y = np.empty(len(multiset), dtype=np.int64)
    occurrence: Counter = Counter()
    for i, rec in enumerate(multiset):
        copy_idx = occurrence[rec.id]
        occurrence[rec.id] += 1
        aug_seed = derive_seed(seed, "augment", tag, rec.id, copy_idx)
        clip, log = apply_policy(rec, ws.clips[rec.id], config.policy, aug_seed)
        if log.anything_applied:
            vec = features.extract(clip, ws.feature_config)
        else:
            vec = ws.base_features[rec.id]
        x[i] = vec.values
        y[i] = space.index(record_label(rec, space))
    weights = class_weights(multiset, space) if config.class_weighting else None
    return x, y, weights


def _eval_matrix(ws: Workspace, recs, space: LabelSpace):
    x = np.stack([ws.base_features[r.id].values for r in recs]) if recs else np.zeros((0, ws.feature_config.dim))
    y = np.array([space.index(record_label(r, space)) for r in recs], dtype=np.int64)
    return x, y


def _train_task(ws: Workspace, train_recs, val_recs, space: LabelSpace, multiplier: int, seed: int, tag: str):
    config = ws.config
    x, y, weights = _materialize(ws, train_recs, space, multiplier, seed, tag)
    x_val, y_val = _eval_matrix(ws, val_recs, space)
    tcfg = TrainConfig(
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        accumulation_steps=config.accumulation_steps,
        class_weights=weights,
        hidden_width=config.hidden_width,
        seed=derive_seed(seed, "train", tag),
    )
    return classifier.train(
        x, y, x_val, y_val, space, tcfg, fingerprint=ws.feature_config.fingerprint
    )


def _score_to_run(score: TaskScore, model: str, mode: str, seed: int, run_index: int) -> RunResult:
    return RunResult(
        run_id=f"{model}.{mode}.{score.task}.run{run_index:02d}.seed{seed}",
        model=model,
        task=score.task,
        mode=mode,
        seed=seed,
        macro_f1=score.macro_f1,
        macro_recall=score.macro_recall,
        per_gender=score.per_gender,
        confusion=score.confusion.tolist(),
        n_records=score.n_records,
        n_unscored=score.n_unscored,
    )


def _external_backends(config: ExperimentConfig) -> dict:
    backends = {}
    for task in config.tasks:
        path = config.probs_paths.get(task)
        if path is None:
            raise ValueError(f"external-probs backend needs a probabilities file for {task}")
        backends[task] = load_external_probs(path, builtin_label_space(task))
    return backends


def run_one_seed(ws: Workspace, seed: int, run_index: int) -> list[RunResult]:
    """Train (stand-in backend) and evaluate one seed; persists models,
    predictions, and the per-seed run file under the output directory."""
    config = ws.config
    out = Path(config.out_dir)
    test_recs = ws.by_split["test"]
    features_map = ws.base_features
    want_cascade = config.mode in ("cascade", "both")
    want_flat = config.mode in ("flat", "both")

    if config.backend == "external-probs":
        backends = _external_backends(config)
        model_name = "external"
    else:
        train_recs = ws.by_split["train"]
        val_recs = ws.by_split["val"]
        patho_train = filter_pathological(train_recs)
        patho_val = filter_pathological(val_recs)
        backends = {}
        model_name = config.model_name

        t1_model, _ = _train_task(
            ws, train_recs, val_recs, builtin_label_space("T1"), config.oversample_t1, seed, "T1"
        )
        classifier.save_model(t1_model, out / "models" / f"T1_run{run_index:02d}_seed{seed}")
        backends["T1"] = ModelBackend(t1_model, features_map)

        for task in ("T2", "T3"):
            if task not in config.tasks:
                continue
            if want_cascade:
                model, _ = _train_task(
                    ws, patho_train, patho_val, builtin_label_space(task),
                    config.oversample_multiplier, seed, f"{task}-cascade",
                )
                classifier.save_model(
                    model, out / "models" / f"{task}_cascade_run{run_index:02d}_seed{seed}"
                )
                backends[f"{task}-cascade"] = ModelBackend(model, features_map)
            if want_flat:
                model, _ = _train_task(
                    ws, train_recs, val_recs, flat_label_space(task),
                    config.oversample_multiplier, seed, f"{task}-flat",
                )
                classifier.save_model(
                    model, out / "models" / f"{task}_flat_run{run_index:02d}_seed{seed}"
                )
                backends[f"{task}-flat"] = ModelBackend(model, features_map)

    runs: list[RunResult] = []
    external = config.backend == "external-probs"

    if want_cascade:
        cconfig = CascadeConfig(
            t1_backend=backends["T1"],
            t2_backend=backends.get("T2" if external else "T2-cascade"),
            t3_backend=backends.get("T3" if external else "T3-cascade"),
        )
        scores = evaluate_cascade(cconfig, test_recs, features_map, mode="end-to-end")
        predictions = route_all(cconfig, test_recs, features_map)
        pred_dir = out / "predictions"
        pred_dir.mkdir(parents=True, exist_ok=True)
        cascade_mod.save_predictions(
            pred_dir / f"cascade_run{run_index:02d}_seed{seed}.jsonl", predictions
        )
        for task in config.tasks:
            if task in scores:
                runs.append(_score_to_run(scores[task], model_name, "cascade", seed, run_index))

    if want_flat:
        flat_backends = {}
        for task in config.tasks:
            key = task if (external or task == "T1") else f"{task}-flat"
            if key in backends:
                flat_backends[task] = backends[key]
        scores = evaluate_flat(flat_backends, test_recs, features_map)
        for task in config.tasks:
            if task in scores:
                runs.append(_score_to_run(scores[task], model_name, "flat", seed, run_index))

    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    save_runs(runs_dir / f"run{run_index:02d}_seed{seed}.jsonl", runs)
    return runs


def run_experiment(config: ExperimentConfig):
    """Run every seed, aggregate, and emit report.{json,md,csv}.

    Returns (runs, report). Artifacts land under ``config.out_dir``.
    """
    out = Path(config.out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    ws = prepare_workspace(config)
    ws.assignment.save(out / "split.json", ws.records)
    (out / "experiment.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))

    indexed = list(enumerate(config.seeds))
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(lambda iv: run_one_seed(ws, iv[1], iv[0]), indexed))
    else:
        results = [run_one_seed(ws, seed, idx) for idx, seed in indexed]

    runs = [r for seed_runs in results for r in seed_runs]
    report = build_report(runs)
    emit(report, "json", out / "report.json")
    emit(report, "markdown", out / "report.md")
    emit(report, "csv", out / "report.csv")
    return runs, report


# ---------------------------------------------------------------------------
# hyperparameter-search objective over the stand-in pipeline


def make_classification_objective(config: ExperimentConfig, task: str = "T1"):
    """Objective for the search engine: train the stand-in model for
    ``task`` with the trial's hyperparameters, return validation Macro F1.

    Trial keys consumed when present: learning_rate, accumulation_steps,
    oversample_multiplier, pitch_prob, pitch_min_semitones,
    pitch_max_semitones, noise_prob, noise_max_amplitude. A sampled
    (min, max) semitone pair arriving out of order is sorted.
    """
    ws = prepare_workspace(config)
    if task == "T1":
        train_recs = ws.by_split["train"]
        val_recs = ws.by_split["val"]
        space = builtin_label_space("T1")
    else:
        train_recs = filter_pathological(ws.by_split["train"])
        val_recs = filter_pathological(ws.by_split["val"])
        space = builtin_label_space(task)

    def objective(trial_config: dict, seed: int) -> float:
        lo, hi = sorted(
            (
                int(trial_config.get("pitch_min_semitones", 0)),
                int(trial_config.get("pitch_max_semitones", 0)),
            )
        )
        policy = AugmentationPolicy(
            noise_prob=float(trial_config.get("noise_prob", 0.0)),
            noise_max_amplitude=float(trial_config.get("noise_max_amplitude", 0.0)),
            pitch_prob=float(trial_config.get("pitch_prob", 0.0)),
            pitch_min_semitones=lo,
            pitch_max_semitones=hi,
            gender_strategy=config.policy.gender_strategy,
        )
        trial_ws = Workspace(
            config=_override(config, policy, trial_config),
            records=ws.records,
            assignment=ws.assignment,
            by_split=ws.by_split,
            clips=ws.clips,
            base_features=ws.base_features,
            feature_config=ws.feature_config,
        )
        multiplier = int(trial_config.get("oversample_multiplier", 1))
        _, trace = _train_task(trial_ws, train_recs, val_recs, space, multiplier, seed, f"hpo-{task}")
        return trace["best_val_macro_f1"]

    return objective


def _override(config: ExperimentConfig, policy: AugmentationPolicy, trial: dict) -> ExperimentConfig:
    d = config.to_dict()
    d["policy"] = policy
    d["learning_rate"] = float(trial.get("learning_rate", config.learning_rate))
    d["accumulation_steps"] = int(trial.get("accumulation_steps", config.accumulation_steps))
    d["seeds"] = tuple(config.seeds)
    d["ratios"] = tuple(config.ratios)
    d["tasks"] = tuple(config.tasks)
    return ExperimentConfig(**d)
