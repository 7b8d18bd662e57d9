"""Hierarchical speech-disorder classification pipeline toolkit.

Desk-scale trainable classifiers, a cascading gate over the type and
symptom tasks, speaker-disjoint splitting, audio augmentation,
transcription metrics, hyperparameter search, and multi-seed reporting.
"""

from .audio_io import AudioClip, load_canonical, load_wav, resample, trim, write_wav
from .augment import AugmentationLog, AugmentationPolicy, add_gaussian_noise, apply_policy, pitch_shift
from .cascade import CascadeConfig, CascadePrediction, evaluate_cascade, evaluate_flat, route
from .classifier import (
    ClassifierModel,
    ModelBackend,
    TrainConfig,
    load_external_probs,
    predict,
    train,
    weighted_ce,
)
from .dataset import (
    LabelSpace,
    SampleRecord,
    SplitAssignment,
    builtin_label_space,
    class_weights,
    filter_pathological,
    load_manifest,
    oversample,
    split,
)
from .experiment import ExperimentConfig, run_experiment
from .features import FeatureConfig, FeatureVector, extract, log_mel_frames, pool_stats
from .hpo import SearchSpace, Trial, builtin_spaces, random_search, tpe_search, tpe_suggest
from .metrics import (
    AlignmentCounts,
    align,
    asr_rates,
    cer,
    contains_vowel_description,
    evaluate_pairs,
    exact_match,
    macro_f1,
    macro_recall,
    normalize_transcript,
    token_f1,
)
from .reporting import MetricReport, RunResult, aggregate_seeds, build_report, emit, gender_table

__version__ = "0.1.0"
