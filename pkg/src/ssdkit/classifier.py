"""Trainable probabilistic classifiers plus an adapter for externally
produced probabilities.

The trainable family is softmax regression with an optional tanh hidden
layer, fitted by plain mini-batch gradient descent with literal gradient
accumulation (micro-batch gradients are summed, then one step). The
returned model is the epoch checkpoint with the best validation Macro
F1. Features are standardized internally during optimization and the
scaler is folded back into the affine weights, so a serialized model is
just matrices.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import metrics
from .dataset import LabelSpace, builtin_label_space
from .features import FeatureVector
from .seeding import spawn_rng

CLAMP_EPS = 1e-12


class TrainingDivergedError(RuntimeError):
    pass


class ExternalProbsError(ValueError):
    pass


class MissingRecordError(KeyError):
    pass


def validate_prob_dist(p: np.ndarray, k: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("probability vector must be 1-D")
    if k is not None and p.size != k:
        raise ValueError(f"expected {k} probabilities, got {p.size}")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and in [0, 1]")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    return p


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ClassifierModel:
    label_space: LabelSpace
    weights: np.ndarray  # (D, K) or (H, K) with a hidden layer
    bias: np.ndarray  # (K,)
    fingerprint: str = ""
    hidden_weights: Optional[np.ndarray] = None  # (D, H)
    hidden_bias: Optional[np.ndarray] = None  # (H,)

    @property
    def n_features(self) -> int:
        if self.hidden_weights is not None:
            return self.hidden_weights.shape[0]
        return self.weights.shape[0]


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    accumulation_steps: int = 1
    class_weights: Optional[np.ndarray] = None
    hidden_width: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.accumulation_steps < 1:
            raise ValueError("batch_size and accumulation_steps must be >= 1")
        if self.hidden_width < 0:
            raise ValueError("hidden_width must be >= 0")


def weighted_ce(dist: np.ndarray, gold: int, weights: Sequence[float]):
    """Weighted cross-entropy of one probability vector.

    loss = -w_gold * log(p_gold); gradient w.r.t. the logits is
    w_gold * (p - onehot(gold)). p_gold below CLAMP_EPS is clamped.
    """
    dist = validate_prob_dist(dist)
    weights = np.asarray(weights, dtype=np.float64)
    if not 0 <= gold < dist.size:
        raise ValueError("gold index out of range")
    if weights.shape != dist.shape:
        raise ValueError("weights must match the distribution length")
    w = float(weights[gold])
    p_gold = max(float(dist[gold]), CLAMP_EPS)
    loss = -w * np.log(p_gold)
    grad = w * dist.copy()
    grad[gold] -= w
    return float(loss), grad


def _forward(params: dict, x: np.ndarray):
    if "w1" in params:
        z1 = x @ params["w1"] + params["b1"]
        a = np.tanh(z1)
        return a @ params["w"] + params["b"], a
    return x @ params["w"] + params["b"], None


def _batch_loss_grads(params: dict, x: np.ndarray, y: np.ndarray, w: np.ndarray):
    # overflow/nan here surfaces through the finiteness check in train()
    with np.errstate(over="ignore", invalid="ignore"):
        logits, hidden = _forward(params, x)
        probs = softmax(logits)
        n = x.shape[0]
        p_gold = probs[np.arange(n), y]
        clamped = int(np.sum(p_gold < CLAMP_EPS))
        wy = w[y]
        loss = float(np.mean(-wy * np.log(np.maximum(p_gold, CLAMP_EPS))))

        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits *= (wy / n)[:, None]

        grads = {}
        if hidden is not None:
            grads["w"] = hidden.T @ dlogits
            grads["b"] = dlogits.sum(axis=0)
            da = dlogits @ params["w"].T
            dz1 = da * (1.0 - hidden * hidden)
            grads["w1"] = x.T @ dz1
            grads["b1"] = dz1.sum(axis=0)
        else:
            grads["w"] = x.T @ dlogits
            grads["b"] = dlogits.sum(axis=0)
    return loss, grads, clamped


def _fold_scaler(params: dict, mu: np.ndarray, sd: np.ndarray) -> dict:
    """Rewrite first-layer weights so raw features reproduce the
    standardized-model outputs exactly."""
    out = {k: v.copy() for k, v in params.items()}
    first_w = "w1" if "w1" in out else "w"
    first_b = "b1" if "w1" in out else "b"
    out[first_w] = params[first_w] / sd[:, None]
    out[first_b] = params[first_b] - mu @ out[first_w]
    return out


def train(
    x: np.ndarray,
    y: Sequence[int],
    x_val: np.ndarray,
    y_val: Sequence[int],
    label_space: LabelSpace,
    config: TrainConfig,
    fingerprint: str = "",
):
    """Fit a classifier; returns (model, trace).

    The trace records per-epoch mean batch loss and validation Macro F1;
    the returned model is the best-F1 epoch (earliest on ties). Raises
    TrainingDivergedError on a non-finite loss.
    """
    x = np.asarray(x, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("training features/labels disagree")
    if x_val.shape[0] != y_val.size:
        raise ValueError("validation features/labels disagree")
    k = len(label_space.classes)
    if len(np.unique(y)) < 2:
        raise ValueError("need at least 2 classes present in training labels")

    w = (
        np.ones(k)
        if config.class_weights is None
        else np.asarray(config.class_weights, dtype=np.float64)
    )
    if w.shape != (k,):
        raise ValueError("class_weights must have one entry per class")

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-8, 1.0, sd)
    xs = (x - mu) / sd
    xs_val = (x_val - mu) / sd

    d = x.shape[1]
    rng = np.random.default_rng(config.seed)
    if config.hidden_width > 0:
        h = config.hidden_width
        params = {
            "w1": rng.standard_normal((d, h)) / np.sqrt(d),
            "b1": np.zeros(h),
            "w": rng.standard_normal((h, k)) / np.sqrt(h),
            "b": np.zeros(k),
        }
    else:
        params = {"w": np.zeros((d, k)), "b": np.zeros(k)}

    n = x.shape[0]
    best = None
    epochs_trace = []
    clamp_events = 0
    for epoch in range(config.epochs):
        order = spawn_rng(config.seed, "epoch", epoch).permutation(n)
        acc = {key: np.zeros_like(val) for key, val in params.items()}
        pending = 0
        losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads, clamped = _batch_loss_grads(params, xs[batch], y[batch], w)
            clamp_events += clamped
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            losses.append(loss)
            for key in acc:
                acc[key] += grads[key]
            pending += 1
            if pending == config.accumulation_steps:
                for key in params:
                    params[key] -= config.learning_rate * acc[key]
                    acc[key][:] = 0.0
                pending = 0
        if pending:  # flush the partial accumulation at epoch end
            for key in params:
                params[key] -= config.learning_rate * acc[key]

        if xs_val.shape[0]:
            logits, _ = _forward(params, xs_val)
            preds = [label_space.classes[i] for i in np.argmax(logits, axis=1)]
            golds = [label_space.classes[i] for i in y_val]
            val_f1 = metrics.macro_f1(preds, golds, label_space.classes)
        else:
            val_f1 = 0.0
        epochs_trace.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_macro_f1": val_f1}
        )
        if best is None or val_f1 > best[0]:
            best = (val_f1, epoch, {key: val.copy() for key, val in params.items()})

    _, best_epoch, best_params = best
    folded = _fold_scaler(best_params, mu, sd)
    model = ClassifierModel(
        label_space=label_space,
        weights=folded["w"],
        bias=folded["b"],
        fingerprint=fingerprint,
        hidden_weights=folded.get("w1"),
        hidden_bias=folded.get("b1"),
    )
    trace = {
        "epochs": epochs_trace,
        "best_epoch": best_epoch,
        "best_val_macro_f1": best[0],
        "clamp_events": clamp_events,
    }
    return model, trace


def predict_batch(model: ClassifierModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ValueError(f"feature dim {x.shape[1]} != model dim {model.n_features}")
    if model.hidden_weights is not None:
        x = np.tanh(x @ model.hidden_weights + model.hidden_bias)
    return softmax(x @ model.weights + model.bias)


def predict(model: ClassifierModel, feature) -> np.ndarray:
    """Probability vector for one feature vector (fingerprint-checked
    when given a FeatureVector)."""
    if isinstance(feature, FeatureVector):
        if model.fingerprint and feature.fingerprint != model.fingerprint:
            raise ValueError(
                f"feature fingerprint {feature.fingerprint} != model {model.fingerprint}"
            )
        values = feature.values
    else:
        values = np.asarray(feature, dtype=np.float64)
    return predict_batch(model, values)[0]


# ---------------------------------------------------------------------------
# serialization: JSON header + flat little-endian float32 weights

_PART_ORDER = ("hidden_weights", "hidden_bias", "weights", "bias")


def save_model(model: ClassifierModel, path_base) -> None:
    base = Path(path_base)
    header = {
        "task": model.label_space.task,
        "classes": list(model.label_space.classes),
        "n_features": int(model.n_features),
        "hidden_width": 0 if model.hidden_weights is None else int(model.hidden_weights.shape[1]),
        "fingerprint": model.fingerprint,
        "dtype": "float32",
        "order": [p for p in _PART_ORDER if getattr(model, p) is not None],
    }
    parts = [
        np.ascontiguousarray(getattr(model, p), dtype="<f4").ravel() for p in header["order"]
    ]
    base.with_suffix(".json").write_text(json.dumps(header, indent=2))
    base.with_suffix(".bin").write_bytes(b"".join(p.tobytes() for p in parts))


def load_model(path_base) -> ClassifierModel:
    base = Path(path_base)
    header = json.loads(base.with_suffix(".json").read_text())
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f4").astype(np.float64)
    d = header["n_features"]
    h = header["hidden_width"]
    k = len(header["classes"])
    shapes = {
        "hidden_weights": (d, h),
        "hidden_bias": (h,),
        "weights": (d if h == 0 else h, k),
        "bias": (k,),
    }
    fields = {}
    pos = 0
    for part in header["order"]:
        size = int(np.prod(shapes[part]))
        fields[part] = raw[pos : pos + size].reshape(shapes[part])
        pos += size
    if pos != raw.size:
        raise ValueError("model binary size does not match header")
    return ClassifierModel(
        label_space=LabelSpace(header["task"], tuple(header["classes"])),
        weights=fields["weights"],
        bias=fields["bias"],
        fingerprint=header.get("fingerprint", ""),
        hidden_weights=fields.get("hidden_weights"),
        hidden_bias=fields.get("hidden_bias"),
    )


# ---------------------------------------------------------------------------
# backends: a uniform "probabilities for a record" surface


class ModelBackend:
    """Serve predictions from a trained model, optionally via a stored
    id -> feature mapping."""

    def __init__(self, model: ClassifierModel, features: Mapping | None = None):
        self.model = model
        self.features = features

    @property
    def label_space(self) -> LabelSpace:
        return self.model.label_space

    def probs_for(self, record_id: str, feature=None) -> np.ndarray:
        if feature is None:
            if self.features is None or record_id not in self.features:
                raise MissingRecordError(record_id)
            feature = self.features[record_id]
        return predict(self.model, feature)


class ExternalProbBackend:
    """Replay probabilities produced outside the toolkit."""

    def __init__(self, label_space: LabelSpace, probs: Mapping[str, np.ndarray]):
        self.label_space = label_space
        self._probs = dict(probs)

    def ids(self):
        return self._probs.keys()

    def probs_for(self, record_id: str, feature=None) -> np.ndarray:
        if record_id not in self._probs:
            raise MissingRecordError(record_id)
        return self._probs[record_id]


def load_external_probs(path, label_space: LabelSpace) -> ExternalProbBackend:
    """Read JSON-Lines of {id, probs} into a queryable backend.

    Vectors off unity by more than 1e-6 but within 1e-3 are renormalized
    with a warning; anything worse is rejected.
    """
    table: dict[str, np.ndarray] = {}
    k = len(label_space.classes)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExternalProbsError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if "id" not in obj or "probs" not in obj:
                raise ExternalProbsError(f"line {lineno}: need 'id' and 'probs'")
            rid = str(obj["id"])
            if rid in table:
                raise ExternalProbsError(f"line {lineno}: duplicate id {rid!r}")
            p = np.asarray(obj["probs"], dtype=np.float64)
            if p.shape != (k,):
                raise ExternalProbsError(
                    f"line {lineno}: expected {k} probabilities, got {p.shape}"
                )
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ExternalProbsError(f"line {lineno}: probabilities must be finite and >= 0")
            total = float(p.sum())
            if abs(total - 1.0) > 1e-3:
                raise ExternalProbsError(
                    f"line {lineno}: probabilities sum to {total:.6f}, outside tolerance"
                )
            if abs(total - 1.0) > 1e-6:
                warnings.warn(
                    f"{path}: line {lineno}: renormalizing probabilities (sum {total:.6f})",
                    stacklevel=2,
                )
                p = p / total
            table[rid] = p
    return ExternalProbBackend(label_space, table)
