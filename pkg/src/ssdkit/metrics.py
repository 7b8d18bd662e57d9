"""Classification and transcription metrics.

Classification: Macro F1 / Macro Recall over a fixed label space, plus
confusion matrices (rows = gold, columns = predicted). Predictions may be
``None`` to mean "no usable prediction" (e.g. a sample the gating stage
never routed); such samples count against recall of their gold class but
earn no precision credit anywhere.

Transcription: Levenshtein-alignment error rates (WER, MER, WIP, CER),
exact match, and bag-of-token F1, with a shared transcript normalizer and
a detector for vowel-shape-description annotations that some references
carry instead of a plain transcription.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels

# ---------------------------------------------------------------------------
# classification metrics


def confusion_matrix(golds: Sequence, preds: Sequence, classes: Sequence) -> np.ndarray:
    """K x K count matrix, rows = gold, columns = predicted.

    Every gold and predicted label must be a member of ``classes``.
    """
    if len(golds) != len(preds):
        raise ValueError("golds and preds must have equal length")
    index = {c: k for k, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for g, p in zip(golds, preds):
        if g not in index:
            raise ValueError(f"gold label {g!r} not in label space")
        if p not in index:
            raise ValueError(f"predicted label {p!r} not in label space")
        cm[index[g], index[p]] += 1
    return cm


def _per_class_counts(golds, preds, classes):
    index = {c: k for k, c in enumerate(classes)}
    k = len(classes)
    tp = np.zeros(k)
    gold_n = np.zeros(k)
    pred_n = np.zeros(k)
    for g, p in zip(golds, preds):
        if g not in index:
            raise ValueError(f"gold label {g!r} not in label space")
        gold_n[index[g]] += 1
        if p is None:
            continue
        if p not in index:
            raise ValueError(f"predicted label {p!r} not in label space")
        pred_n[index[p]] += 1
        if p == g:
            tp[index[g]] += 1
    return tp, gold_n, pred_n


def per_class_scores(preds: Sequence, golds: Sequence, classes: Sequence) -> dict:
    """Per-class precision/recall/F1 plus the list of degenerate classes.

    A class absent from both golds and predictions scores 0 and is listed
    under ``absent`` so callers can flag it.
    """
    if len(preds) != len(golds):
        raise ValueError("preds and golds must have equal length")
    if len(golds) == 0:
        raise ValueError("empty input")
    tp, gold_n, pred_n = _per_class_counts(golds, preds, classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_n > 0, tp / np.maximum(pred_n, 1), 0.0)
        recall = np.where(gold_n > 0, tp / np.maximum(gold_n, 1), 0.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    absent = [c for k, c in enumerate(classes) if gold_n[k] + pred_n[k] == 0]
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": gold_n,
        "predicted": pred_n,
        "absent": absent,
    }


def macro_f1(preds: Sequence, golds: Sequence, classes: Sequence) -> float:
    """Unweighted mean of per-class F1 over the whole label space."""
    return float(np.mean(per_class_scores(preds, golds, classes)["f1"]))


def macro_recall(preds: Sequence, golds: Sequence, classes: Sequence) -> float:
    """Unweighted mean of per-class recall over the whole label space."""
    return float(np.mean(per_class_scores(preds, golds, classes)["recall"]))


# ---------------------------------------------------------------------------
# transcript normalization and annotation detection

_APOSTROPHES = str.maketrans({"’": "'", "ʼ": "'"})
_NON_WORD = re.compile(r"[^a-z0-9'\-\s]+")

_VOWEL_FEATURES = frozenset(
    {"close", "open", "mid", "front", "central", "back", "round", "unround", "vowel"}
)
_VOWEL_MARKERS = frozenset({"post-test", "no-context"})


def normalize_transcript(text: str) -> list[str]:
    """Lowercase, strip punctuation (keeping intra-word hyphens and
    apostrophes), collapse whitespace, and split into tokens."""
    text = text.lower().translate(_APOSTROPHES)
    text = _NON_WORD.sub(" ", text)
    tokens = []
    for tok in text.split():
        tok = tok.strip("-'")
        if tok:
            tokens.append(tok)
    return tokens


def contains_vowel_description(text: str) -> bool:
    """True when a transcript looks like a vowel-shape annotation.

    Detected tokens: the markers ``post-test`` / ``no-context``, and any
    hyphenated compound whose parts include "vowel" or at least two
    distinct articulatory feature terms (close/open/mid/front/central/
    back/round/unround). Requiring two distinct terms keeps ordinary
    compounds like "back-to-back" from matching.
    """
    for tok in normalize_transcript(text):
        if tok in _VOWEL_MARKERS:
            return True
        if "-" not in tok:
            continue
        hits = {p for p in tok.split("-") if p in _VOWEL_FEATURES}
        if "vowel" in hits or len(hits) >= 2:
            return True
    return False


# ---------------------------------------------------------------------------
# alignment and error rates


@dataclass(frozen=True)
class AlignmentCounts:
    """Operation counts of a minimum-edit-distance alignment."""

    hits: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def ref_len(self) -> int:
        return self.hits + self.substitutions + self.deletions

    @property
    def hyp_len(self) -> int:
        return self.hits + self.substitutions + self.insertions

    @property
    def edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: "AlignmentCounts") -> "AlignmentCounts":
        return AlignmentCounts(
            self.hits + other.hits,
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )


def align(ref_tokens: Sequence, hyp_tokens: Sequence) -> AlignmentCounts:
    """Minimum-edit alignment counts between two token sequences.

    Unit costs; backtrack ties resolved substitution > insertion > deletion.
    """
    vocab: dict = {}
    ref = np.fromiter(
        (vocab.setdefault(t, len(vocab)) for t in ref_tokens), dtype=np.int32, count=len(ref_tokens)
    )
    hyp = np.fromiter(
        (vocab.setdefault(t, len(vocab)) for t in hyp_tokens), dtype=np.int32, count=len(hyp_tokens)
    )
    h, s, d, i = _kernels.levenshtein_counts(ref, hyp)
    return AlignmentCounts(h, s, d, i)


def asr_rates(counts: AlignmentCounts) -> tuple[float, float, float]:
    """(WER, MER, WIP) from alignment counts.

    WER = (S+D+I)/N over the reference length N = H+S+D; MER normalizes by
    H+S+D+I; WIP = (H/N) * (H/N2) with N2 the hypothesis length. An empty
    reference against a non-empty hypothesis leaves WER undefined (NaN);
    two empty sequences score WER 0, MER 0, WIP 1.
    """
    n_ref = counts.ref_len
    n_hyp = counts.hyp_len
    if n_ref == 0 and n_hyp == 0:
        return 0.0, 0.0, 1.0
    if n_ref == 0:
        return math.nan, 1.0, 0.0
    wer = counts.edits / n_ref
    mer = counts.edits / (counts.hits + counts.edits)
    wip = 0.0 if n_hyp == 0 else (counts.hits / n_ref) * (counts.hits / n_hyp)
    return wer, mer, wip


def cer_counts(ref: str, hyp: str, normalize: bool = True) -> AlignmentCounts:
    """Character-level alignment counts (after transcript normalization)."""
    if normalize:
        ref = " ".join(normalize_transcript(ref))
        hyp = " ".join(normalize_transcript(hyp))
    return align(list(ref), list(hyp))


def cer(ref: str, hyp: str, normalize: bool = True) -> float:
    """Character error rate; NaN when the normalized reference is empty
    while the hypothesis is not."""
    counts = cer_counts(ref, hyp, normalize=normalize)
    return asr_rates(counts)[0]


def exact_match(ref: str, hyp: str) -> int:
    """1 iff the normalized token sequences are equal (two empties match)."""
    return int(normalize_transcript(ref) == normalize_transcript(hyp))


def token_f1(ref: str, hyp: str) -> float:
    """Harmonic mean of bag-of-token precision/recall with multiplicity."""
    rt = Counter(normalize_transcript(ref))
    ht = Counter(normalize_transcript(hyp))
    n_ref = sum(rt.values())
    n_hyp = sum(ht.values())
    if n_ref == 0 and n_hyp == 0:
        return 1.0
    common = sum((rt & ht).values())
    if common == 0:
        return 0.0
    precision = common / n_hyp
    recall = common / n_ref
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# corpus-level transcription evaluation


@dataclass
class AsrEvalResult:
    """Per-utterance and corpus-aggregate transcription metrics.

    ``corpus`` distinguishes pooled-count rates (sum of edits over sum of
    reference lengths) from means of per-utterance rates; the two answer
    different questions and are both reported.
    """

    n_utterances: int
    n_excluded: int
    per_utterance: list = field(default_factory=list)
    corpus: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_utterances": self.n_utterances,
            "n_excluded": self.n_excluded,
            "corpus": self.corpus,
            "per_utterance": self.per_utterance,
        }


def _mean_defined(values: list[float]) -> tuple[float, int]:
    defined = [v for v in values if not math.isnan(v)]
    if not defined:
        return math.nan, len(values)
    return float(np.mean(defined)), len(values) - len(defined)


def evaluate_pairs(
    pairs: Iterable[Mapping], exclude_vowel_descriptions: bool = False
) -> AsrEvalResult:
    """Score (reference, hypothesis) pairs.

    ``pairs`` holds mappings with keys ``id``, ``reference``,
    ``hypothesis``. With ``exclude_vowel_descriptions`` any pair whose
    reference is flagged by :func:`contains_vowel_description` is removed
    before scoring (the removed count is reported).
    """
    kept = []
    excluded = 0
    for pair in pairs:
        ref = pair["reference"]
        if exclude_vowel_descriptions and contains_vowel_description(ref):
            excluded += 1
            continue
        kept.append((str(pair.get("id", len(kept))), ref, pair["hypothesis"]))
    if not kept:
        raise ValueError("no utterances")

    per_utt = []
    word_total = AlignmentCounts(0, 0, 0, 0)
    char_total = AlignmentCounts(0, 0, 0, 0)
    for uid, ref, hyp in kept:
        counts = align(normalize_transcript(ref), normalize_transcript(hyp))
        wer, mer, wip = asr_rates(counts)
        ccounts = cer_counts(ref, hyp)
        utt_cer = asr_rates(ccounts)[0]
        word_total = word_total + counts
        char_total = char_total + ccounts
        per_utt.append(
            {
                "id": uid,
                "em": exact_match(ref, hyp),
                "token_f1": token_f1(ref, hyp),
                "wer": wer,
                "mer": mer,
                "wip": wip,
                "cer": utt_cer,
                "ref_words": counts.ref_len,
                "hyp_words": counts.hyp_len,
            }
        )

    pooled_wer, pooled_mer, pooled_wip = asr_rates(word_total)
    pooled_cer = asr_rates(char_total)[0]
    wer_mean, wer_undef = _mean_defined([u["wer"] for u in per_utt])
    cer_mean, cer_undef = _mean_defined([u["cer"] for u in per_utt])
    corpus = {
        "em": float(np.mean([u["em"] for u in per_utt])),
        "token_f1": float(np.mean([u["token_f1"] for u in per_utt])),
        "wer_pooled": pooled_wer,
        "mer_pooled": pooled_mer,
        "wip_pooled": pooled_wip,
        "cer_pooled": pooled_cer,
        "wer_mean": wer_mean,
        "mer_mean": float(np.mean([u["mer"] for u in per_utt])),
        "wip_mean": float(np.mean([u["wip"] for u in per_utt])),
        "cer_mean": cer_mean,
        "n_undefined_wer": wer_undef,
        "n_undefined_cer": cer_undef,
    }
    return AsrEvalResult(
        n_utterances=len(per_utt),
        n_excluded=excluded,
        per_utterance=per_utt,
        corpus=corpus,
    )
