"""Hyperparameter search: uniform random baseline and a
tree-structured-Parzen-estimator strategy, over declarative spaces.

The TPE step splits completed trials at the gamma quantile of the
objective (maximized), models good/bad densities per dimension (Gaussian
KDE with Scott's-rule bandwidth in log space for continuous dimensions,
prior-smoothed counts for discrete ones), draws candidates from the good
model, and proposes the best good/bad density ratio.

Objectives are callables ``objective(config, seed) -> float``; a raising
objective records a failed trial that still consumes budget.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .seeding import derive_seed, spawn_rng


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError("need 0 < lo < hi")


@dataclass(frozen=True)
class Categorical:
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("categorical set must be non-empty")


@dataclass(frozen=True)
class IntegerSet(Categorical):
    def __post_init__(self):
        super().__post_init__()
        if not all(isinstance(v, int) for v in self.values):
            raise ValueError("integer set must hold ints")


@dataclass(frozen=True)
class SearchSpace:
    name: str
    dims: Mapping[str, object]
    external_only: frozenset = frozenset()

    def is_fully_discrete(self) -> bool:
        return all(isinstance(d, Categorical) for d in self.dims.values())

    def contains(self, config: Mapping) -> bool:
        if set(config) != set(self.dims):
            return False
        for name, dim in self.dims.items():
            v = config[name]
            if isinstance(dim, LogUniform):
                if not (dim.lo <= v <= dim.hi):
                    return False
            elif v not in dim.values:
                return False
        return True


def builtin_spaces() -> tuple[SearchSpace, SearchSpace]:
    """(asr_space, classification_space) with the published value grids.

    The LoRA dimensions exist for external fine-tuning sweeps and are
    flagged external-only; the desk-scale trainer ignores them.
    """
    asr = SearchSpace(
        name="asr",
        dims={
            "learning_rate": LogUniform(1e-5, 5e-4),
            "lora_rank": IntegerSet((64, 96, 128)),
            "lora_dropout": Categorical((0.0, 0.1, 0.15, 0.2, 0.3)),
            "noise_prob": Categorical((0.4, 0.5, 0.6, 0.7, 0.8)),
            "noise_max_amplitude": Categorical((0.025, 0.035, 0.04, 0.05)),
            "pitch_max_semitones": IntegerSet((4, 6, 8, 10)),
        },
        external_only=frozenset({"lora_rank", "lora_dropout"}),
    )
    classification = SearchSpace(
        name="classification",
        dims={
            "learning_rate": LogUniform(1e-5, 1e-3),
            "accumulation_steps": IntegerSet((2, 4, 6)),
            "oversample_multiplier": IntegerSet((1, 3, 5, 8)),
            "pitch_prob": Categorical((0.2, 0.3, 0.5)),
            "pitch_min_semitones": IntegerSet((0, 1, 3, 4)),
            "pitch_max_semitones": IntegerSet((0, 4, 6, 8)),
        },
    )
    return asr, classification


@dataclass
class Trial:
    trial_id: int
    config: dict
    objective: Optional[float]
    status: str  # "complete" | "failed"
    seed: int

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "trial_id": self.trial_id,
                "config": self.config,
                "objective": self.objective,
                "status": self.status,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "Trial":
        return cls(**json.loads(line))


def save_history(path, trials: Sequence[Trial]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(t.to_json_line() + "\n")


def load_history(path) -> list[Trial]:
    trials = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                trials.append(Trial.from_json_line(line))
    return trials


# ---------------------------------------------------------------------------
# sampling


def sample_config(space: SearchSpace, rng: np.random.Generator) -> dict:
    config = {}
    for name in sorted(space.dims):
        dim = space.dims[name]
        if isinstance(dim, LogUniform):
            value = float(np.exp(rng.uniform(np.log(dim.lo), np.log(dim.hi))))
            config[name] = min(max(value, dim.lo), dim.hi)
        else:
            config[name] = dim.values[int(rng.integers(len(dim.values)))]
    return config


def _best_trial(history: Sequence[Trial]) -> Trial:
    complete = [t for t in history if t.status == "complete"]
    if not complete:
        raise RuntimeError("every trial failed")
    # earliest trial wins ties
    return max(complete, key=lambda t: (t.objective, -t.trial_id))


# ---------------------------------------------------------------------------
# TPE


def _mixture_logpdf(x: float, centers: np.ndarray, bandwidths: np.ndarray) -> float:
    z = (x - centers) / bandwidths
    dens = float(np.mean(np.exp(-0.5 * z * z) / (bandwidths * math.sqrt(2 * math.pi))))
    return math.log(max(dens, 1e-300))


def _scott_bandwidth(samples: np.ndarray, span: float) -> float:
    """Scott's rule with a floor of span / (n + 1): a degenerate cluster of
    near-identical samples must not collapse the kernels, or proposals
    freeze at the cluster instead of refining past it."""
    n = samples.size
    floor = span / min(100.0, n + 1.0)
    if n > 1:
        sd = float(np.std(samples, ddof=1))
        bw = sd * n ** (-0.2)
        if math.isfinite(bw):
            return float(min(max(bw, floor), span))
    return float(max(span / max(4, n), floor))


def _kde_components(samples: np.ndarray, lo: float, hi: float):
    """Kernel centers and bandwidths, including one range-wide prior
    kernel that keeps the tails explorable."""
    span = hi - lo
    bw = _scott_bandwidth(samples, span)
    centers = np.append(samples, (lo + hi) / 2.0)
    bandwidths = np.append(np.full(samples.size, bw), span)
    return centers, bandwidths


def tpe_suggest(
    history: Sequence[Trial],
    space: SearchSpace,
    rng: np.random.Generator,
    gamma: float = 0.25,
    n_startup: int = 10,
    n_candidates: int = 24,
    prior_weight: float = 1.0,
) -> dict:
    """Propose a configuration from the good/bad density ratio.

    Falls back to a uniform draw while history is shorter than
    ``n_startup``. Every proposal lies inside the space.
    """
    if len(history) < n_startup:
        return sample_config(space, rng)
    complete = [t for t in history if t.status == "complete"]
    if len(complete) < 2:
        return sample_config(space, rng)

    ranked = sorted(complete, key=lambda t: (-(t.objective), t.trial_id))
    n_good = max(1, math.ceil(gamma * len(ranked)))
    good, bad = ranked[:n_good], ranked[n_good:]
    if not bad:
        return sample_config(space, rng)

    dim_models = {}
    for name in sorted(space.dims):
        dim = space.dims[name]
        if isinstance(dim, LogUniform):
            log_lo, log_hi = math.log(dim.lo), math.log(dim.hi)
            g = _kde_components(np.log([t.config[name] for t in good]), log_lo, log_hi)
            b = _kde_components(np.log([t.config[name] for t in bad]), log_lo, log_hi)
            dim_models[name] = ("kde", g, b, dim)
        else:
            values = list(dim.values)
            gc = np.array([sum(1 for t in good if t.config[name] == v) for v in values], float)
            bc = np.array([sum(1 for t in bad if t.config[name] == v) for v in values], float)
            pg = (gc + prior_weight) / (len(good) + prior_weight * len(values))
            pb = (bc + prior_weight) / (len(bad) + prior_weight * len(values))
            dim_models[name] = ("cat", values, pg, pb)

    best_cfg, best_score = None, -math.inf
    for _ in range(n_candidates):
        cfg = {}
        score = 0.0
        for name in sorted(space.dims):
            model = dim_models[name]
            if model[0] == "kde":
                _, (gc, gbw), (bc, bbw), dim = model
                pick = int(rng.integers(gc.size))
                x = float(
                    np.clip(
                        gc[pick] + gbw[pick] * rng.standard_normal(),
                        math.log(dim.lo),
                        math.log(dim.hi),
                    )
                )
                cfg[name] = min(max(float(np.exp(x)), dim.lo), dim.hi)
                score += _mixture_logpdf(x, gc, gbw) - _mixture_logpdf(x, bc, bbw)
            else:
                _, values, pg, pb = model
                idx = int(rng.choice(len(values), p=pg / pg.sum()))
                cfg[name] = values[idx]
                score += math.log(pg[idx]) - math.log(pb[idx])
        if score > best_score:
            best_cfg, best_score = cfg, score
    return best_cfg


# ---------------------------------------------------------------------------
# search drivers


def run_search(
    space: SearchSpace,
    objective: Callable[[dict, int], float],
    budget: int,
    seed: int,
    strategy: str = "random",
    history: Optional[list[Trial]] = None,
    dedup: bool = False,
    trial_callback: Optional[Callable[[Trial], None]] = None,
    **tpe_params,
) -> tuple[Trial, list[Trial]]:
    """Run trials until the history holds ``budget`` of them.

    ``budget`` counts total trials including any resumed history, so a
    resumed search continues trial ids without duplication. Per-trial
    randomness derives from (seed, trial_id): at a given seed the t-th
    random-search draw is the same whether or not earlier trials were
    restored from disk.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if strategy not in ("random", "tpe"):
        raise ValueError("strategy must be 'random' or 'tpe'")
    history = list(history) if history else []

    enumeration = None
    if dedup:
        if strategy != "random":
            raise ValueError("dedup is a random-search option")
        if not space.is_fully_discrete():
            raise ValueError("dedup needs a fully discrete space")
        cells = [
            dict(zip(sorted(space.dims), combo))
            for combo in itertools.product(*(space.dims[n].values for n in sorted(space.dims)))
        ]
        enumeration = cells

    while len(history) < budget:
        t = len(history)
        rng = spawn_rng(seed, "trial", t)
        if strategy == "tpe":
            config = tpe_suggest(history, space, rng, **tpe_params)
        elif enumeration is not None:
            round_idx, offset = divmod(t, len(enumeration))
            perm = spawn_rng(seed, "round", round_idx).permutation(len(enumeration))
            config = dict(enumeration[perm[offset]])
        else:
            config = sample_config(space, rng)

        trial_seed = derive_seed(seed, "objective", t)
        try:
            value = float(objective(config, trial_seed))
            trial = Trial(t, config, value, "complete", trial_seed)
        except Exception:
            trial = Trial(t, config, None, "failed", trial_seed)
        history.append(trial)
        if trial_callback is not None:
            trial_callback(trial)

    return _best_trial(history), history


def random_search(
    space: SearchSpace,
    objective: Callable[[dict, int], float],
    budget: int,
    seed: int,
    dedup: bool = False,
) -> tuple[Trial, list[Trial]]:
    return run_search(space, objective, budget, seed, strategy="random", dedup=dedup)


def tpe_search(
    space: SearchSpace,
    objective: Callable[[dict, int], float],
    budget: int,
    seed: int,
    **tpe_params,
) -> tuple[Trial, list[Trial]]:
    return run_search(space, objective, budget, seed, strategy="tpe", **tpe_params)
