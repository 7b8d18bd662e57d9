"""Command-line surface: split, run, asr-eval, search, augment.

A JSON config file can preload any run/search option; explicit flags win
over the file, which wins over defaults. Exit codes: 0 success, 2 usage
error, 3 data error (bad files, schemas, values), 4 runtime failure.
The SSDKIT_OUT environment variable supplies a default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import hpo
from .audio_io import WavError, write_wav
from .augment import AugmentationPolicy, apply_policy
from .classifier import ExternalProbsError, TrainingDivergedError
from .dataset import (
    DEFAULT_RATIOS,
    ManifestError,
    SplitError,
    load_manifest,
    split,
)
from .experiment import (
    DEFAULT_SEEDS,
    ExperimentConfig,
    make_classification_objective,
    prepare_workspace,
    run_experiment,
)
from .metrics import evaluate_pairs
from .seeding import derive_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

_DATA_ERRORS = (
    ManifestError,
    SplitError,
    WavError,
    ExternalProbsError,
    FileNotFoundError,
    ValueError,
    KeyError,
)

ENV_OUT = "SSDKIT_OUT"


def _default_out(name: str) -> str | None:
    root = os.environ.get(ENV_OUT)
    return str(Path(root) / name) if root else None


def _parse_ratios(text: str) -> tuple:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("ratios must be three comma-separated numbers")
    return tuple(parts)


def _parse_seeds(text: str) -> tuple:
    return tuple(int(p) for p in text.split(",") if p.strip() != "")


def _parse_tasks(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _parse_probs(entries) -> dict:
    out = {}
    for entry in entries or []:
        if "=" not in entry:
            raise ValueError(f"--probs expects TASK=path, got {entry!r}")
        task, path = entry.split("=", 1)
        out[task.strip()] = path.strip()
    return out


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merged(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """flags > config file > default (flags parse to None when absent)."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


# ---------------------------------------------------------------------------
# subcommands


def _cmd_split(args) -> int:
    records = load_manifest(args.manifest)
    ratios = _parse_ratios(args.ratios) if isinstance(args.ratios, str) else args.ratios
    assignment = split(records, ratios, args.seed)
    assignment.save(args.out, records)
    counts = assignment.counts(records)
    for name, info in counts.items():
        print(f"{name}: {info['records']} records, {info['speakers']} speakers")
        for cell, n in info["cells"].items():
            print(f"  {cell}: {n}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _policy_from(args, file_cfg: dict) -> AugmentationPolicy:
    pol_cfg = dict(file_cfg.get("policy", {}))
    mapping = {
        "noise_prob": "noise_prob",
        "noise_max": "noise_max_amplitude",
        "pitch_prob": "pitch_prob",
        "pitch_min": "pitch_min_semitones",
        "pitch_max": "pitch_max_semitones",
        "gender_strategy": "gender_strategy",
    }
    for flag, key in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            pol_cfg[key] = value
    return AugmentationPolicy(**pol_cfg)


def _cmd_run(args) -> int:
    file_cfg = _load_config_file(args.config)
    out_dir = _merged(args, file_cfg, "out", _default_out("run"))
    if out_dir is None:
        raise ValueError("no output directory: pass --out or set " + ENV_OUT)
    seeds = _merged(args, file_cfg, "seeds", None)
    if isinstance(seeds, str):
        seeds = _parse_seeds(seeds)
    ratios = _merged(args, file_cfg, "ratios", None)
    if isinstance(ratios, str):
        ratios = _parse_ratios(ratios)
    tasks = _merged(args, file_cfg, "tasks", None)
    if isinstance(tasks, str):
        tasks = _parse_tasks(tasks)

    config = ExperimentConfig(
        manifest=_merged(args, file_cfg, "manifest", None) or _fail_missing("manifest"),
        out_dir=out_dir,
        ratios=tuple(ratios) if ratios else DEFAULT_RATIOS,
        split_seed=_merged(args, file_cfg, "split_seed", 0),
        seeds=tuple(seeds) if seeds else DEFAULT_SEEDS,
        mode=_merged(args, file_cfg, "mode", "both"),
        tasks=tuple(tasks) if tasks else ("T1", "T2", "T3"),
        backend=_merged(args, file_cfg, "backend", "standin"),
        probs_paths={**file_cfg.get("probs", {}), **_parse_probs(args.probs)},
        policy=_policy_from(args, file_cfg),
        learning_rate=_merged(args, file_cfg, "learning_rate", 0.1),
        epochs=_merged(args, file_cfg, "epochs", 20),
        batch_size=_merged(args, file_cfg, "batch_size", 32),
        accumulation_steps=_merged(args, file_cfg, "accumulation_steps", 1),
        hidden_width=_merged(args, file_cfg, "hidden_width", 0),
        oversample_multiplier=_merged(args, file_cfg, "oversample_multiplier", 1),
        oversample_t1=_merged(args, file_cfg, "oversample_t1", 1),
        class_weighting=False if args.no_class_weights else file_cfg.get("class_weighting", True),
        max_seconds=_merged(args, file_cfg, "max_seconds", 12.0),
        n_mels=_merged(args, file_cfg, "n_mels", 40),
        jobs=_merged(args, file_cfg, "jobs", 1),
    )
    try:
        runs, _ = run_experiment(config)
    except Exception as exc:
        marker = Path(out_dir) / "FAILED.txt"
        marker.parent.mkdir(parents=True, exist_ok=True)
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    print(f"{len(runs)} run results -> {out_dir}")
    return EXIT_OK


def _fail_missing(name: str):
    raise ValueError(f"missing required option: {name}")


def _cmd_asr_eval(args) -> int:
    pairs = []
    with open(args.pairs, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            for key in ("reference", "hypothesis"):
                if key not in obj:
                    raise ValueError(f"line {lineno}: missing {key!r}")
            pairs.append(obj)
    result = evaluate_pairs(pairs, exclude_vowel_descriptions=args.exclude_vowel_descriptions)
    if args.exclude_vowel_descriptions:
        print(f"excluded {result.n_excluded} vowel-description reference(s)")
    print(f"utterances scored: {result.n_utterances}")
    order = (
        "em", "token_f1", "wer_pooled", "wip_pooled", "mer_pooled", "cer_pooled",
        "wer_mean", "wip_mean", "mer_mean", "cer_mean",
    )
    for key in order:
        print(f"  {key:12s} {result.corpus[key]:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_search(args) -> int:
    if args.space != "classification":
        raise ValueError(
            "only the classification space is searchable with the stand-in "
            "trainer; the asr space exists for external fine-tuning sweeps"
        )
    space = hpo.builtin_spaces()[1]
    out = args.out or _default_out("search_history.jsonl")
    if out is None:
        raise ValueError("no history path: pass --out or set " + ENV_OUT)
    history = []
    if args.resume and Path(out).exists():
        history = hpo.load_history(out)
        print(f"resuming from {len(history)} trial(s)")
    if len(history) >= args.budget:
        print("history already meets the budget; nothing to do")
        return EXIT_OK

    config = ExperimentConfig(
        manifest=args.manifest,
        out_dir=str(Path(out).parent),
        split_seed=args.split_seed,
        epochs=args.epochs,
        tasks=("T1", "T2", "T3"),
        max_seconds=args.max_seconds,
    )
    objective = make_classification_objective(config, task=args.task)

    mode = "a" if history else "w"
    with open(out, mode, encoding="utf-8") as fh:

        def on_trial(trial):
            fh.write(trial.to_json_line() + "\n")
            fh.flush()
            shown = "failed" if trial.objective is None else f"{trial.objective:.4f}"
            print(f"trial {trial.trial_id}: {shown}")

        best, _ = hpo.run_search(
            space,
            objective,
            budget=args.budget,
            seed=args.seed,
            strategy=args.strategy,
            history=history,
            trial_callback=on_trial,
        )
    print(f"best trial {best.trial_id}: objective {best.objective:.4f}")
    print(json.dumps(best.config, sort_keys=True))
    return EXIT_OK


def _cmd_augment(args) -> int:
    records = load_manifest(args.manifest)
    policy = _policy_from(args, _load_config_file(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .audio_io import load_canonical

    n = 0
    with open(out / "augmentation_log.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            clip = load_canonical(rec.audio_path, max_seconds=args.max_seconds)
            seed = derive_seed(args.seed, "augment-export", rec.id)
            augmented, log = apply_policy(rec, clip, policy, seed)
            write_wav(augmented, out / f"{rec.id}.wav")
            fh.write(log.to_json_line() + "\n")
            n += 1
    print(f"augmented {n} clip(s) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="write a speaker-disjoint stratified split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default=",".join(str(r) for r in DEFAULT_RATIOS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("run", help="full multi-seed experiment")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--mode", choices=["cascade", "flat", "both"])
    p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--ratios")
    p.add_argument("--tasks", help="comma-separated subset of T1,T2,T3")
    p.add_argument("--backend", choices=["standin", "external-probs"])
    p.add_argument("--probs", action="append", metavar="TASK=FILE")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--accum", type=int, dest="accumulation_steps")
    p.add_argument("--hidden", type=int, dest="hidden_width")
    p.add_argument("--oversample", type=int, dest="oversample_multiplier")
    p.add_argument("--oversample-t1", type=int, dest="oversample_t1")
    p.add_argument("--no-class-weights", action="store_true")
    p.add_argument("--noise-prob", type=float)
    p.add_argument("--noise-max", type=float)
    p.add_argument("--pitch-prob", type=float)
    p.add_argument("--pitch-min", type=int)
    p.add_argument("--pitch-max", type=int)
    p.add_argument("--gender-strategy", choices=["toward-opposite", "random-sign", "stratified-rate"])
    p.add_argument("--max-seconds", type=float, dest="max_seconds")
    p.add_argument("--n-mels", type=int, dest="n_mels")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("asr-eval", help="score reference/hypothesis pairs")
    p.add_argument("--pairs", required=True, help="JSONL of {id, reference, hypothesis}")
    p.add_argument("--exclude-vowel-descriptions", action="store_true")
    p.add_argument("--out", help="write the full result as JSON")
    p.set_defaults(func=_cmd_asr_eval)

    p = sub.add_parser("search", help="hyperparameter search over the stand-in pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--space", default="classification", choices=["classification", "asr"])
    p.add_argument("--strategy", default="random", choices=["random", "tpe"])
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, dest="split_seed", default=0)
    p.add_argument("--task", default="T1", choices=["T1", "T2", "T3"])
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--max-seconds", type=float, dest="max_seconds", default=12.0)
    p.add_argument("--out", help="trial history JSONL")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("augment", help="batch-export augmented WAVs plus a JSONL log")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file with a 'policy' block")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-seconds", type=float, dest="max_seconds")
    p.add_argument("--noise-prob", type=float)
    p.add_argument("--noise-max", type=float)
    p.add_argument("--pitch-prob", type=float)
    p.add_argument("--pitch-min", type=int)
    p.add_argument("--pitch-max", type=int)
    p.add_argument("--gender-strategy", choices=["toward-opposite", "random-sign", "stratified-rate"])
    p.set_defaults(func=_cmd_augment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on usage errors and --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
