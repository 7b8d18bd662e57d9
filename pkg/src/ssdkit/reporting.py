"""Multi-seed aggregation and report emission.

Runs are aggregated per (model, mode, task) as mean and sample (n-1)
standard deviation; the delta-F1 column is the cascade mean minus the
flat mean for the same model and task. Every emitted number recomputes
from the raw runs, which the JSON report carries verbatim.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass
class RunResult:
    run_id: str
    model: str
    task: str
    mode: str  # "cascade" | "flat"
    seed: int
    macro_f1: float
    macro_recall: float
    per_gender: dict = field(default_factory=dict)
    confusion: Optional[list] = None
    n_records: int = 0
    n_unscored: int = 0
    asr: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


def save_runs(path, runs: Sequence[RunResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for run in runs:
            fh.write(json.dumps(run.to_dict(), sort_keys=True) + "\n")


def load_runs(path) -> list[RunResult]:
    runs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                runs.append(RunResult.from_dict(json.loads(line)))
    return runs


def _mean_std(values: Sequence[float]) -> dict:
    values = np.asarray(list(values), dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return {"mean": mean, "std": std}


def aggregate_seeds(runs: Sequence[RunResult]) -> dict:
    """mu +- sigma of each metric over the runs of one (model, task, mode).

    sigma is the sample standard deviation (0 for a single run, which is
    flagged through ``n``); mixing tasks, modes, or models is an error.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    keys = {(r.model, r.task, r.mode) for r in runs}
    if len(keys) > 1:
        raise ValueError(f"cannot aggregate mixed groups: {sorted(keys)}")
    (model, task, mode) = next(iter(keys))

    genders = sorted({g for r in runs for g in r.per_gender})
    per_gender = {}
    for g in genders:
        with_g = [r for r in runs if g in r.per_gender]
        per_gender[g] = {
            "macro_f1": _mean_std([r.per_gender[g]["macro_f1"] for r in with_g]),
            "macro_recall": _mean_std([r.per_gender[g]["macro_recall"] for r in with_g]),
            "n_runs": len(with_g),
        }
    return {
        "model": model,
        "task": task,
        "mode": mode,
        "n": len(runs),
        "seeds": sorted(r.seed for r in runs),
        "run_ids": sorted(r.run_id for r in runs),
        "macro_f1": _mean_std([r.macro_f1 for r in runs]),
        "macro_recall": _mean_std([r.macro_recall for r in runs]),
        "per_gender": per_gender,
    }


@dataclass
class MetricReport:
    groups: list = field(default_factory=list)
    delta_f1: list = field(default_factory=list)
    runs: list = field(default_factory=list)  # raw RunResult dicts
    notices: list = field(default_factory=list)

    def group(self, model: str, task: str, mode: str) -> Optional[dict]:
        for g in self.groups:
            if (g["model"], g["task"], g["mode"]) == (model, task, mode):
                return g
        return None

    def to_dict(self) -> dict:
        return {
            "groups": self.groups,
            "delta_f1": self.delta_f1,
            "runs": self.runs,
            "notices": self.notices,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            groups=d["groups"],
            delta_f1=d["delta_f1"],
            runs=d["runs"],
            notices=d.get("notices", []),
        )


def build_report(runs: Sequence[RunResult]) -> MetricReport:
    """Aggregate runs and compute the cascade-minus-flat delta per task."""
    if not runs:
        raise ValueError("need at least one run")
    grouped = defaultdict(list)
    for r in runs:
        grouped[(r.model, r.task, r.mode)].append(r)
    groups = [aggregate_seeds(v) for _, v in sorted(grouped.items())]

    deltas = []
    by_key = {(g["model"], g["task"], g["mode"]): g for g in groups}
    for (model, task, mode), g in sorted(by_key.items()):
        if mode != "cascade":
            continue
        flat = by_key.get((model, task, "flat"))
        if flat is not None:
            deltas.append(
                {
                    "model": model,
                    "task": task,
                    "delta_f1": g["macro_f1"]["mean"] - flat["macro_f1"]["mean"],
                }
            )
    return MetricReport(
        groups=groups,
        delta_f1=deltas,
        runs=[r.to_dict() for r in runs],
    )


# ---------------------------------------------------------------------------
# gender table


@dataclass
class GenderTable:
    columns: list  # (gender, task) pairs
    rows: list  # {"model","mode","cells": {f"{gender}|{task}": "mu +- sigma"}}
    notices: list = field(default_factory=list)

    def to_markdown(self) -> str:
        header = ["Model", "Mode"] + [f"{g} {t}" for g, t in self.columns]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for row in self.rows:
            cells = [row["model"], row["mode"]]
            for g, t in self.columns:
                cells.append(row["cells"].get(f"{g}|{t}", "-"))
            lines.append("| " + " | ".join(cells) + " |")
        for note in self.notices:
            lines.append(f"\n*{note}*")
        return "\n".join(lines)


def _fmt(ms: dict) -> str:
    return f"{ms['mean']:.3f} ± {ms['std']:.3f}"


def gender_table(runs: Sequence[RunResult]) -> GenderTable:
    """Per-gender Macro F1 table: rows (model, mode), columns gender x task."""
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    notices = []
    genders = sorted({g for r in runs for g in r.per_gender})
    tasks = sorted({r.task for r in runs})
    if not genders:
        notices.append("no runs carry gender-stratified metrics; overall metrics only")
        return GenderTable(columns=[], rows=[], notices=notices)
    for g in ("female", "male"):
        if g not in genders and any(r.per_gender for r in runs):
            notices.append(f"gender {g!r} absent from all runs; column omitted")

    grouped = defaultdict(list)
    for r in runs:
        grouped[(r.model, r.mode)].append(r)
    columns = [(g, t) for g in genders for t in tasks]
    rows = []
    for (model, mode), group_runs in sorted(grouped.items()):
        cells = {}
        for g, t in columns:
            vals = [
                r.per_gender[g]["macro_f1"]
                for r in group_runs
                if r.task == t and g in r.per_gender
            ]
            if vals:
                cells[f"{g}|{t}"] = _fmt(_mean_std(vals))
        rows.append({"model": model, "mode": mode, "cells": cells})
    return GenderTable(columns=columns, rows=rows, notices=notices)


# ---------------------------------------------------------------------------
# emission


def _markdown_report(report: MetricReport, runs: list[RunResult]) -> str:
    tasks = sorted({g["task"] for g in report.groups})
    has_flat = any(g["mode"] == "flat" for g in report.groups)
    delta_by = {(d["model"], d["task"]): d["delta_f1"] for d in report.delta_f1}

    header = ["Model", "Mode"]
    for t in tasks:
        header.append(f"{t} F1")
        if has_flat:
            header.append(f"{t} Δ F1")
        header.append(f"{t} Recall")
    lines = ["# Results", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]

    pairs = sorted({(g["model"], g["mode"]) for g in report.groups})
    for model, mode in pairs:
        row = [model, mode]
        for t in tasks:
            g = report.group(model, t, mode)
            row.append(_fmt(g["macro_f1"]) if g else "-")
            if has_flat:
                d = delta_by.get((model, t))
                row.append(f"{d:+.3f}" if (mode == "cascade" and d is not None) else "-")
            row.append(_fmt(g["macro_recall"]) if g else "-")
        lines.append("| " + " | ".join(row) + " |")

    gtable = gender_table(runs)
    if gtable.rows or gtable.notices:
        lines += ["", "## Gender-stratified Macro F1", "", gtable.to_markdown()]
    if report.notices:
        lines += [""] + [f"*{n}*" for n in report.notices]
    return "\n".join(lines) + "\n"


def emit(report: MetricReport, fmt: str, path) -> None:
    """Write the report as markdown, csv, or json (JSON round-trips)."""
    path = Path(path)
    runs = [RunResult.from_dict(d) for d in report.runs]
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    elif fmt == "markdown":
        path.write_text(_markdown_report(report, runs))
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "mode", "task", "gender", "metric", "mean", "std", "n"])
            for g in report.groups:
                for metric in ("macro_f1", "macro_recall"):
                    writer.writerow(
                        [g["model"], g["mode"], g["task"], "overall", metric,
                         repr(g[metric]["mean"]), repr(g[metric]["std"]), g["n"]]
                    )
                for gender, stats in g["per_gender"].items():
                    for metric in ("macro_f1", "macro_recall"):
                        writer.writerow(
                            [g["model"], g["mode"], g["task"], gender, metric,
                             repr(stats[metric]["mean"]), repr(stats[metric]["std"]),
                             stats["n_runs"]]
                        )
    else:
        raise ValueError(f"unknown format: {fmt}")
