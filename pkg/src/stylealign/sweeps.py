"""Ablation harness: trains configuration grids and reports retrieval mAP.

Every configuration in a sweep shares the same data split and model
initialization seed; only the swept axis varies.  Assertions over sweep
results are directional (orderings), never absolute numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .metrics import EvalReport, retrieval_eval, similarity_matrix
from .model import Model, init_model, project
from .training import SchedulerCfg, StageCfg, run_stage1, run_stage2

HOLDOUT_FRAC = 0.2

SWEEP_AXES = ("lambda", "scheduler", "stages")


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    stage1: StageCfg
    stage2: StageCfg
    model_seed: int = 0
    model_d: int = 16
    model_hidden: int | None = None
    split_seed: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise SweepError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise SweepError("sweep values must be nonempty")


def split_dataset(d: Dataset, frac: float = HOLDOUT_FRAC, seed: int = 0):
    """Hold out the last `frac` of clips per cluster (tag 'cluster').

    Samples without a cluster tag are treated as one group.  The split is
    fixed by seed and by clip order within each group.
    """
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(d.samples):
        groups.setdefault(s.tags.get("cluster", ""), []).append(i)
    train_idx, held_idx = [], []
    for key in sorted(groups):
        members = groups[key]
        n_held = max(1, round(frac * len(members))) if len(members) > 1 else 0
        cut = len(members) - n_held
        train_idx.extend(members[:cut])
        held_idx.extend(members[cut:])
    train = replace(d, samples=tuple(d.samples[i] for i in sorted(train_idx)))
    held = replace(d, samples=tuple(d.samples[i] for i in sorted(held_idx)))
    return train, held


def evaluate_retrieval(model: Model, d: Dataset, kind: str) -> dict[str, EvalReport]:
    """Both retrieval directions over one caption per clip.

    The candidate caption for each clip is its first global or fine
    caption row, so the pool has exactly one relevant item per query.
    """
    if kind not in ("global", "fine"):
        raise SweepError(f"unknown caption kind {kind!r}")
    rows_attr = "global_caption_rows" if kind == "global" else "fine_caption_rows"
    clips = [s for s in d.samples if getattr(s, rows_attr)]
    if not clips:
        raise SweepError(f"no samples with {kind} captions")
    speech_X = d.speech_features.values[[s.speech_row for s in clips]].astype(np.float64)
    text_X = d.text_features.values[[getattr(s, rows_attr)[0] for s in clips]].astype(np.float64)
    S = project(model.speech_head, speech_X)
    T = project(model.text_head, text_X)
    sim = similarity_matrix(S, T)
    diag = np.arange(len(clips))
    return {
        "speech_to_text": retrieval_eval(sim, diag, direction="speech_to_text"),
        "text_to_speech": retrieval_eval(sim.T, diag, direction="text_to_speech"),
    }


def _map_columns(model: Model, held: Dataset) -> dict[str, float]:
    g = evaluate_retrieval(model, held, "global")
    f = evaluate_retrieval(model, held, "fine")
    return {
        "global_s2t": g["speech_to_text"].map_at_10,
        "global_t2s": g["text_to_speech"].map_at_10,
        "fine_s2t": f["speech_to_text"].map_at_10,
        "fine_t2s": f["text_to_speech"].map_at_10,
    }


@dataclass(frozen=True)
class SweepRow:
    label: str
    config: dict
    columns: dict[str, float]

    @property
    def average(self) -> float:
        return float(np.mean(list(self.columns.values())))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "config": self.config,
            **self.columns,
            "average": self.average,
        }


@dataclass(frozen=True)
class SweepReport:
    axis: str
    rows: tuple[SweepRow, ...]

    def row(self, label: str) -> SweepRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "rows": [r.to_dict() for r in self.rows]}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def render_table(self) -> str:
        cols = ["label", "global_s2t", "global_t2s", "fine_s2t", "fine_t2s", "average"]
        lines = [[r.label] + [f"{v:.4f}" for v in (*r.columns.values(), r.average)]
                 for r in self.rows]
        widths = [max(len(c), *(len(l[i]) for l in lines)) for i, c in enumerate(cols)]
        def fmt(parts):
            return "  ".join(p.ljust(w) for p, w in zip(parts, widths))
        return "\n".join([fmt(cols), fmt(["-" * w for w in widths]), *map(fmt, lines)])


def _fresh_model(spec: SweepSpec, d: Dataset) -> Model:
    return init_model(
        d.speech_features.dim,
        d.text_features.dim,
        d=spec.model_d,
        hidden=spec.model_hidden,
        seed=spec.model_seed,
    )


def run_sweep(spec: SweepSpec, dataset: Dataset) -> SweepReport:
    """Train each configuration from a shared init and evaluate held-out."""
    train, held = split_dataset(dataset, HOLDOUT_FRAC, spec.split_seed)
    rows = []
    for value in spec.values:
        label, model = _run_one(spec, train, value)
        rows.append(SweepRow(label=label, config=_describe(spec.axis, value),
                             columns=_map_columns(model, held)))
    return SweepReport(axis=spec.axis, rows=tuple(rows))


def _describe(axis: str, value) -> dict:
    if axis == "lambda":
        return {"lambda": value}
    if axis == "stages":
        return {"stages": value}
    sched: SchedulerCfg = value
    return {
        "kind": sched.kind,
        "p0": sched.p0,
        "p_min": sched.p_min,
        "T": sched.T,
    }


def _run_one(spec: SweepSpec, train: Dataset, value):
    model = _fresh_model(spec, train)
    try:
        if spec.axis == "stages":
            if value not in ("stage1_only", "stage2_only", "both"):
                raise SweepError(f"unknown stages value {value!r}")
            if value in ("stage1_only", "both"):
                model, _, _ = run_stage1(model, train, spec.stage1)
            if value in ("stage2_only", "both"):
                model, _, _ = run_stage2(model, train, spec.stage2)
            return value, model
        if spec.axis == "lambda":
            model, _, _ = run_stage1(model, train, spec.stage1)
            cfg = replace(spec.stage2, lam=float(value))
            model, _, _ = run_stage2(model, train, cfg)
            return f"lambda={value}", model
        # scheduler axis
        model, _, _ = run_stage1(model, train, spec.stage1)
        cfg = replace(spec.stage2, scheduler=value)
        model, _, _ = run_stage2(model, train, cfg)
        sched: SchedulerCfg = value
        label = (f"{sched.kind}:p0={sched.p0}" if sched.kind == "static"
                 else f"dynamic:p0={sched.p0},p_min={sched.p_min},T={sched.T}")
        return label, model
    except Exception as e:
        raise SweepError(f"configuration {_describe(spec.axis, value)} failed: {e}") from e
