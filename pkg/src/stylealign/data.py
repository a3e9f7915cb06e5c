"""Feature store: paired speech/caption embeddings, manifest I/O, batching.

A dataset is a directory holding two raw float32 blobs (one per modality),
a JSON manifest describing per-clip structure, and a JSONL file with the
caption texts.  Everything downstream (training, evaluation) works on this
in-memory representation; features are produced elsewhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_VERSION = 1

STAGE1 = "stage1"
TASK1 = "task1"
TASK2 = "task2"

# rng namespace constants so different random streams never collide
_NS_PERM = 101
_NS_CAPTION = 102


class DatasetError(ValueError):
    """Base class for dataset/manifest problems."""


class ManifestMissingFileError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class NonFiniteValueError(DatasetError):
    pass


class DanglingIndexError(DatasetError):
    pass


class DuplicateClipIdError(DatasetError):
    pass


class TooFewEligibleError(DatasetError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense rows x dim block of float32 backbone features."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise DimensionMismatchError(f"expected 2-d feature block, got shape {v.shape}")
        if v.shape[1] <= 0:
            raise DimensionMismatchError("feature dim must be positive")
        if not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v))[0][0])
            raise NonFiniteValueError(f"non-finite value in feature row {bad}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PairedSample:
    clip_id: str
    speech_row: int
    global_caption_rows: tuple[int, ...]
    fine_caption_rows: tuple[int, ...]
    tags: dict[str, str] = field(default_factory=dict)
    transcript: str | None = None

    def eligible(self, task: str) -> bool:
        if task == STAGE1:
            return len(self.fine_caption_rows) >= 1
        if task == TASK1:
            return len(self.global_caption_rows) >= 1 and len(self.fine_caption_rows) >= 1
        if task == TASK2:
            return len(self.fine_caption_rows) >= 2
        raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[PairedSample, ...]
    speech_features: EmbeddingMatrix
    text_features: EmbeddingMatrix
    caption_texts: dict[int, str]

    def __post_init__(self):
        seen: set[str] = set()
        for s in self.samples:
            if s.clip_id in seen:
                raise DuplicateClipIdError(f"duplicate clip_id {s.clip_id!r}")
            seen.add(s.clip_id)
            if not (0 <= s.speech_row < self.speech_features.rows):
                raise DanglingIndexError(
                    f"clip {s.clip_id!r}: speech_row {s.speech_row} out of range"
                )
            for kind, rows in (("global", s.global_caption_rows), ("fine", s.fine_caption_rows)):
                if len(set(rows)) != len(rows):
                    raise DanglingIndexError(
                        f"clip {s.clip_id!r}: duplicate {kind} caption index"
                    )
                for r in rows:
                    if not (0 <= r < self.text_features.rows):
                        raise DanglingIndexError(
                            f"clip {s.clip_id!r}: {kind} caption row {r} out of range "
                            f"(text rows={self.text_features.rows})"
                        )

    def eligible_indices(self, task: str) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.eligible(task)]


@dataclass(frozen=True)
class Batch:
    task: str
    clip_ids: tuple[str, ...]
    speech: np.ndarray  # (n, d_s) float64
    text_a: np.ndarray  # (n, d_t) float64
    text_b: np.ndarray | None  # (n, d_t) float64, None for stage1
    speech_rows: tuple[int, ...]
    text_a_rows: tuple[int, ...]
    text_b_rows: tuple[int, ...] | None

    @property
    def size(self) -> int:
        return self.speech.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    n_samples: int
    speech_rows: int
    speech_dim: int
    text_rows: int
    text_dim: int
    n_stage1_eligible: int
    n_task1_eligible: int
    n_task2_eligible: int
    warnings: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "speech_rows": self.speech_rows,
            "speech_dim": self.speech_dim,
            "text_rows": self.text_rows,
            "text_dim": self.text_dim,
            "n_stage1_eligible": self.n_stage1_eligible,
            "n_task1_eligible": self.n_task1_eligible,
            "n_task2_eligible": self.n_task2_eligible,
            "warnings": list(self.warnings),
        }


def validate_dataset(d: Dataset) -> ValidationReport:
    """Report eligibility counts and structural warnings; never mutates."""
    warnings = []
    referenced = {r for s in d.samples for r in s.global_caption_rows + s.fine_caption_rows}
    unreferenced = d.text_features.rows - len(referenced)
    if unreferenced > 0:
        warnings.append(f"{unreferenced} text rows are not referenced by any sample")
    missing_text = referenced - set(d.caption_texts)
    if missing_text:
        warnings.append(f"{len(missing_text)} referenced caption rows have no caption text")
    return ValidationReport(
        n_samples=len(d.samples),
        speech_rows=d.speech_features.rows,
        speech_dim=d.speech_features.dim,
        text_rows=d.text_features.rows,
        text_dim=d.text_features.dim,
        n_stage1_eligible=len(d.eligible_indices(STAGE1)),
        n_task1_eligible=len(d.eligible_indices(TASK1)),
        n_task2_eligible=len(d.eligible_indices(TASK2)),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Manifest directory format (version 1)
#
#   manifest.json  header: version, dims, row counts, record list
#   speech.f32     raw little-endian float32, row-major, rows x dim
#   text.f32       same layout for the text modality
#   captions.jsonl one {"index": i, "text": ...} per caption row
# ---------------------------------------------------------------------------

def _read_blob(path: Path, rows: int, dim: int, name: str) -> np.ndarray:
    if not path.exists():
        raise ManifestMissingFileError(f"missing blob file {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != rows * dim:
        raise DimensionMismatchError(
            f"{name}: header declares {rows}x{dim}={rows * dim} values, blob holds "
            f"{raw.size}; first bad row index {raw.size // dim}"
        )
    arr = raw.reshape(rows, dim)
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise NonFiniteValueError(f"{name}: non-finite value in row {bad}")
    return arr


def load_manifest(path: str | Path) -> Dataset:
    """Load a manifest directory into memory, validating all invariants."""
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise ManifestMissingFileError(f"missing manifest file {mpath}")
    header = json.loads(mpath.read_text())
    version = header.get("version")
    if version != MANIFEST_VERSION:
        raise DimensionMismatchError(f"unsupported manifest version {version!r}")
    for key in ("speech_rows", "speech_dim", "text_rows", "text_dim", "records"):
        if key not in header:
            raise DimensionMismatchError(f"manifest header missing {key!r}")

    speech = EmbeddingMatrix(
        _read_blob(root / "speech.f32", header["speech_rows"], header["speech_dim"], "speech.f32")
    )
    text = EmbeddingMatrix(
        _read_blob(root / "text.f32", header["text_rows"], header["text_dim"], "text.f32")
    )

    cpath = root / "captions.jsonl"
    if not cpath.exists():
        raise ManifestMissingFileError(f"missing captions file {cpath}")
    caption_texts: dict[int, str] = {}
    for line in cpath.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        caption_texts[int(rec["index"])] = rec["text"]

    samples = []
    for rec in header["records"]:
        samples.append(
            PairedSample(
                clip_id=rec["clip_id"],
                speech_row=int(rec["speech_row"]),
                global_caption_rows=tuple(int(r) for r in rec["global_caption_rows"]),
                fine_caption_rows=tuple(int(r) for r in rec["fine_caption_rows"]),
                tags=dict(rec.get("tags") or {}),
                transcript=rec.get("transcript"),
            )
        )
    return Dataset(
        samples=tuple(samples),
        speech_features=speech,
        text_features=text,
        caption_texts=caption_texts,
    )


def write_manifest(d: Dataset, path: str | Path, metadata: dict | None = None) -> None:
    """Write the manifest directory; inverse of load_manifest (bit-exact)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for s in d.samples:
        rec = {
            "clip_id": s.clip_id,
            "speech_row": s.speech_row,
            "global_caption_rows": list(s.global_caption_rows),
            "fine_caption_rows": list(s.fine_caption_rows),
        }
        if s.tags:
            rec["tags"] = s.tags
        if s.transcript is not None:
            rec["transcript"] = s.transcript
        records.append(rec)
    header = {
        "version": MANIFEST_VERSION,
        "speech_rows": d.speech_features.rows,
        "speech_dim": d.speech_features.dim,
        "text_rows": d.text_features.rows,
        "text_dim": d.text_features.dim,
        "records": records,
    }
    if metadata:
        header["metadata"] = metadata
    (root / "manifest.json").write_text(json.dumps(header, indent=2, sort_keys=True))
    d.speech_features.values.astype("<f4").tofile(root / "speech.f32")
    d.text_features.values.astype("<f4").tofile(root / "text.f32")
    with open(root / "captions.jsonl", "w") as fh:
        for idx in sorted(d.caption_texts):
            fh.write(json.dumps({"index": idx, "text": d.caption_texts[idx]}) + "\n")


# ---------------------------------------------------------------------------
# Batch construction
# ---------------------------------------------------------------------------

def make_batches(
    d: Dataset,
    task: str,
    batch_size: int,
    seed,
) -> list[Batch]:
    """One epoch of batches: a seeded permutation of eligible samples.

    The final short batch is kept if it has at least 2 rows (a contrastive
    batch of 1 is degenerate).  Caption choice within a sample is uniform
    under the same seed; Task 2 draws two distinct fine-caption indices.
    """
    if batch_size < 2:
        raise TooFewEligibleError(f"batch_size must be >= 2, got {batch_size}")
    eligible = d.eligible_indices(task)
    if len(eligible) < batch_size:
        raise TooFewEligibleError(
            f"{len(eligible)} samples eligible for {task}, need >= {batch_size}"
        )
    rng = np.random.default_rng(_seed_seq(seed, _NS_PERM))
    crng = np.random.default_rng(_seed_seq(seed, _NS_CAPTION))
    order = rng.permutation(len(eligible))

    sv = d.speech_features.values
    tv = d.text_features.values
    batches: list[Batch] = []
    for start in range(0, len(order), batch_size):
        chunk = [eligible[i] for i in order[start : start + batch_size]]
        if len(chunk) < 2:
            break
        ids, s_rows, a_rows, b_rows = [], [], [], []
        for i in chunk:
            s = d.samples[i]
            ids.append(s.clip_id)
            s_rows.append(s.speech_row)
            if task == STAGE1:
                a_rows.append(int(crng.choice(s.fine_caption_rows)))
            elif task == TASK1:
                a_rows.append(int(crng.choice(s.global_caption_rows)))
                b_rows.append(int(crng.choice(s.fine_caption_rows)))
            else:
                pick = crng.choice(len(s.fine_caption_rows), size=2, replace=False)
                a_rows.append(int(s.fine_caption_rows[pick[0]]))
                b_rows.append(int(s.fine_caption_rows[pick[1]]))
        batches.append(
            Batch(
                task=task,
                clip_ids=tuple(ids),
                speech=sv[s_rows].astype(np.float64),
                text_a=tv[a_rows].astype(np.float64),
                text_b=tv[b_rows].astype(np.float64) if b_rows else None,
                speech_rows=tuple(s_rows),
                text_a_rows=tuple(a_rows),
                text_b_rows=tuple(b_rows) if b_rows else None,
            )
        )
    return batches


def _seed_seq(seed, ns: int) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [*seed, ns]
    return [int(seed), ns]


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    n_clusters: int = 32
    clips_per_cluster: int = 8
    d_s: int = 48
    d_t: int = 40
    noise_sigma: float = 0.3
    captions_per_clip: int = 2  # fine captions; one global caption is always added

    def __post_init__(self):
        for name in ("n_clusters", "clips_per_cluster", "d_s", "d_t", "captions_per_clip"):
            if getattr(self, name) < 1:
                raise DatasetError(f"synthetic config: {name} must be >= 1")
        if self.noise_sigma < 0:
            raise DatasetError("synthetic config: noise_sigma must be >= 0")


# clusters are grouped so global-caption directions share a coarse component,
# making them genuinely less specific than the per-cluster fine direction
_CLUSTERS_PER_GROUP = 4
_LATENT_DIM = 16


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> Dataset:
    """Deterministic clustered benchmark dataset.

    Each cluster carries a unit style direction in a latent space; a clip's
    latent is the cluster direction plus per-clip Gaussian noise shared by
    its speech feature and its fine captions (so clips stay identifiable
    across modalities).  Global captions come from a smoothed, group-level
    variant of the cluster direction and carry no clip-specific component.
    """
    rng = np.random.default_rng([int(seed), 201])
    k = _LATENT_DIM

    def unit(v):
        return v / np.linalg.norm(v)

    map_s = rng.normal(size=(k, cfg.d_s)) / math.sqrt(k)
    map_t = rng.normal(size=(k, cfg.d_t)) / math.sqrt(k)

    n_groups = max(1, cfg.n_clusters // _CLUSTERS_PER_GROUP)
    group_dirs = [unit(rng.normal(size=k)) for _ in range(n_groups)]
    cluster_dirs = [unit(rng.normal(size=k)) for _ in range(cfg.n_clusters)]
    global_dirs = [
        unit(0.5 * cluster_dirs[c] + 0.5 * group_dirs[c % n_groups])
        for c in range(cfg.n_clusters)
    ]

    sigma = cfg.noise_sigma
    speech_rows, text_rows = [], []
    samples, caption_texts = [], {}
    for c in range(cfg.n_clusters):
        for j in range(cfg.clips_per_cluster):
            clip_id = f"c{c:03d}_{j:03d}"
            z = cluster_dirs[c] + sigma * rng.normal(size=k) / math.sqrt(k)
            speech_rows.append(z @ map_s + 0.1 * sigma * rng.normal(size=cfg.d_s))
            s_row = len(speech_rows) - 1

            fine_rows = []
            for f in range(cfg.captions_per_clip):
                zf = z + 0.3 * sigma * rng.normal(size=k) / math.sqrt(k)
                text_rows.append(zf @ map_t)
                idx = len(text_rows) - 1
                fine_rows.append(idx)
                caption_texts[idx] = (
                    f"fine-grained style view {f} of clip {clip_id} (cluster {c})"
                )
            zg = global_dirs[c] + sigma * rng.normal(size=k) / math.sqrt(k)
            text_rows.append(zg @ map_t)
            g_idx = len(text_rows) - 1
            caption_texts[g_idx] = f"global style summary of clip {clip_id} (cluster {c})"

            samples.append(
                PairedSample(
                    clip_id=clip_id,
                    speech_row=s_row,
                    global_caption_rows=(g_idx,),
                    fine_caption_rows=tuple(fine_rows),
                    tags={"cluster": str(c), "group": str(c % n_groups)},
                )
            )

    return Dataset(
        samples=tuple(samples),
        speech_features=EmbeddingMatrix(np.asarray(speech_rows, dtype=np.float32)),
        text_features=EmbeddingMatrix(np.asarray(text_rows, dtype=np.float32)),
        caption_texts=caption_texts,
    )
