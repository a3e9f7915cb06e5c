"""Evaluation metrics: retrieval, zero-shot classification, correlations.

All operations are pure and deterministic; ranking ties break toward the
smaller candidate index so reports are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

UNIT_NORM_TOL = 1e-4
RECALL_KS = (1, 5, 10)
MAP_CUTOFF = 10


class MetricError(ValueError):
    pass


class ConstantInputError(MetricError):
    pass


@dataclass(frozen=True)
class EvalReport:
    direction: str  # "speech_to_text" | "text_to_speech"
    r_at: dict[int, float]
    map_at_10: float
    n_queries: int

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "r_at": {str(k): v for k, v in self.r_at.items()},
            "map_at_10": self.map_at_10,
            "n_queries": self.n_queries,
        }


@dataclass(frozen=True)
class ClassifyReport:
    wa: float
    ua: float
    per_class: dict[str, float]
    confusion: dict[str, dict[str, int]]

    def to_dict(self) -> dict:
        return {
            "wa": self.wa,
            "ua": self.ua,
            "per_class": self.per_class,
            "confusion": self.confusion,
        }


def _check_unit(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=1)
    if M.shape[0] and np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
        raise MetricError(f"{name}: rows must be unit-norm")
    return M


def similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cosine similarities between unit-norm row sets; entry (i,j) = A_i . B_j."""
    A = _check_unit(A, "A")
    B = _check_unit(B, "B")
    if A.shape[1] != B.shape[1]:
        raise MetricError(f"dim mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A @ B.T


def ranks_of_truth(sim: np.ndarray, ground_truth: np.ndarray) -> np.ndarray:
    """1-based rank of each query's true candidate under descending score.

    A candidate with an equal score ranks ahead of the truth only when its
    index is smaller.
    """
    sim = np.asarray(sim, dtype=np.float64)
    gt = np.asarray(ground_truth, dtype=int)
    if gt.shape[0] != sim.shape[0]:
        raise MetricError("ground truth length must equal query count")
    if np.any(gt < 0) or np.any(gt >= sim.shape[1]):
        raise MetricError("ground-truth index out of range")
    true_scores = sim[np.arange(sim.shape[0]), gt]
    greater = (sim > true_scores[:, None]).sum(axis=1)
    cols = np.arange(sim.shape[1])
    equal_before = ((sim == true_scores[:, None]) & (cols[None, :] < gt[:, None])).sum(axis=1)
    return 1 + greater + equal_before


def retrieval_eval(sim: np.ndarray, ground_truth, direction: str = "speech_to_text") -> EvalReport:
    """R@{1,5,10} and mAP@10 for the single-relevant-candidate regime."""
    ranks = ranks_of_truth(sim, np.asarray(ground_truth))
    n = len(ranks)
    if n == 0:
        raise MetricError("retrieval_eval: no queries")
    r_at = {k: float(np.mean(ranks <= k)) for k in RECALL_KS}
    ap = np.where(ranks <= MAP_CUTOFF, 1.0 / ranks, 0.0)
    return EvalReport(direction=direction, r_at=r_at, map_at_10=float(ap.mean()), n_queries=n)


def zero_shot_classify(
    speech: np.ndarray, prompts: np.ndarray, labels: list[str]
) -> list[str]:
    """Predict the label of the most similar prompt for each speech row.

    Repeated labels act as alternative phrasings of the same class, scored
    by their best prompt (argmax over all prompt rows).  Ties break toward
    the smallest prompt index.
    """
    if len(labels) != np.asarray(prompts).shape[0]:
        raise MetricError("labels must align with prompt rows")
    if len(set(labels)) < 2:
        raise MetricError("need at least 2 distinct classes")
    sim = similarity_matrix(speech, prompts)
    best = np.argmax(sim, axis=1)  # first max wins, the tie rule
    return [labels[j] for j in best]


def accuracy_wa_ua(preds: list[str], golds: list[str]) -> ClassifyReport:
    """Weighted (overall) and unweighted (macro over gold classes) accuracy."""
    if len(preds) != len(golds):
        raise MetricError("preds and golds must have equal length")
    if not golds:
        raise MetricError("empty input")
    gold_classes = sorted(set(golds))
    confusion: dict[str, dict[str, int]] = {c: {} for c in gold_classes}
    correct_total = 0
    for p, g in zip(preds, golds):
        confusion[g][p] = confusion[g].get(p, 0) + 1
        if p == g:
            correct_total += 1
    per_class = {}
    for c in gold_classes:
        count = sum(confusion[c].values())
        per_class[c] = confusion[c].get(c, 0) / count
    return ClassifyReport(
        wa=correct_total / len(golds),
        ua=float(np.mean([per_class[c] for c in gold_classes])),
        per_class=per_class,
        confusion=confusion,
    )


def correlations(x, y) -> tuple[float, float, float]:
    """(Pearson r, Spearman rho, Kendall tau-b) between two score lists.

    Spearman uses average ranks for ties; Kendall is the tie-corrected
    tau-b variant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("correlations: x and y must be equal-length 1-d")
    if len(x) < 2:
        raise MetricError("correlations: need at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("correlations: constant input")
    r = float(stats.pearsonr(x, y).statistic)
    rho = float(stats.spearmanr(x, y).statistic)
    tau = float(stats.kendalltau(x, y, variant="b").statistic)
    return r, rho, tau


def score_pair(speech_emb: np.ndarray, caption_emb: np.ndarray) -> float:
    """Cosine similarity between one speech and one caption embedding."""
    s = _check_unit(np.atleast_2d(speech_emb), "speech_emb")[0]
    c = _check_unit(np.atleast_2d(caption_emb), "caption_emb")[0]
    if s.shape != c.shape:
        raise MetricError("dim mismatch")
    return float(np.dot(s, c))
