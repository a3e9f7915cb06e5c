"""Contrastive objectives for the two training stages.

Stage one is the symmetric InfoNCE over matched speech/text pairs; stage
two is its multi-positive variant, a cross-entropy against soft targets
that split probability mass lambda / (1 - lambda) over a sample's two
captions in the audio-to-text direction, with hard one-hot targets in the
text-to-audio direction.  Both return analytic gradients with respect to
the embeddings and log-temperature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIT_NORM_TOL = 1e-4


class LossInputError(ValueError):
    pass


@dataclass
class LossOutput:
    value: float
    d_speech: np.ndarray
    d_text: np.ndarray
    d_log_tau: float
    extras: dict = field(default_factory=dict)


def _check_unit_rows(M: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(M, axis=1)
    worst = float(np.max(np.abs(norms - 1.0))) if M.shape[0] else 0.0
    if worst > UNIT_NORM_TOL:
        raise LossInputError(f"{name}: rows must be unit-norm (max deviation {worst:.2e})")


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(Z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(Z))


def soft_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Row-mean of -sum_j targets[i,j] * log softmax(logits[i,:])[j]."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise LossInputError("soft_cross_entropy: shape mismatch")
    row_sums = targets.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-9:
        raise LossInputError("soft_cross_entropy: target rows must sum to 1")
    return float(-(targets * _log_softmax(logits)).sum(axis=1).mean())


def soft_targets(n: int, lam: float) -> np.ndarray:
    """Audio-to-text target matrix: row i puts lam at i and 1-lam at i+n."""
    if n < 1:
        raise LossInputError("soft_targets: n must be >= 1")
    if not (0.0 <= lam <= 1.0):
        raise LossInputError(f"soft_targets: lambda must be in [0, 1], got {lam}")
    D = np.zeros((n, 2 * n))
    idx = np.arange(n)
    D[idx, idx] = lam
    D[idx, idx + n] = 1.0 - lam
    return D


def t2a_targets(n: int) -> np.ndarray:
    """Text-to-audio one-hot targets: rows i and i+n both select speech i."""
    if n < 1:
        raise LossInputError("t2a_targets: n must be >= 1")
    D = np.zeros((2 * n, n))
    idx = np.arange(n)
    D[idx, idx] = 1.0
    D[idx + n, idx] = 1.0
    return D


def stage1_loss(S: np.ndarray, T: np.ndarray, tau: float) -> LossOutput:
    """Symmetric InfoNCE over matched (speech_i, text_i) pairs."""
    S = np.asarray(S, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if tau <= 0:
        raise LossInputError(f"tau must be positive, got {tau}")
    if S.shape != T.shape:
        raise LossInputError("stage1_loss: S and T must have equal shapes")
    _check_unit_rows(S, "S")
    _check_unit_rows(T, "T")
    n = S.shape[0]
    Z = (S @ T.T) / tau
    eye = np.eye(n)

    logP = _log_softmax(Z)
    logQ = _log_softmax(Z.T).T  # column-wise softmax of Z
    a2t = float(-np.mean(np.diag(logP)))
    t2a = float(-np.mean(np.diag(logQ)))
    value = 0.5 * (a2t + t2a)

    P = np.exp(logP)
    Q = np.exp(logQ)
    dZ = 0.5 * ((P - eye) / n + (Q - eye) / n)
    dS = dZ @ T / tau
    dT = dZ.T @ S / tau
    d_log_tau = float(-np.sum(dZ * Z))
    return LossOutput(value, dS, dT, d_log_tau, extras={"a2t": a2t, "t2a": t2a})


def stage2_loss(S: np.ndarray, T: np.ndarray, tau: float, lam: float) -> LossOutput:
    """Multi-positive soft-target InfoNCE, averaged over the two directions.

    T stacks the two caption embeddings per sample: rows [0, n) are the
    first captions and rows [n, 2n) the second, aligned with S's rows.
    """
    S = np.asarray(S, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if tau <= 0:
        raise LossInputError(f"tau must be positive, got {tau}")
    n = S.shape[0]
    if T.shape[0] != 2 * n or T.shape[1] != S.shape[1]:
        raise LossInputError(
            f"stage2_loss: T must be (2n, d) = ({2 * n}, {S.shape[1]}), got {T.shape}"
        )
    _check_unit_rows(S, "S")
    _check_unit_rows(T, "T")

    D = soft_targets(n, lam)
    Dp = t2a_targets(n)
    Z = (S @ T.T) / tau

    a2t = soft_cross_entropy(Z, D)
    t2a = soft_cross_entropy(Z.T, Dp)
    value = 0.5 * (a2t + t2a)

    P = _softmax(Z)
    Pt = _softmax(Z.T)
    dZ = 0.5 * (P - D) / n + 0.5 * ((Pt - Dp) / (2 * n)).T
    dS = dZ @ T / tau
    dT = dZ.T @ S / tau
    d_log_tau = float(-np.sum(dZ * Z))
    return LossOutput(value, dS, dT, d_log_tau, extras={"a2t": a2t, "t2a": t2a})
