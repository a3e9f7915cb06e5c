"""Projection towers: per-modality MLP heads, unit normalization, temperature.

Forward and backward passes are hand-rolled numpy at 64-bit precision so
the analytic gradients can be held to a tight finite-difference tolerance.
The temperature is stored in the log domain and clamped after each
optimizer step.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1
_MAGIC = b"SALN"

TAU_MIN = 5e-3
TAU_MAX = 100.0
NORM_EPS = 1e-12
INIT_LOG_TAU = float(np.log(1.0 / 0.07))


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


@dataclass
class ProjectionHead:
    W1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden, d)
    b2: np.ndarray  # (d,)

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def d(self) -> int:
        return self.W2.shape[1]

    def check(self) -> None:
        if self.b1.shape != (self.hidden,) or self.W2.shape[0] != self.hidden:
            raise ModelError("inconsistent hidden dimension")
        if self.b2.shape != (self.d,):
            raise ModelError("inconsistent output dimension")
        for name in ("W1", "b1", "W2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ModelError(f"non-finite parameter {name}")

    def n_params(self) -> int:
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size


@dataclass
class Model:
    speech_head: ProjectionHead
    text_head: ProjectionHead
    log_tau: float

    @property
    def tau(self) -> float:
        # exp(log(TAU_MAX)) can overshoot the bound by one ulp, so clip again
        return float(min(max(np.exp(self.log_tau), TAU_MIN), TAU_MAX))

    def check(self) -> None:
        self.speech_head.check()
        self.text_head.check()
        if self.speech_head.d != self.text_head.d:
            raise ModelError("heads must project into a shared space")
        if not np.isfinite(self.log_tau):
            raise ModelError("non-finite log_tau")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _init_head(rng: np.random.Generator, d_in: int, hidden: int, d: int) -> ProjectionHead:
    return ProjectionHead(
        W1=_glorot(rng, d_in, hidden),
        b1=np.zeros(hidden),
        W2=_glorot(rng, hidden, d),
        b2=np.zeros(d),
    )


def init_model(
    d_in_speech: int,
    d_in_text: int,
    d: int,
    hidden: int | None = None,
    seed: int = 0,
) -> Model:
    """Seeded Glorot-uniform weights, zero biases, log_tau = log(1/0.07)."""
    if min(d_in_speech, d_in_text, d) < 1 or (hidden is not None and hidden < 1):
        raise ModelError("all model dimensions must be >= 1")
    if hidden is None:
        hidden = 2 * d
    rng = np.random.default_rng([int(seed), 301])
    return Model(
        speech_head=_init_head(rng, d_in_speech, hidden, d),
        text_head=_init_head(rng, d_in_text, hidden, d),
        log_tau=INIT_LOG_TAU,
    )


def _forward(head: ProjectionHead, X: np.ndarray):
    H = X @ head.W1 + head.b1
    A = np.maximum(H, 0.0)
    V = A @ head.W2 + head.b2
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    denom = np.maximum(norms, NORM_EPS)
    U = V / denom
    return U, (X, H, A, V, norms, denom)


def project(head: ProjectionHead, X: np.ndarray) -> np.ndarray:
    """Map raw features to unit-norm rows in the shared space."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite input to project")
    if X.shape[1] != head.d_in:
        raise ModelError(f"project: expected input dim {head.d_in}, got {X.shape[1]}")
    U, _ = _forward(head, X)
    return U


def normalize_backward(V: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient through row-wise v -> v / max(||v||, eps).

    Away from the eps branch the Jacobian is (I - u u^T) / ||v||; on the
    branch the map is linear with Jacobian I / eps.
    """
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    denom = np.maximum(norms, NORM_EPS)
    U = V / denom
    on_branch = norms < NORM_EPS
    proj = upstream - np.sum(upstream * U, axis=1, keepdims=True) * U
    dV = proj / denom
    if np.any(on_branch):
        dV = np.where(on_branch, upstream / NORM_EPS, dV)
    return dV


def model_backward(head: ProjectionHead, X: np.ndarray, upstream: np.ndarray):
    """Gradients of sum(upstream * project(head, X)) w.r.t. parameters and X."""
    X = np.asarray(X, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if X.shape[1] != head.d_in or upstream.shape != (X.shape[0], head.d):
        raise ModelError("model_backward: shape mismatch")
    _, (X, H, A, V, _, _) = _forward(head, X)
    dV = normalize_backward(V, upstream)
    dA = dV @ head.W2.T
    dW2 = A.T @ dV
    db2 = dV.sum(axis=0)
    dH = dA * (H > 0)
    dW1 = X.T @ dH
    db1 = dH.sum(axis=0)
    dX = dH @ head.W1.T
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}
    return grads, dX


# ---------------------------------------------------------------------------
# Checkpoints: magic + u32 header length + JSON header + float64 LE blobs
# in fixed declaration order (speech W1,b1,W2,b2; text W1,b1,W2,b2; log_tau).
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: str | Path) -> None:
    model.check()
    header = {
        "version": CHECKPOINT_VERSION,
        "d_in_speech": model.speech_head.d_in,
        "d_in_text": model.text_head.d_in,
        "hidden": model.speech_head.hidden,
        "d": model.speech_head.d,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for head in (model.speech_head, model.text_head):
            for arr in (head.W1, head.b1, head.W2, head.b2):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", model.log_tau))


def load_checkpoint(path: str | Path, expect_dims: tuple[int, int] | None = None) -> Model:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('version')!r}"
            )
        if expect_dims is not None and (
            header["d_in_speech"],
            header["d_in_text"],
        ) != tuple(expect_dims):
            raise CheckpointError(
                f"{path}: expected input dims {tuple(expect_dims)}, found "
                f"({header['d_in_speech']}, {header['d_in_text']})"
            )

        def read_arr(shape):
            n = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()

        heads = []
        for d_in in (header["d_in_speech"], header["d_in_text"]):
            h, d = header["hidden"], header["d"]
            heads.append(
                ProjectionHead(
                    W1=read_arr((d_in, h)),
                    b1=read_arr((h,)),
                    W2=read_arr((h, d)),
                    b2=read_arr((d,)),
                )
            )
        (log_tau,) = struct.unpack("<d", fh.read(8))
    model = Model(speech_head=heads[0], text_head=heads[1], log_tau=log_tau)
    model.check()
    return model
