"""Two-stage training driver: task scheduler, Adam, and the step loops.

Every random choice is keyed by (seed, namespace, step-or-epoch index), so
a run can be resumed from any step and still reproduce the original stream
byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .data import STAGE1, TASK1, TASK2, Batch, Dataset, TooFewEligibleError, make_batches
from .model import TAU_MAX, TAU_MIN, Model, ModelError, _forward, model_backward

_NS_TASK = 401
_NS_EPOCH_BASE = 410  # + task index


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Task scheduler
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchedulerCfg:
    kind: str  # "static" | "dynamic"
    p0: float
    p_min: float | None = None
    T: int | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise TrainingError(f"unknown scheduler kind {self.kind!r}")
        if not (0.0 <= self.p0 <= 1.0):
            raise TrainingError("p0 must be in [0, 1]")
        if self.kind == "dynamic":
            if self.p_min is None or self.T is None:
                raise TrainingError("dynamic scheduler needs p_min and T")
            if not (0.0 <= self.p_min <= self.p0):
                raise TrainingError("need 0 <= p_min <= p0")
            if self.T < 1:
                raise TrainingError("T must be >= 1")

    @property
    def floor(self) -> float:
        return self.p0 if self.kind == "static" else self.p_min


def task_prob(cfg: SchedulerCfg, t: int) -> float:
    """Probability of drawing Task 1 at step t."""
    if t < 0:
        raise TrainingError("step must be >= 0")
    if cfg.kind == "static":
        return cfg.p0
    return max(cfg.p_min, cfg.p0 - (t / cfg.T) * (cfg.p0 - cfg.p_min))


def sample_task(cfg: SchedulerCfg, t: int, rng: np.random.Generator) -> str:
    p = task_prob(cfg, t)
    return TASK1 if rng.random() < p else TASK2


# ---------------------------------------------------------------------------
# Optimizer: bias-corrected Adam over the named parameter dict
# ---------------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def model_params(model: Model) -> dict[str, np.ndarray]:
    out = {}
    for prefix, head in (("speech", model.speech_head), ("text", model.text_head)):
        for name in ("W1", "b1", "W2", "b2"):
            out[f"{prefix}.{name}"] = getattr(head, name)
    return out


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def optimizer_step(
    model: Model, grads: dict[str, np.ndarray], state: AdamState, lr: float
) -> None:
    """One Adam update in place; clamps tau to [TAU_MIN, TAU_MAX] afterwards."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    t = state.t
    params = model_params(model)
    params["log_tau"] = np.array([model.log_tau])
    grads = dict(grads)
    grads["log_tau"] = np.array([grads.pop("log_tau")]) if "log_tau" in grads else None

    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m[...] = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v[...] = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        p[...] = p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    model.log_tau = float(
        np.clip(params["log_tau"][0], np.log(TAU_MIN), np.log(TAU_MAX))
    )


# ---------------------------------------------------------------------------
# Joint forward/backward through both heads and the loss
# ---------------------------------------------------------------------------

def loss_and_grads(model: Model, batch: Batch, lam: float = 0.5):
    """Loss value and gradients for every model parameter on one batch.

    Stage-1 batches pair the speech block with text_a; stage-2 batches
    (task 1 or 2) stack text_a over text_b into the 2n-row caption block.
    """
    tau = model.tau
    S, s_cache = _forward(model.speech_head, batch.speech)
    if batch.task == STAGE1:
        X_text = batch.text_a
    else:
        X_text = np.vstack([batch.text_a, batch.text_b])
    T, t_cache = _forward(model.text_head, X_text)

    if batch.task == STAGE1:
        out = losses.stage1_loss(S, T, tau)
    else:
        out = losses.stage2_loss(S, T, tau, lam)

    s_grads, _ = model_backward(model.speech_head, batch.speech, out.d_speech)
    t_grads, _ = model_backward(model.text_head, X_text, out.d_text)
    grads = {f"speech.{k}": v for k, v in s_grads.items()}
    grads.update({f"text.{k}": v for k, v in t_grads.items()})
    grads["log_tau"] = out.d_log_tau
    return out.value, grads, out


# ---------------------------------------------------------------------------
# Finite-difference gradient verification
# ---------------------------------------------------------------------------

def finite_diff_check(model: Model, batch: Batch, h: float = 1e-5, lam: float = 0.5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Perturbs every scalar parameter, including log_tau, at 64-bit
    precision.  Relative error uses max(|analytic|, |numeric|, 1e-5) as
    the denominator so near-zero gradients do not dominate.
    """
    if h <= 0:
        raise TrainingError(f"finite-difference step must be positive, got {h}")
    _, grads, _ = loss_and_grads(model, batch, lam)

    def loss_value():
        value, _, _ = loss_and_grads(model, batch, lam)
        return value

    worst = 0.0
    params = model_params(model)
    for name, p in params.items():
        g = grads[name]
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_value()
            flat[i] = orig - h
            lm = loss_value()
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            rel = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-5)
            worst = max(worst, rel)

    orig = model.log_tau
    model.log_tau = orig + h
    lp = loss_value()
    model.log_tau = orig - h
    lm = loss_value()
    model.log_tau = orig
    fd = (lp - lm) / (2 * h)
    rel = abs(grads["log_tau"] - fd) / max(abs(grads["log_tau"]), abs(fd), 1e-5)
    return max(worst, rel)


# ---------------------------------------------------------------------------
# Stage loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageCfg:
    steps: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_schedule: str = "constant"  # "constant" | "linear"
    seed: int = 0
    lam: float = 0.5  # stage 2 only
    scheduler: SchedulerCfg | None = None  # stage 2 only

    def __post_init__(self):
        if self.steps < 1:
            raise TrainingError("steps must be >= 1")
        if self.batch_size < 2:
            raise TrainingError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if self.lr_schedule not in ("constant", "linear"):
            raise TrainingError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclass(frozen=True)
class StepRecord:
    step: int
    stage: int
    task: str
    loss: float
    tau: float
    p_t: float | None
    lr: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "stage": self.stage,
            "task": self.task,
            "loss": self.loss,
            "tau": self.tau,
            "p_t": self.p_t,
            "lr": self.lr,
        }


TrainLog = list[StepRecord]


def write_train_log(log: TrainLog, path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in log:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def _lr_at(cfg: StageCfg, t: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    return cfg.learning_rate * (1.0 - t / cfg.steps)


class _EpochCursor:
    """Serves batches epoch by epoch; position is a pure function of count."""

    def __init__(self, dataset: Dataset, task: str, batch_size: int, seed: int, ns: int):
        self.dataset = dataset
        self.task = task
        self.batch_size = batch_size
        self.seed = seed
        self.ns = ns
        self.epoch = -1
        self.batches: list[Batch] = []

    def at(self, count: int) -> Batch:
        if not self.batches:
            self.epoch = 0
            self.batches = make_batches(
                self.dataset, self.task, self.batch_size, [self.seed, self.ns, 0]
            )
        per_epoch = len(self.batches)
        epoch, idx = divmod(count, per_epoch)
        if epoch != self.epoch:
            self.epoch = epoch
            self.batches = make_batches(
                self.dataset, self.task, self.batch_size, [self.seed, self.ns, epoch]
            )
        return self.batches[idx]


def run_stage1(
    model: Model,
    dataset: Dataset,
    cfg: StageCfg,
    opt_state: AdamState | None = None,
    start_step: int = 0,
    stop_step: int | None = None,
) -> tuple[Model, TrainLog, AdamState]:
    """Stage-one contrastive pretraining on (speech, fine caption) pairs."""
    if len(dataset.eligible_indices(STAGE1)) < cfg.batch_size:
        raise TooFewEligibleError("not enough stage1-eligible samples for one batch")
    state = opt_state or AdamState()
    cursor = _EpochCursor(dataset, STAGE1, cfg.batch_size, cfg.seed, _NS_EPOCH_BASE)
    stop = cfg.steps if stop_step is None else stop_step
    log: TrainLog = []
    for t in range(start_step, stop):
        batch = cursor.at(t)
        lr = _lr_at(cfg, t)
        value, grads, _ = loss_and_grads(model, batch)
        optimizer_step(model, grads, state, lr)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at step {t}")
        log.append(StepRecord(t, 1, STAGE1, float(value), model.tau, None, lr))
    return model, log, state


def run_stage2(
    model: Model,
    dataset: Dataset,
    cfg: StageCfg,
    opt_state: AdamState | None = None,
    start_step: int = 0,
    stop_step: int | None = None,
) -> tuple[Model, TrainLog, AdamState]:
    """Stage-two multi-positive fine-tuning under the task scheduler."""
    sched = cfg.scheduler
    if sched is None:
        raise TrainingError("stage 2 requires a scheduler config")
    n1 = len(dataset.eligible_indices(TASK1))
    n2 = len(dataset.eligible_indices(TASK2))
    if sched.p0 > 0.0 and n1 < cfg.batch_size:
        raise TooFewEligibleError(
            f"task1 has sampling probability > 0 but only {n1} eligible samples"
        )
    if sched.floor < 1.0 and n2 < cfg.batch_size:
        raise TooFewEligibleError(
            f"task2 has sampling probability > 0 but only {n2} eligible samples"
        )

    state = opt_state or AdamState()
    cursors = {
        TASK1: _EpochCursor(dataset, TASK1, cfg.batch_size, cfg.seed, _NS_EPOCH_BASE + 1),
        TASK2: _EpochCursor(dataset, TASK2, cfg.batch_size, cfg.seed, _NS_EPOCH_BASE + 2),
    }

    def choose(t: int) -> str:
        rng = np.random.default_rng([cfg.seed, _NS_TASK, t])
        return sample_task(sched, t, rng)

    counts = {TASK1: 0, TASK2: 0}
    for t in range(start_step):  # replay history so resume stays aligned
        counts[choose(t)] += 1

    stop = cfg.steps if stop_step is None else stop_step
    log: TrainLog = []
    for t in range(start_step, stop):
        task = choose(t)
        batch = cursors[task].at(counts[task])
        counts[task] += 1
        lr = _lr_at(cfg, t)
        value, grads, _ = loss_and_grads(model, batch, cfg.lam)
        optimizer_step(model, grads, state, lr)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at step {t}")
        log.append(StepRecord(t, 2, task, float(value), model.tau, task_prob(sched, t), lr))
    return model, log, state
