"""Contrastive speech/text style alignment over precomputed features."""

__version__ = "0.1.0"

from .data import (
    STAGE1,
    TASK1,
    TASK2,
    Batch,
    Dataset,
    EmbeddingMatrix,
    PairedSample,
    SyntheticConfig,
    generate_synthetic,
    load_manifest,
    make_batches,
    validate_dataset,
    write_manifest,
)
from .losses import soft_cross_entropy, soft_targets, stage1_loss, stage2_loss, t2a_targets
from .metrics import (
    accuracy_wa_ua,
    correlations,
    retrieval_eval,
    score_pair,
    similarity_matrix,
    zero_shot_classify,
)
from .model import Model, ProjectionHead, init_model, load_checkpoint, project, save_checkpoint
from .training import (
    SchedulerCfg,
    StageCfg,
    finite_diff_check,
    run_stage1,
    run_stage2,
    sample_task,
    task_prob,
)
from .sweeps import (
    SweepReport,
    SweepRow,
    SweepSpec,
    evaluate_retrieval,
    run_sweep,
    split_dataset,
)
from .verify import check_caption, check_clip, compile_rules, default_rules

__all__ = [
    "Batch",
    "Dataset",
    "EmbeddingMatrix",
    "Model",
    "PairedSample",
    "ProjectionHead",
    "STAGE1",
    "SchedulerCfg",
    "StageCfg",
    "SweepReport",
    "SweepRow",
    "SweepSpec",
    "SyntheticConfig",
    "TASK1",
    "TASK2",
    "accuracy_wa_ua",
    "check_caption",
    "check_clip",
    "compile_rules",
    "correlations",
    "default_rules",
    "evaluate_retrieval",
    "finite_diff_check",
    "generate_synthetic",
    "init_model",
    "load_checkpoint",
    "load_manifest",
    "make_batches",
    "project",
    "retrieval_eval",
    "run_stage1",
    "run_stage2",
    "run_sweep",
    "sample_task",
    "save_checkpoint",
    "score_pair",
    "similarity_matrix",
    "soft_cross_entropy",
    "soft_targets",
    "split_dataset",
    "stage1_loss",
    "stage2_loss",
    "t2a_targets",
    "task_prob",
    "validate_dataset",
    "write_manifest",
    "zero_shot_classify",
]
