from .augment import (
    AUGMENTATION_KINDS,
    AugmentationPolicy,
    augment_blocks,
    augment_positions,
    drop_edges,
    edge_drop_weights,
)
from .heads import PRETRAIN_TASKS, TASK_STAGE, FeatureHead, PairScorer, PretrainHead
from .losses import (
    agcl_loss,
    atocl_loss,
    atrcl_loss,
    gau_loss,
    info_nce,
    mask_positions,
    masked_mean,
    mtr_batch_loss,
    mtr_loss,
    ncl_loss,
    nfi_loss,
    pad_batch,
    tokri_loss,
    trajp_batch_loss,
    trajp_loss,
    trcl_loss,
)
from .train import (
    PretrainData,
    StepRecord,
    TrainingRun,
    build_heads,
    check_task_stages,
    derive_seed,
    history_rows,
    pretrain,
    save_history,
    step_task_losses,
)

__all__ = [
    "AUGMENTATION_KINDS",
    "AugmentationPolicy",
    "FeatureHead",
    "PRETRAIN_TASKS",
    "PairScorer",
    "PretrainData",
    "PretrainHead",
    "StepRecord",
    "TASK_STAGE",
    "TrainingRun",
    "agcl_loss",
    "atocl_loss",
    "atrcl_loss",
    "augment_blocks",
    "augment_positions",
    "build_heads",
    "check_task_stages",
    "derive_seed",
    "drop_edges",
    "edge_drop_weights",
    "gau_loss",
    "history_rows",
    "info_nce",
    "mask_positions",
    "masked_mean",
    "mtr_batch_loss",
    "mtr_loss",
    "ncl_loss",
    "nfi_loss",
    "pad_batch",
    "pretrain",
    "save_history",
    "step_task_losses",
    "tokri_loss",
    "trajp_batch_loss",
    "trajp_loss",
    "trcl_loss",
]
