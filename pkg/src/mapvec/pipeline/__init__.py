from .cli import cli, main
from .config import (
    DEFAULT_SEEDS,
    Hparams,
    PipelineConfig,
    config_from_dict,
    load_config,
    save_config,
)
from .run import ExperimentResult, build_encoder_pipeline, resolve_batch, run_pipeline, write_outputs

__all__ = [
    "DEFAULT_SEEDS",
    "ExperimentResult",
    "Hparams",
    "PipelineConfig",
    "build_encoder_pipeline",
    "cli",
    "config_from_dict",
    "load_config",
    "main",
    "resolve_batch",
    "run_pipeline",
    "save_config",
    "write_outputs",
]
