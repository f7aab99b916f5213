"""Config-driven orchestration of the extract-vet-train-evaluate pipeline."""

from .config import (
    STAGES,
    CorpusSpec,
    EvaluateSpec,
    ExperimentConfig,
    VettingSpec,
    config_from_dict,
    load_config,
)
from .runner import (
    config_hash,
    mixed_supervision_run,
    run,
    run_stage,
    scale_sweep,
    stage_key,
    stage_slice,
)
from .stages import PipelineContext, RunPaths

__all__ = [
    "CorpusSpec",
    "EvaluateSpec",
    "ExperimentConfig",
    "PipelineContext",
    "RunPaths",
    "STAGES",
    "VettingSpec",
    "config_from_dict",
    "config_hash",
    "load_config",
    "mixed_supervision_run",
    "run",
    "run_stage",
    "scale_sweep",
    "stage_key",
    "stage_slice",
]
