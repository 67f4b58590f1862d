"""Segmentation of overlapping cervical cells in Pap smear images."""

from .estimators import CytoplasmSegmenter, ModifiedOtsuThreshold
from .metrics import EvalReport, dice, evaluate
from .phantom import PhantomSpec, generate_phantom
from .pipeline import PipelineConfig, SegmentationResult, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "CytoplasmSegmenter",
    "EvalReport",
    "ModifiedOtsuThreshold",
    "PhantomSpec",
    "PipelineConfig",
    "SegmentationResult",
    "dice",
    "evaluate",
    "generate_phantom",
    "run_pipeline",
]
