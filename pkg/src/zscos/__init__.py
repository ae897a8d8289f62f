"""Zero-shot camouflaged object segmentation with a learned codebook query, on numpy."""
from .errors import ConfigError, DimensionError, FormatError, ModeError, NumericError, ZSCOSError
from .estimator import CamouflageSegmenter
from .model import ModelConfig, Segmenter

__all__ = [
    "ConfigError", "DimensionError", "FormatError", "ModeError", "NumericError", "ZSCOSError",
    "ModelConfig", "Segmenter", "CamouflageSegmenter",
]
__version__ = "0.1.0"
