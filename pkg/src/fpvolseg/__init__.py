"""Patch-based volumetric lesion segmentation toolkit with Focused Practice sampling."""

__version__ = "0.1.0"

from .estimator import FocusedPracticeSegmenter, MaskPostprocessor
from .volume import MultiChannelVolume, Volume3D, load_volume, save_volume, stack_channels

__all__ = [
    "FocusedPracticeSegmenter",
    "MaskPostprocessor",
    "MultiChannelVolume",
    "Volume3D",
    "load_volume",
    "save_volume",
    "stack_channels",
]
