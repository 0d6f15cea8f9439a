"""Stereo egocentric heatmap-to-3D pose lifting at desk scale.

A grid transformer encoder summarizes stacked stereo joint heatmaps into
per-joint features; a skeletal propagation network carries parent-joint
state down the body tree to estimate obscured joints; a synthetic stereo
generator, trainer, metrics and ablation harness round out the pipeline.
"""

__version__ = "0.1.0"

from .rng import Rng
from .tensor import Tape, Tensor, ShapeError, NonFiniteError

__all__ = ["Rng", "Tape", "Tensor", "ShapeError", "NonFiniteError", "__version__"]
