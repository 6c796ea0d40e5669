"""Frame-level harmonic analysis with a separable bidirectional
autoregressive decoder and human-in-the-loop refinement."""

from .checkpoint import Checkpoint
from .extractor import BiasField, ExtractorConfig
from .features import Chromagram, FeatureMatrix, assemble_input
from .labels import HarmonyFrameLabel
from .model import SerenadeModel
from .nade import OracleMask, PredictionResult, infer, infer_constrained
from .session import Session
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "BiasField", "ExtractorConfig", "Chromagram",
    "FeatureMatrix", "assemble_input", "HarmonyFrameLabel", "SerenadeModel",
    "OracleMask", "PredictionResult", "infer", "infer_constrained",
    "Session", "TrainConfig", "train", "__version__",
]
