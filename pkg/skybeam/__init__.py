try:
    from ._version import version as __version__
except ImportError:
    __version__ = "0.0.0"

from .channel import ChannelRealization, LinkGeometry, NoiseModel
from .codebook import ArrayGeometry, BeamCodebook, build_codebook
from .dataset import Dataset, FeatureSet, LabeledExample, split
from .evaluation import EvalReport, compare_feature_sets, evaluate
from .mlp import Checkpoint, MlpArchitecture, MlpModel, TrainConfig, train
from .oracle import BeamLabel, PowerVector, downsample_power, optimal_beam
from .scenario import CameraModel, TrajectoryConfig, simulate

__all__ = [
    "__version__",
    "ArrayGeometry",
    "BeamCodebook",
    "build_codebook",
    "LinkGeometry",
    "ChannelRealization",
    "NoiseModel",
    "PowerVector",
    "BeamLabel",
    "optimal_beam",
    "downsample_power",
    "CameraModel",
    "TrajectoryConfig",
    "simulate",
    "FeatureSet",
    "LabeledExample",
    "Dataset",
    "split",
    "MlpArchitecture",
    "MlpModel",
    "TrainConfig",
    "Checkpoint",
    "train",
    "EvalReport",
    "evaluate",
    "compare_feature_sets",
]
