from importlib.metadata import PackageNotFoundError, version

from deskdet.config import DeskdetSettings, RunConfig, load_run_config
from deskdet.constants import AttentionKind, IoULossKind, NeckPreset, PyramidLevel
from deskdet.evaluate import evaluate_detection_dir, evaluate_detector
from deskdet.model import Detector, ModelConfig, load_detector, summarize
from deskdet.training import TrainConfig, train_toy

try:
    __version__ = version("deskdet")
except PackageNotFoundError:
    # In the case of local development
    # i.e., running directly from the source directory without package being installed
    __version__ = "0.0.0-dev"


__all__ = [
    "AttentionKind",
    "DeskdetSettings",
    "Detector",
    "IoULossKind",
    "ModelConfig",
    "NeckPreset",
    "PyramidLevel",
    "RunConfig",
    "TrainConfig",
    "evaluate_detection_dir",
    "evaluate_detector",
    "load_detector",
    "load_run_config",
    "summarize",
    "train_toy",
]
