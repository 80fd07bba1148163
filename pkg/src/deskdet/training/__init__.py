from deskdet.training.config import TrainConfig
from deskdet.training.optim import SGD, linear_lr
from deskdet.training.trainer import TrainResult, batch_indices, train_toy

__all__ = [
    "SGD",
    "TrainConfig",
    "TrainResult",
    "batch_indices",
    "linear_lr",
    "train_toy",
]
