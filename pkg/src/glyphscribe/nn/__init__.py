"""Small numpy neural-network core shared by the embedding and softmax models."""

from .layers import Conv2d, Dense, Flatten, L2Normalize, MaxPool2, ReLU, Sequential
from .optim import Adam
from .training import EpochRecord, TrainingHistory, TrainSchedule, run_training

__all__ = [
    "Conv2d", "Dense", "Flatten", "L2Normalize", "MaxPool2", "ReLU", "Sequential",
    "Adam", "EpochRecord", "TrainingHistory", "TrainSchedule", "run_training",
]
