"""Small reverse-mode engine and the training loops built on it."""

from .adversarial import AdversarialTrace, GanResult, clip_parameters, train_gan, train_wgan
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, restore, save_checkpoint
from .graph import FeatureExtractor, ModelGraph, NonFiniteActivation, backward, forward
from .layers import Dense, ReLU, Sequential, Sigmoid, Tanh, Twin
from .losses import LOSSES
from .models import build_autoencoder, build_discriminator, build_generator, build_mlp, build_twin_classifier
from .train import (
    AEResult,
    MetricLog,
    ProbeResult,
    TrainConfig,
    TrainingDivergence,
    TrainResult,
    accuracy,
    fit_probe,
    fit_reconstruction,
    train_autoencoder,
    train_probe,
    train_supervised,
)

__all__ = [
    "AEResult", "AdversarialTrace", "Checkpoint", "CheckpointError", "Dense", "FeatureExtractor", "GanResult",
    "LOSSES", "MetricLog", "ModelGraph", "NonFiniteActivation", "ProbeResult", "ReLU", "Sequential", "Sigmoid",
    "Tanh", "TrainConfig", "TrainResult", "TrainingDivergence", "Twin", "accuracy", "backward",
    "build_autoencoder", "build_discriminator", "build_generator", "build_mlp", "build_twin_classifier",
    "clip_parameters", "fit_probe", "fit_reconstruction", "forward", "load_checkpoint", "restore",
    "save_checkpoint", "train_autoencoder", "train_gan", "train_probe", "train_supervised", "train_wgan",
]
