"""Learned location estimator: features, network, training and a matched-field baseline."""

from .features import FeatureConfig, featurize, stft, stft_features
from .model import LocalizerModel, Topology, init_localizer, predict
from .train import TrainConfig, train_joint, train_localizer

__all__ = ["FeatureConfig", "featurize", "stft", "stft_features", "LocalizerModel", "Topology",
           "init_localizer", "predict", "TrainConfig", "train_joint", "train_localizer"]
