"""Desk-scale spatial-channel transformer for multi-exposure HDR deghosting."""
from .hdrmath import LdrBracket, LdrImage
from .model import ModelConfig, SCTNet, init_weights, predict
from .train import TrainConfig, train_loop

__all__ = ["LdrBracket", "LdrImage", "ModelConfig", "SCTNet", "TrainConfig",
           "init_weights", "predict", "train_loop"]
__version__ = "0.1.0"
