"""Minimal tensor engine: autodiff, layers, residual encoder, optimizer, checkpoints."""
from . import functional
from .checkpoint import Checkpoint, check_compatible, load_checkpoint, save_checkpoint
from .gradcheck import GradReport, gradcheck, relative_error
from .layers import BatchNorm2d, Conv2d, Dropout, GroupNorm, Linear, Module, ReLU
from .optim import Adam, AdamState, adam_step
from .resnet import PROFILES, BasicBlock, EncoderConfig, ResNetEncoder, profile
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "Adam", "AdamState", "BasicBlock", "BatchNorm2d", "Checkpoint", "Conv2d", "Dropout",
    "EncoderConfig", "GradReport", "GroupNorm", "Linear", "Module", "PROFILES", "Parameter",
    "ReLU", "ResNetEncoder", "Tensor", "adam_step", "check_compatible", "functional", "gradcheck",
    "load_checkpoint", "no_grad", "profile", "relative_error", "save_checkpoint",
]
