"""Dual-branch color/texture style transfer with distribution-differentiated training."""

from .estimator import DualStyleTransfer
from .guided import GuidedFilterParams, box_filter, guided_filter, smooth
from .image import load_image, resize, save_image, total_variation
from .inputs import InputPolicy, InputVariant, NoiseSpec, StepKind, make_input
from .model import ModelConfig, init_params, load_checkpoint, receptive_field, save_checkpoint
from .train import TrainConfig, evaluate_texture_differentiation, train

__all__ = [
    "DualStyleTransfer",
    "GuidedFilterParams",
    "InputPolicy",
    "InputVariant",
    "ModelConfig",
    "NoiseSpec",
    "StepKind",
    "TrainConfig",
    "box_filter",
    "evaluate_texture_differentiation",
    "guided_filter",
    "init_params",
    "load_checkpoint",
    "load_image",
    "make_input",
    "receptive_field",
    "resize",
    "save_checkpoint",
    "save_image",
    "smooth",
    "total_variation",
    "train",
]
