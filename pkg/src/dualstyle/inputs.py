"""Input distribution construction for training and inference.

The training strategy differentiates input distributions: texture
generation is modeled on a predetermined Gaussian noise distribution
added on top of smoothed content, while texture-free color transfer is
modeled on the smooth distribution alone. Outputs with a noise term are
deliberately NOT clamped to [0, 1]: clamping would censor the noise near
intensity extremes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .guided import GuidedFilterParams, smooth
from .image import check_image


@dataclass(frozen=True)
class NoiseSpec:
    """Mean and standard deviation of the per-pixel Gaussian noise."""

    mean: float = 0.0
    sigma: float = 0.1

    def __post_init__(self):
        if self.sigma < 0:
            raise ArgumentError(f"sigma must be >= 0, got {self.sigma}")


class InputVariant(enum.Enum):
    RAW = "raw"
    SMOOTH_ALL = "smooth_all"
    NOISE_ALL = "noise_all"
    DIFFERENTIATED = "differentiated"


class StepKind(enum.Enum):
    TEXTURE_MODELING = "texture_modeling"
    TEXTURE_REMOVAL = "texture_removal"


@dataclass(frozen=True)
class InputPolicy:
    """Which input-distribution regime training steps use.

    ``step_ratio`` only matters for the DIFFERENTIATED variant: the cycle
    runs ``step_ratio[0]`` texture-modeling steps followed by
    ``step_ratio[1]`` texture-removal steps.
    """

    variant: InputVariant = InputVariant.DIFFERENTIATED
    filter: GuidedFilterParams = field(default_factory=GuidedFilterParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    step_ratio: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.step_ratio[0] < 1 or self.step_ratio[1] < 1:
            raise ArgumentError(f"step_ratio components must be >= 1, got {self.step_ratio}")


def split_seed(*parts: int) -> np.random.Generator:
    """Deterministic per-(seed, step, index) generator for parallel-safe sampling."""
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


def sample_noise(height: int, width: int, channels: int, spec: NoiseSpec, seed: int) -> np.ndarray:
    """I.i.d. Gaussian field, deterministic for a fixed seed."""
    if height < 1 or width < 1 or channels < 1:
        raise ArgumentError(f"dimensions must be >= 1, got {(height, width, channels)}")
    if spec.sigma == 0:
        return np.full((height, width, channels), spec.mean, dtype=np.float64)
    rng = split_seed(seed)
    return rng.normal(spec.mean, spec.sigma, size=(height, width, channels))


def make_input(
    content: np.ndarray,
    policy: InputPolicy,
    step_kind: StepKind | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Build the model input for one training/inference step.

    RAW passes the content through, SMOOTH_ALL smooths it, NOISE_ALL adds
    noise to the raw content, and DIFFERENTIATED alternates between
    smooth+noise (texture modeling) and smooth-only (texture removal).
    """
    content = check_image(content, channels=(3,))
    v = policy.variant
    if v is InputVariant.DIFFERENTIATED and step_kind is None:
        raise ArgumentError("differentiated policy requires a step kind")

    if v is InputVariant.RAW:
        return content.copy()
    if v is InputVariant.SMOOTH_ALL:
        return smooth(content, policy.filter)
    if v is InputVariant.NOISE_ALL:
        h, w, c = content.shape
        return content + sample_noise(h, w, c, policy.noise, seed)
    base = smooth(content, policy.filter)
    if step_kind is StepKind.TEXTURE_REMOVAL:
        return base
    h, w, c = base.shape
    return base + sample_noise(h, w, c, policy.noise, seed)


def step_kind_schedule(step_index: int, ratio: tuple[int, int] = (1, 1)) -> StepKind:
    """Cyclic schedule: ``ratio[0]`` modeling steps, then ``ratio[1]`` removal steps."""
    if ratio[0] < 1 or ratio[1] < 1:
        raise ArgumentError(f"ratio components must be >= 1, got {ratio}")
    if step_index < 0:
        raise ArgumentError(f"step index must be >= 0, got {step_index}")
    phase = step_index % (ratio[0] + ratio[1])
    return StepKind.TEXTURE_MODELING if phase < ratio[0] else StepKind.TEXTURE_REMOVAL
