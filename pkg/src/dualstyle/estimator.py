"""Scikit-learn style wrapper around training and inference.

``fit`` trains a per-style model on a directory (or list) of content
images; ``transform`` maps images to texture-free color-transfer results
using the smooth input policy. This composes with sklearn tooling
(get_params / set_params / clone) while the lower-level modules stay
usable directly.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import ArgumentError
from .guided import GuidedFilterParams, smooth
from .image import check_image, load_image
from .inputs import InputPolicy, InputVariant, NoiseSpec
from .losses import LossWeights
from .model import ModelConfig, forward_dual, load_checkpoint
from .train import TrainConfig, train


class DualStyleTransfer(TransformerMixin, BaseEstimator):
    """Per-style color/texture transfer estimator.

    Parameters mirror TrainConfig; ``fit(X)`` accepts a content directory
    path or a list of image paths, ``transform(X)`` accepts image paths or
    (H, W, 3) arrays and returns stylized arrays from the requested branch.
    """

    def __init__(
        self,
        style_image: str | None = None,
        image_size: int = 96,
        batch_size: int = 4,
        total_steps: int = 500,
        learning_rate: float = 1e-3,
        sigma: float = 0.1,
        radius: int = 2,
        eps: float = 1e-2,
        variant: str = "differentiated",
        branch: str = "color",
        seed: int = 0,
        work_dir: str | None = None,
    ):
        self.style_image = style_image
        self.image_size = image_size
        self.batch_size = batch_size
        self.total_steps = total_steps
        self.learning_rate = learning_rate
        self.sigma = sigma
        self.radius = radius
        self.eps = eps
        self.variant = variant
        self.branch = branch
        self.seed = seed
        self.work_dir = work_dir

    def _train_config(self, content_dir: str) -> TrainConfig:
        if not self.style_image:
            raise ArgumentError("style_image must be set before fitting")
        out_dir = self.work_dir or tempfile.mkdtemp(prefix="dualstyle_")
        policy = InputPolicy(
            variant=InputVariant(self.variant),
            filter=GuidedFilterParams(radius=self.radius, eps=self.eps),
            noise=NoiseSpec(sigma=self.sigma),
        )
        return TrainConfig(
            style_image=self.style_image,
            content_dir=content_dir,
            out_dir=out_dir,
            image_size=self.image_size,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            learning_rate=self.learning_rate,
            loss_weights=LossWeights(),
            input_policy=policy,
            model=ModelConfig(),
            seed=self.seed,
            checkpoint_every=max(1, self.total_steps),
            log_every=max(1, self.total_steps // 20),
        )

    def fit(self, X, y=None):
        """Train on content images; X is a directory path or list of paths."""
        if isinstance(X, (str, os.PathLike)):
            content_dir = str(X)
        else:
            # Materialize a directory of symlinks so the trainer can scan it.
            content_dir = tempfile.mkdtemp(prefix="dualstyle_content_")
            for i, p in enumerate(X):
                ext = os.path.splitext(str(p))[1] or ".png"
                os.symlink(os.path.abspath(str(p)),
                           os.path.join(content_dir, f"{i:05d}{ext}"))
        config = self._train_config(content_dir)
        self.checkpoint_path_, self.log_path_ = train(config)
        self.net_, self.model_config_, _ = load_checkpoint(self.checkpoint_path_)
        self.filter_params_ = config.input_policy.filter
        return self

    def transform(self, X):
        """Stylize images with the smooth-input inference policy."""
        if not hasattr(self, "net_"):
            raise NotFittedError("fit must be called before transform")
        out = []
        for item in X:
            img = load_image(item) if isinstance(item, (str, os.PathLike)) else check_image(item)
            color, texture = forward_dual(self.net_, smooth(img, self.filter_params_))
            out.append(color if self.branch == "color" else texture)
        return out

    def fit_transform(self, X, y=None, **fit_params):
        # X here is training content; transform it after fitting.
        self.fit(X, y)
        paths = [os.path.join(X, n) for n in sorted(os.listdir(X))] \
            if isinstance(X, (str, os.PathLike)) else list(X)
        return self.transform(paths)

    def __sklearn_is_fitted__(self):
        return hasattr(self, "net_")


def stylize_array(net, img: np.ndarray, branch: str = "color") -> np.ndarray:
    """One-shot stylization of an (H, W, 3) array with a loaded net."""
    color, texture = forward_dual(net, img)
    return color if branch == "color" else texture
