"""Edge-preserving smoothing: box filter and self-guided filtering.

Used to produce the smooth input distribution for training and inference.
Borders are handled by count normalization (each window mean divides by
the number of in-bounds pixels), which keeps constant images exactly
constant at the edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError
from .image import check_image


@dataclass(frozen=True)
class GuidedFilterParams:
    """Window half-size and variance regularizer for the guided filter."""

    radius: int = 2
    eps: float = 1e-2

    def __post_init__(self):
        if self.radius < 1:
            raise ArgumentError(f"radius must be >= 1, got {self.radius}")
        if not self.eps >= 1e-8:
            raise ArgumentError(f"eps must be >= 1e-8, got {self.eps}")


def _window_sum(x: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window clipped to bounds, per pixel."""
    h, w = x.shape[:2]
    # Integral image with a leading zero row/column.
    c = np.zeros((h + 1, w + 1) + x.shape[2:], dtype=np.float64)
    np.cumsum(x, axis=0, out=c[1:, 1:])
    np.cumsum(c[1:, 1:], axis=1, out=c[1:, 1:])
    i0 = np.clip(np.arange(h) - radius, 0, h)
    i1 = np.clip(np.arange(h) + radius + 1, 0, h)
    j0 = np.clip(np.arange(w) - radius, 0, w)
    j1 = np.clip(np.arange(w) + radius + 1, 0, w)
    return c[i1[:, None], j1[None, :]] - c[i0[:, None], j1[None, :]] \
        - c[i1[:, None], j0[None, :]] + c[i0[:, None], j0[None, :]]


def box_filter(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window, normalized by the in-bounds count."""
    if radius < 0:
        raise ArgumentError(f"radius must be >= 0, got {radius}")
    img = np.asarray(img, dtype=np.float64)
    if radius == 0:
        return img.copy()
    ones = np.ones(img.shape[:2], dtype=np.float64)
    counts = _window_sum(ones, radius)
    if img.ndim == 3:
        counts = counts[:, :, None]
    return _window_sum(img, radius) / counts


def guided_filter(guide: np.ndarray, src: np.ndarray, params: GuidedFilterParams) -> np.ndarray:
    """Classic local-linear-model guided filter.

    Per window: a = cov(I, p) / (var(I) + eps), b = mean(p) - a * mean(I),
    output q = boxfilter(a) * I + boxfilter(b). A single-channel guide is
    broadcast across the channels of ``src``.
    """
    guide = np.asarray(guide, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    if guide.shape[:2] != src.shape[:2]:
        raise ShapeError(f"guide {guide.shape[:2]} vs input {src.shape[:2]}")
    if guide.ndim == 3 and src.ndim == 3 and guide.shape[2] not in (1, src.shape[2]):
        raise ShapeError(f"guide channels {guide.shape[2]} incompatible with input {src.shape[2]}")
    if guide.ndim == 3 and guide.shape[2] == 1:
        guide = guide[:, :, 0]
    if guide.ndim == 2 and src.ndim == 3:
        guide = np.repeat(guide[:, :, None], src.shape[2], axis=2)

    r = params.radius
    mean_i = box_filter(guide, r)
    mean_p = box_filter(src, r)
    corr_ip = box_filter(guide * src, r)
    corr_ii = box_filter(guide * guide, r)
    var_i = corr_ii - mean_i * mean_i
    cov_ip = corr_ip - mean_i * mean_p
    a = cov_ip / (var_i + params.eps)
    b = mean_p - a * mean_i
    return box_filter(a, r) * guide + box_filter(b, r)


def default_params(height: int, width: int, eps: float = 1e-2) -> GuidedFilterParams:
    """Default smoothing strength scaled to the image size."""
    radius = max(2, math.ceil(min(height, width) / 64))
    return GuidedFilterParams(radius=radius, eps=eps)


def smooth(img: np.ndarray, params: GuidedFilterParams | None = None) -> np.ndarray:
    """Self-guided filtering applied per channel, clamped to [0, 1]."""
    img = check_image(img, channels=(3,))
    if params is None:
        params = default_params(img.shape[0], img.shape[1])
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        ch = img[:, :, c]
        out[:, :, c] = guided_filter(ch, ch, params)
    return np.clip(out, 0.0, 1.0)
