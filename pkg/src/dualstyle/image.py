"""Image I/O, resizing and total-variation metrics.

Images are numpy float64 arrays of shape (H, W, C) with C in {1, 3}.
Stored/decoded images live in [0, 1]; intermediate tensors (e.g. after
noise injection) may leave that range and must be clamped before saving.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import ArgumentError, DecodeError, IoError, NotFoundError, RangeError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def check_image(img: np.ndarray, channels: tuple[int, ...] = (1, 3)) -> np.ndarray:
    """Validate an image array and return it as float64."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] not in channels:
        raise ArgumentError(
            f"expected (H, W, C) array with C in {channels}, got shape {img.shape}"
        )
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ArgumentError(f"image dimensions must be >= 1, got {img.shape[:2]}")
    return img


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load a PNG or JPEG as an (H, W, 3) float array in [0, 1].

    Grayscale files are promoted to 3 channels by replication.
    """
    if not os.path.isfile(path):
        raise NotFoundError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return arr


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Save an (H, W, C) image in [0, 1] as PNG.

    The caller is responsible for clamping; out-of-range values raise
    RangeError rather than being silently clipped.
    """
    img = check_image(img)
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"values outside [0, 1] (min={lo:.4g}, max={hi:.4g}); clamp first")
    arr = np.round(img * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    try:
        PILImage.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _axis_coords(in_size: int, out_size: int) -> np.ndarray:
    # Corner-aligned sampling: output corners map onto input corners.
    if out_size == 1:
        return np.array([(in_size - 1) / 2.0])
    return np.arange(out_size) * (in_size - 1) / (out_size - 1)


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling."""
    img = check_image(img)
    if out_h < 1 or out_w < 1:
        raise ArgumentError(f"target size must be >= 1, got {(out_h, out_w)}")
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = _axis_coords(h, out_h)
    xs = _axis_coords(w, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def total_variation(img: np.ndarray) -> float:
    """Anisotropic mean-normalized total variation.

    Sum of absolute forward differences along both axes, divided by the
    number of difference terms, so values are comparable across sizes.
    """
    img = check_image(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ArgumentError(f"image must be at least 2x2, got {(h, w)}")
    dv = np.abs(np.diff(img, axis=0)).sum()
    dh = np.abs(np.diff(img, axis=1)).sum()
    n_terms = img.shape[2] * ((h - 1) * w + h * (w - 1))
    return float((dv + dh) / n_terms)


@dataclass
class TextureMetricReport:
    """Per-image TV energies plus their mean."""

    per_image: list[tuple[str, float]] = field(default_factory=list)

    @property
    def tv_energy(self) -> float:
        if not self.per_image:
            return 0.0
        return float(np.mean([v for _, v in self.per_image]))
