import numpy as np
import pytest

from dualstyle.image import save_image


def synth_content(rng: np.random.Generator, size: int = 96) -> np.ndarray:
    """One synthetic content image: smooth gradients plus a few flat shapes."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    base = np.stack([
        0.2 + 0.6 * xx,
        0.2 + 0.6 * yy,
        0.5 + 0.3 * np.sin(2 * np.pi * (xx + yy) * rng.uniform(0.5, 1.5)),
    ], axis=2)
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.integers(0, size, 2)
        r = int(rng.integers(size // 8, size // 3))
        color = rng.random(3)
        mask = (yy * size - cy) ** 2 + (xx * size - cx) ** 2 < r ** 2
        base[mask] = color
    return np.clip(base, 0.0, 1.0)


def synth_style(rng: np.random.Generator, size: int = 96) -> np.ndarray:
    """A high-texture style image: strong colors with fine-scale structure."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    stripes = 0.5 + 0.5 * np.sign(np.sin(xx * 0.9 + yy * 0.4))
    speckle = rng.random((size, size))
    img = np.stack([
        0.8 * stripes + 0.2 * speckle,
        0.3 + 0.5 * speckle,
        1.0 - 0.7 * stripes,
    ], axis=2)
    return np.clip(img, 0.0, 1.0)


def write_dataset(root, n_images: int, size: int = 96, seed: int = 0) -> list[str]:
    """Write n synthetic content PNGs under root; returns the paths."""
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_images):
        p = str(root / f"content_{i:03d}.png")
        save_image(synth_content(rng, size), p)
        paths.append(p)
    return paths


def write_style(root, size: int = 96, seed: int = 99) -> str:
    p = str(root / "style.png")
    save_image(synth_style(np.random.default_rng(seed), size), p)
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
