"""Training losses: perceptual content, Gram-matrix branch style, masked TV.

The style loss is branch-aware: the color branch is only matched against
the shallowest feature taps (keeping the effective receptive field of the
Gram computation small), while the texture branch uses every tap.

Feature extraction defaults to a frozen, seeded random conv stack so the
whole pipeline runs without downloaded weights; a pretrained VGG16 state
dict can be supplied via the DUALSTYLE_VGG16_WEIGHTS environment variable
(or the extractor's ``weights_path`` argument) and is preferred when
available.
"""
from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ArgumentError, NumericError, ShapeError
from .inputs import StepKind

logger = logging.getLogger(__name__)

VGG_WEIGHTS_ENV = "DUALSTYLE_VGG16_WEIGHTS"

# Tap layout shared by both backends: four taps of increasing depth.
TAP_NAMES = ("tap1", "tap2", "tap3", "tap4")
COLOR_TAPS = TAP_NAMES[:2]
TEXTURE_TAPS = TAP_NAMES
CONTENT_TAP = TAP_NAMES[1]

# VGG16 feature indices for relu1_2, relu2_2, relu3_3, relu4_3.
_VGG_TAP_INDICES = (3, 8, 15, 22)


class Branch(enum.Enum):
    COLOR = "color"
    TEXTURE = "texture"


def branch_taps(branch: Branch | str) -> tuple[str, ...]:
    branch = Branch(branch) if not isinstance(branch, Branch) else branch
    return COLOR_TAPS if branch is Branch.COLOR else TEXTURE_TAPS


class FeatureExtractor(nn.Module):
    """Frozen feature extractor with named taps.

    ``backend`` is either "fixed_random" (seeded random convs, always
    available) or "pretrained_perceptual" (VGG16 features loaded from a
    local state-dict file).
    """

    MIN_SIZE = 16

    def __init__(self, backend: str = "fixed_random", seed: int = 0,
                 weights_path: str | None = None):
        super().__init__()
        if backend not in ("fixed_random", "pretrained_perceptual"):
            raise ArgumentError(f"unknown backend {backend!r}")
        self.backend = backend
        if backend == "fixed_random":
            self._build_random(seed)
        else:
            self._build_vgg(weights_path)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _build_random(self, seed: int):
        gen = torch.Generator().manual_seed(seed)
        widths = (16, 32, 64, 128)
        convs = []
        c_in = 3
        with torch.no_grad():
            for c_out in widths:
                conv = nn.Conv2d(c_in, c_out, 3, padding=1, padding_mode="reflect")
                bound = 1.0 / math.sqrt(c_in * 9)
                conv.weight.copy_(torch.empty_like(conv.weight).uniform_(-bound, bound, generator=gen))
                conv.bias.zero_()
                convs.append(conv)
                c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.pool = nn.AvgPool2d(2)

    def _build_vgg(self, weights_path: str | None):
        from torchvision.models import vgg16

        path = weights_path or os.environ.get(VGG_WEIGHTS_ENV)
        if not path or not os.path.isfile(path):
            raise ArgumentError(f"pretrained weights file not found: {path!r}")
        net = vgg16(weights=None)
        net.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
        self.features = net.features[: _VGG_TAP_INDICES[-1] + 1]

    @classmethod
    def create(cls, backend: str = "auto", seed: int = 0,
               weights_path: str | None = None) -> "FeatureExtractor":
        """Build the preferred backend, falling back to fixed_random."""
        if backend == "auto":
            try:
                return cls("pretrained_perceptual", weights_path=weights_path)
            except (ArgumentError, ImportError, RuntimeError) as exc:
                logger.warning("pretrained perceptual weights unavailable (%s); "
                               "falling back to fixed_random features", exc)
                return cls("fixed_random", seed=seed)
        return cls(backend, seed=seed, weights_path=weights_path)

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        """Extract tap features from a (B, 3, H, W) tensor."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W), got {tuple(x.shape)}")
        if x.shape[2] < self.MIN_SIZE or x.shape[3] < self.MIN_SIZE:
            raise ShapeError(f"input {tuple(x.shape[2:])} below extractor minimum {self.MIN_SIZE}")
        feats = {}
        if self.backend == "fixed_random":
            h = x
            for i, conv in enumerate(self.convs):
                if i > 0:
                    h = self.pool(h)
                h = torch.relu(conv(h))
                feats[TAP_NAMES[i]] = h
        else:
            h = x
            tap = 0
            for i, layer in enumerate(self.features):
                h = layer(h)
                if i == _VGG_TAP_INDICES[tap]:
                    feats[TAP_NAMES[tap]] = h
                    tap += 1
        return feats

    def extract(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        return self(x)


def gram(feature: torch.Tensor) -> torch.Tensor:
    """Channel correlation matrix G[i, j] = sum_hw F[i] F[j] / (C * H * W).

    Accepts (C, H, W) or a batch (B, C, H, W); the batch form returns
    (B, C, C).
    """
    batched = feature.ndim == 4
    f = feature if batched else feature.unsqueeze(0)
    b, c, h, w = f.shape
    flat = f.reshape(b, c, h * w)
    g = torch.bmm(flat, flat.transpose(1, 2)) / (c * h * w)
    return g if batched else g.squeeze(0)


def branch_style_loss(
    out_features: dict[str, torch.Tensor],
    style_grams: dict[str, torch.Tensor],
    branch: Branch | str,
) -> torch.Tensor:
    """Mean squared Gram difference summed over the branch's tap set.

    ``style_grams`` maps tap name to an unbatched (C, C) target Gram.
    Batched output features are averaged over the batch.
    """
    taps = branch_taps(branch)
    missing = [t for t in taps if t not in out_features or t not in style_grams]
    if missing:
        raise ShapeError(f"missing taps for branch loss: {missing}")
    total = None
    for tap in taps:
        g_out = gram(out_features[tap])
        g_style = style_grams[tap]
        if g_out.ndim == 3:
            g_style = g_style.unsqueeze(0)
        if g_out.shape[-1] != g_style.shape[-1]:
            raise ShapeError(f"gram size mismatch at {tap}: {g_out.shape} vs {g_style.shape}")
        term = torch.mean((g_out - g_style) ** 2)
        total = term if total is None else total + term
    return total


def content_loss(out_features: dict[str, torch.Tensor],
                 content_features: dict[str, torch.Tensor]) -> torch.Tensor:
    """MSE over the designated mid-depth content tap."""
    a = out_features.get(CONTENT_TAP)
    b = content_features.get(CONTENT_TAP)
    if a is None or b is None:
        raise ShapeError(f"content tap {CONTENT_TAP!r} missing")
    if a.shape != b.shape:
        raise ShapeError(f"content feature shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean((a - b) ** 2)


def masked_total_variation(img: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Anisotropic TV with per-difference mask weighting.

    Each forward difference is weighted by the average mask value of its
    two endpoint pixels; the result is normalized by the total weight so
    an all-ones mask reduces to the plain mean-normalized TV. Accepts
    (C, H, W) or (B, C, H, W); the mask is (H, W) in [0, 1].
    """
    batched = img.ndim == 4
    x = img if batched else img.unsqueeze(0)
    b, c, h, w = x.shape
    if mask is None:
        mask = torch.ones(h, w, dtype=x.dtype, device=x.device)
    if mask.shape != (h, w):
        raise ShapeError(f"mask shape {tuple(mask.shape)} != image spatial {(h, w)}")

    dv = torch.abs(x[:, :, 1:, :] - x[:, :, :-1, :])
    dh = torch.abs(x[:, :, :, 1:] - x[:, :, :, :-1])
    wv = 0.5 * (mask[1:, :] + mask[:-1, :])
    wh = 0.5 * (mask[:, 1:] + mask[:, :-1])
    num = (dv * wv).sum(dim=(1, 2, 3)) + (dh * wh).sum(dim=(1, 2, 3))
    denom = c * (wv.sum() + wh.sum())
    if denom <= 0:
        return x.sum() * 0.0
    per_sample = num / denom
    return per_sample.mean()


def edge_exempt_mask(content: torch.Tensor) -> torch.Tensor:
    """Optional TV mask: 1 - normalized gradient magnitude of the content.

    Strong content edges get weight near 0, so the smoothing pressure
    concentrates on flat regions. ``content`` is (C, H, W) in [0, 1].
    """
    gray = content.mean(dim=0)
    gy = torch.zeros_like(gray)
    gx = torch.zeros_like(gray)
    gy[:-1, :] = gray[1:, :] - gray[:-1, :]
    gx[:, :-1] = gray[:, 1:] - gray[:, :-1]
    mag = torch.sqrt(gx ** 2 + gy ** 2)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    return 1.0 - mag


@dataclass(frozen=True)
class LossWeights:
    content: float = 1.0
    style_color: float = 1.0
    style_texture: float = 1.0
    mtv: float = 1.0

    def __post_init__(self):
        for name in ("content", "style_color", "style_texture", "mtv"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ArgumentError(f"loss weight {name} must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    """Per-term breakdown for one training step; inactive terms are exactly 0."""

    total: float
    content: float
    style_color: float
    style_texture: float
    mtv: float
    step_kind: StepKind


def assemble_loss(
    kind: StepKind,
    weights: LossWeights,
    content: torch.Tensor | float = 0.0,
    style_color: torch.Tensor | float = 0.0,
    style_texture: torch.Tensor | float = 0.0,
    mtv: torch.Tensor | float = 0.0,
) -> tuple[torch.Tensor | float, LossReport]:
    """Combine the active terms for the step kind.

    Texture-modeling steps use every term; texture-removal steps use the
    masked TV term only, with all other terms reported as exactly 0.
    Returns the weighted total (a tensor if any active term is one, for
    backprop) plus the float report.
    """
    if kind is StepKind.TEXTURE_REMOVAL:
        total = weights.mtv * mtv
        report_terms = {"content": 0.0, "style_color": 0.0, "style_texture": 0.0,
                        "mtv": _to_float(mtv)}
    else:
        total = (weights.content * content
                 + weights.style_color * style_color
                 + weights.style_texture * style_texture
                 + weights.mtv * mtv)
        report_terms = {"content": _to_float(content),
                        "style_color": _to_float(style_color),
                        "style_texture": _to_float(style_texture),
                        "mtv": _to_float(mtv)}
    total_f = _to_float(total)
    if not math.isfinite(total_f) or any(not math.isfinite(v) for v in report_terms.values()):
        raise NumericError(f"non-finite loss term in {kind.value} step: {report_terms}")
    return total, LossReport(total=total_f, step_kind=kind, **report_terms)


def _to_float(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)
