"""Dual-branch fully-convolutional generator.

One shared stem feeds a shallow color branch (small receptive field, so
it cannot synthesize texture) and a deeper texture branch with a residual
connection. All convs are 3x3 stride 1 with reflection padding; both
heads end in a sigmoid so outputs stay in [0, 1] even for unconstrained
(noised) inputs.
"""
from __future__ import annotations

import json
import math
import os
import zipfile
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import (
    ConfigError,
    DecodeError,
    IoError,
    NotFoundError,
    NumericError,
    ShapeError,
    VersionError,
)
from .image import save_image

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 16
    color_branch_convs: int = 2
    texture_branch_convs: int = 5
    channel_width: int = 32
    texture_instance_norm: bool = False

    def __post_init__(self):
        for name in ("stem_channels", "color_branch_convs", "texture_branch_convs", "channel_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.color_branch_convs >= self.texture_branch_convs:
            raise ConfigError(
                "color branch must be shallower than the texture branch "
                f"({self.color_branch_convs} >= {self.texture_branch_convs})"
            )


def receptive_field(config: ModelConfig, branch: str) -> int:
    """Theoretical receptive field of one branch's output, in pixels.

    Every path is a chain of 3x3 stride-1 convs, so RF = 1 + 2 * depth.
    """
    if branch == "color":
        depth = 1 + config.color_branch_convs
    elif branch == "texture":
        depth = 1 + config.texture_branch_convs
    else:
        raise ConfigError(f"unknown branch {branch!r}")
    return 1 + 2 * depth


def _conv(c_in: int, c_out: int) -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, 3, padding=1, padding_mode="reflect")


class DualBranchNet(nn.Module):
    """Shared stem, shallow color head, deeper texture head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        cs, cw = config.stem_channels, config.channel_width
        self.stem = _conv(3, cs)

        color = []
        for i in range(config.color_branch_convs):
            last = i == config.color_branch_convs - 1
            color.append(_conv(cs, 3 if last else cs))
        self.color = nn.ModuleList(color)

        texture = []
        for i in range(config.texture_branch_convs):
            c_in = cs if i == 0 else cw
            last = i == config.texture_branch_convs - 1
            texture.append(_conv(c_in, 3 if last else cw))
        self.texture = nn.ModuleList(texture)
        self.texture_norm = (
            nn.InstanceNorm2d(cw, affine=False) if config.texture_instance_norm else None
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        rf = receptive_field(self.config, "texture")
        if x.shape[2] < rf or x.shape[3] < rf:
            raise ShapeError(
                f"input {tuple(x.shape[2:])} smaller than texture receptive field {rf}"
            )
        if not torch.isfinite(x).all():
            raise NumericError("non-finite values in model input")

        h = torch.relu(self.stem(x))

        c = h
        for i, conv in enumerate(self.color):
            c = conv(c)
            if i < len(self.color) - 1:
                c = torch.relu(c)
        color_out = torch.sigmoid(c)

        t = h
        skip = None
        for i, conv in enumerate(self.texture):
            t = conv(t)
            if i < len(self.texture) - 1:
                if self.texture_norm is not None:
                    t = self.texture_norm(t)
                t = torch.relu(t)
                if i == 0:
                    skip = t
                # Residual from the first hidden activation into the last one.
                elif i == len(self.texture) - 2 and skip is not None and i >= 2:
                    t = t + skip
        texture_out = torch.sigmoid(t)
        return color_out, texture_out

    def color_path_parameters(self):
        """Parameters updated during texture-removal steps: stem + color head."""
        yield from self.stem.parameters()
        yield from self.color.parameters()


def init_params(config: ModelConfig, seed: int) -> DualBranchNet:
    """Build a net with deterministic fan-in-scaled uniform initialization."""
    net = DualBranchNet(config)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(net.named_parameters()):
            if p.ndim == 4:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
            else:
                fan_in = max(1, p.shape[0])
            bound = 1.0 / math.sqrt(fan_in)
            p.copy_(torch.empty_like(p).uniform_(-bound, bound, generator=gen))
    return net


def parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count from the layer shapes."""
    cs, cw = config.stem_channels, config.channel_width

    def conv_params(c_in, c_out):
        return c_out * c_in * 9 + c_out

    total = conv_params(3, cs)
    for i in range(config.color_branch_convs):
        last = i == config.color_branch_convs - 1
        total += conv_params(cs, 3 if last else cs)
    for i in range(config.texture_branch_convs):
        c_in = cs if i == 0 else cw
        last = i == config.texture_branch_convs - 1
        total += conv_params(c_in, 3 if last else cw)
    return total


def forward_dual(net: DualBranchNet, img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run one (H, W, 3) array through both branches; returns (color, texture)."""
    x = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
    x = x.permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        color, texture = net(x)
    to_np = lambda t: t.squeeze(0).permute(1, 2, 0).numpy().astype(np.float64)
    return to_np(color), to_np(texture)


def save_checkpoint(net: DualBranchNet, path: str | os.PathLike, extra: dict | None = None) -> None:
    """Write a versioned checkpoint (config manifest + named float32 tensors).

    ``extra`` may carry additional arrays (e.g. optimizer state). The write
    is atomic: a temp file is renamed into place.
    """
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION, dtype=np.int64),
        "config_json": np.frombuffer(
            json.dumps(asdict(net.config)).encode(), dtype=np.uint8
        ),
    }
    for name, p in net.state_dict().items():
        arrays[f"param/{name}"] = p.detach().numpy()
    if extra:
        arrays.update(extra)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            np.savez(f, **arrays)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | os.PathLike) -> tuple[DualBranchNet, ModelConfig, dict]:
    """Load a checkpoint; returns (net, config, extra arrays)."""
    if not os.path.isfile(path):
        raise NotFoundError(f"no such checkpoint: {path}")
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, OSError, ValueError) as exc:
        raise DecodeError(f"corrupt checkpoint {path}: {exc}") from exc
    if "format_version" not in arrays or "config_json" not in arrays:
        raise DecodeError(f"checkpoint {path} missing header fields")
    version = int(arrays.pop("format_version"))
    if version > CHECKPOINT_VERSION:
        raise VersionError(f"checkpoint version {version} > supported {CHECKPOINT_VERSION}")
    config = ModelConfig(**json.loads(bytes(arrays.pop("config_json"))))
    net = DualBranchNet(config)
    state = {}
    extra = {}
    for key, arr in arrays.items():
        if key.startswith("param/"):
            state[key[len("param/"):]] = torch.from_numpy(arr.copy())
        else:
            extra[key] = arr
    try:
        net.load_state_dict(state)
    except RuntimeError as exc:
        raise DecodeError(f"checkpoint {path} parameters inconsistent: {exc}") from exc
    return net, config, extra


def _tile_channels(fmap: np.ndarray) -> np.ndarray:
    """Tile (C, H, W) channel maps, each min-max normalized, into one grid."""
    c, h, w = fmap.shape
    cols = math.ceil(math.sqrt(c))
    rows = math.ceil(c / cols)
    grid = np.zeros((rows * h, cols * w), dtype=np.float64)
    for i in range(c):
        m = fmap[i]
        span = m.max() - m.min()
        norm = (m - m.min()) / span if span > 1e-8 else np.zeros_like(m)
        r, col = divmod(i, cols)
        grid[r * h:(r + 1) * h, col * w:(col + 1) * w] = norm
    return grid


def dump_feature_maps(net: DualBranchNet, img: np.ndarray, out_dir: str | os.PathLike) -> list[str]:
    """Write one normalized channel-grid PNG per conv layer; returns the paths."""
    if not os.path.isdir(out_dir):
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create {out_dir}: {exc}") from exc

    layers = [("stem", net.stem)]
    layers += [(f"color_{i}", m) for i, m in enumerate(net.color)]
    layers += [(f"texture_{i}", m) for i, m in enumerate(net.texture)]

    captured: dict[str, np.ndarray] = {}
    hooks = []
    for name, module in layers:
        def record(mod, inp, out, name=name):
            captured[name] = out.detach().squeeze(0).numpy()
        hooks.append(module.register_forward_hook(record))
    try:
        forward_dual(net, img)
    finally:
        for hk in hooks:
            hk.remove()

    paths = []
    for name, _ in layers:
        grid = _tile_channels(captured[name])
        path = os.path.join(str(out_dir), f"{name}.png")
        save_image(grid[:, :, None], path)
        paths.append(path)
    return paths
