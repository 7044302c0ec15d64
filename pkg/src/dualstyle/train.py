"""Dataset ingestion, the alternating training loop, and evaluation.

The loop alternates two step kinds when the input policy is
DIFFERENTIATED: texture-modeling steps feed smooth+noise inputs and apply
the full loss, texture-removal steps feed smooth-only inputs, apply the
masked TV loss alone, and update only the color path (stem + color head),
leaving texture-branch parameters untouched.

Everything is deterministic given (config, seed, thread count): batch
selection, crops and noise all derive from seeds split per step index, so
a run resumed from a checkpoint reproduces the uninterrupted run exactly.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, DatasetError, NumericError
from .guided import GuidedFilterParams, smooth
from .image import IMAGE_EXTENSIONS, load_image, resize, total_variation
from .inputs import (
    InputPolicy,
    InputVariant,
    NoiseSpec,
    StepKind,
    make_input,
    sample_noise,
    split_seed,
    step_kind_schedule,
)
from .losses import (
    Branch,
    FeatureExtractor,
    LossReport,
    LossWeights,
    assemble_loss,
    branch_style_loss,
    content_loss,
    edge_exempt_mask,
    gram,
    masked_total_variation,
)
from .model import DualBranchNet, ModelConfig, init_params, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    style_image: str = ""
    content_dir: str = ""
    out_dir: str = "runs"
    image_size: int = 256
    batch_size: int = 4
    total_steps: int = 2000
    learning_rate: float = 1e-3
    loss_weights: LossWeights = field(default_factory=LossWeights)
    input_policy: InputPolicy = field(default_factory=InputPolicy)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 10
    feature_backend: str = "auto"
    edge_mask: bool = False

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.image_size < 16:
            raise ConfigError(f"image_size must be >= 16, got {self.image_size}")


def config_from_dict(raw: dict, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from a plain dict (parsed TOML + CLI overrides)."""
    raw = dict(raw)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        kwargs = dict(raw)
        if "loss_weights" in kwargs and isinstance(kwargs["loss_weights"], dict):
            kwargs["loss_weights"] = LossWeights(**kwargs["loss_weights"])
        if "model" in kwargs and isinstance(kwargs["model"], dict):
            kwargs["model"] = ModelConfig(**kwargs["model"])
        if "input_policy" in kwargs and isinstance(kwargs["input_policy"], dict):
            pol = dict(kwargs["input_policy"])
            if "variant" in pol:
                pol["variant"] = InputVariant(pol["variant"])
            if "filter" in pol and isinstance(pol["filter"], dict):
                pol["filter"] = GuidedFilterParams(**pol["filter"])
            if "noise" in pol and isinstance(pol["noise"], dict):
                pol["noise"] = NoiseSpec(**pol["noise"])
            if "step_ratio" in pol:
                pol["step_ratio"] = tuple(pol["step_ratio"])
            kwargs["input_policy"] = InputPolicy(**pol)
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training config: {exc}") from exc


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> TrainConfig:
    """Read a TOML training config, applying CLI overrides on top."""
    if not os.path.isfile(path):
        raise ConfigError(f"no such config file: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, overrides)


def scan_dataset(content_dir: str | os.PathLike) -> list[str]:
    """Deterministic lexicographic listing of decodable image files."""
    if not os.path.isdir(content_dir):
        raise DatasetError(f"no such dataset directory: {content_dir}")
    paths = sorted(
        os.path.join(str(content_dir), name)
        for name in os.listdir(content_dir)
        if name.lower().endswith(IMAGE_EXTENSIONS)
    )
    if not paths:
        raise DatasetError(f"no images found in {content_dir}")
    return paths


def _fit_and_crop(img: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Resize the shorter side to ``size`` then take a random crop."""
    h, w = img.shape[:2]
    if min(h, w) < size:
        scale = size / min(h, w)
        img = resize(img, max(size, math.ceil(h * scale)), max(size, math.ceil(w * scale)))
    elif min(h, w) > size:
        scale = size / min(h, w)
        img = resize(img, max(size, round(h * scale)), max(size, round(w * scale)))
    h, w = img.shape[:2]
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return img[top:top + size, left:left + size]


def make_batch(paths: list[str], step_index: int, config: TrainConfig) -> np.ndarray:
    """Deterministic (B, size, size, 3) batch for one step.

    Image selection and crop offsets derive from (seed, step_index) only,
    so batches are reproducible independent of prior steps. Images that
    fail to decode are skipped with a warning, never aborting the run.
    """
    if not paths:
        raise DatasetError("empty dataset")
    rng = split_seed(config.seed, 1, step_index)
    crops = []
    attempts = 0
    while len(crops) < config.batch_size:
        idx = int(rng.integers(0, len(paths)))
        attempts += 1
        if attempts > 10 * config.batch_size + len(paths):
            raise DatasetError("too many undecodable images in dataset")
        try:
            img = load_image(paths[idx])
        except Exception as exc:
            logger.warning("skipping unreadable image %s: %s", paths[idx], exc)
            continue
        crops.append(_fit_and_crop(img, config.image_size, rng))
    return np.stack(crops)


class AdamState:
    """Per-parameter first/second moment tensors plus update counters.

    Kept explicit (rather than torch.optim) so texture-removal steps can
    skip texture-branch parameters entirely and so the state serializes
    bit-exactly into checkpoints.
    """

    BETA1, BETA2, EPS = 0.9, 0.999, 1e-8

    def __init__(self, net: DualBranchNet):
        self.m = {n: torch.zeros_like(p) for n, p in net.named_parameters()}
        self.v = {n: torch.zeros_like(p) for n, p in net.named_parameters()}
        self.t = {n: 0 for n in self.m}

    def update(self, net: DualBranchNet, lr: float, active: set[str]) -> None:
        with torch.no_grad():
            for name, p in net.named_parameters():
                if name not in active or p.grad is None:
                    continue
                g = p.grad
                self.t[name] += 1
                t = self.t[name]
                self.m[name].mul_(self.BETA1).add_(g, alpha=1 - self.BETA1)
                self.v[name].mul_(self.BETA2).addcmul_(g, g, value=1 - self.BETA2)
                m_hat = self.m[name] / (1 - self.BETA1 ** t)
                v_hat = self.v[name] / (1 - self.BETA2 ** t)
                p.addcdiv_(m_hat, v_hat.sqrt() + self.EPS, value=-lr)

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"adam_m/{name}"] = self.m[name].numpy()
            out[f"adam_v/{name}"] = self.v[name].numpy()
            out[f"adam_t/{name}"] = np.array(self.t[name], dtype=np.int64)
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name in self.m:
            self.m[name] = torch.from_numpy(arrays[f"adam_m/{name}"].copy())
            self.v[name] = torch.from_numpy(arrays[f"adam_v/{name}"].copy())
            self.t[name] = int(arrays[f"adam_t/{name}"])


@dataclass
class TrainState:
    step: int
    net: DualBranchNet
    adam: AdamState


def _hwc_to_bchw(batch: np.ndarray) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
    return t.permute(0, 3, 1, 2)


def _active_names(net: DualBranchNet, kind: StepKind) -> set[str]:
    if kind is StepKind.TEXTURE_MODELING:
        return {n for n, _ in net.named_parameters()}
    return {n for n, _ in net.named_parameters()
            if n.startswith("stem.") or n.startswith("color.")}


def style_gram_targets(style_img: np.ndarray, extractor: FeatureExtractor,
                       image_size: int) -> dict[str, torch.Tensor]:
    """Tap-name -> Gram target, computed once from the raw style image."""
    style = resize(style_img, image_size, image_size)
    with torch.no_grad():
        feats = extractor(_hwc_to_bchw(style[None]))
        return {tap: gram(f.squeeze(0)) for tap, f in feats.items()}


def step_kind_for(config: TrainConfig, step_index: int) -> StepKind:
    """The step kind the policy assigns to one training step."""
    pol = config.input_policy
    if pol.variant is InputVariant.DIFFERENTIATED:
        return step_kind_schedule(step_index, pol.step_ratio)
    # Fixed regimes train every step with the full loss.
    return StepKind.TEXTURE_MODELING


def train_step(
    state: TrainState,
    batch: np.ndarray,
    style_grams: dict[str, torch.Tensor],
    extractor: FeatureExtractor,
    config: TrainConfig,
) -> LossReport:
    """One optimization step; mutates ``state`` in place."""
    kind = step_kind_for(config, state.step)
    pol = config.input_policy

    model_inputs = np.stack([
        make_input(batch[i], pol, kind,
                   seed=int(split_seed(config.seed, 2, state.step, i).integers(0, 2 ** 62)))
        for i in range(batch.shape[0])
    ])
    x = _hwc_to_bchw(model_inputs)
    content = _hwc_to_bchw(batch)

    net = state.net
    net.zero_grad(set_to_none=True)
    color_out, texture_out = net(x)
    mtv = _batch_mtv(color_out, content, config)

    if kind is StepKind.TEXTURE_MODELING:
        feats_color = extractor(color_out)
        feats_texture = extractor(texture_out)
        with torch.no_grad():
            feats_content = extractor(content)
        c_loss = 0.5 * (content_loss(feats_color, feats_content)
                        + content_loss(feats_texture, feats_content))
        sc = branch_style_loss(feats_color, style_grams, Branch.COLOR)
        st = branch_style_loss(feats_texture, style_grams, Branch.TEXTURE)
        total, report = assemble_loss(kind, config.loss_weights,
                                      content=c_loss, style_color=sc,
                                      style_texture=st, mtv=mtv)
    else:
        total, report = assemble_loss(kind, config.loss_weights, mtv=mtv)

    if isinstance(total, torch.Tensor):
        total.backward()
    state.adam.update(net, config.learning_rate, _active_names(net, kind))
    state.step += 1
    return report


def _batch_mtv(color_out: torch.Tensor, content: torch.Tensor,
               config: TrainConfig) -> torch.Tensor:
    if not config.edge_mask:
        return masked_total_variation(color_out)
    # Per-sample mask from each content crop.
    vals = []
    for i in range(color_out.shape[0]):
        mask = edge_exempt_mask(content[i])
        vals.append(masked_total_variation(color_out[i], mask))
    return torch.stack(vals).mean()


def _save_state(state: TrainState, config: TrainConfig, path: str) -> None:
    extra = state.adam.to_arrays()
    extra["trainer_step"] = np.array(state.step, dtype=np.int64)
    save_checkpoint(state.net, path, extra=extra)


def load_train_state(path: str | os.PathLike) -> TrainState:
    net, _, extra = load_checkpoint(path)
    adam = AdamState(net)
    if "trainer_step" not in extra:
        raise ConfigError(f"{path} is a model-only checkpoint; cannot resume from it")
    adam.load_arrays(extra)
    return TrainState(step=int(extra["trainer_step"]), net=net, adam=adam)


def train(config: TrainConfig, resume_from: str | None = None) -> tuple[str, str]:
    """Run the full training loop; returns (final checkpoint path, log path)."""
    # Single-thread math keeps runs bit-reproducible across invocations.
    torch.set_num_threads(1)
    paths = scan_dataset(config.content_dir)
    style = load_image(config.style_image)
    extractor = FeatureExtractor.create(config.feature_backend, seed=config.seed)
    style_grams = style_gram_targets(style, extractor, config.image_size)

    if resume_from:
        state = load_train_state(resume_from)
    else:
        net = init_params(config.model, config.seed)
        state = TrainState(step=0, net=net, adam=AdamState(net))

    os.makedirs(config.out_dir, exist_ok=True)
    log_path = os.path.join(config.out_dir, "metrics.jsonl")
    final_path = os.path.join(config.out_dir, "model_final.ckpt")
    mode = "a" if resume_from else "w"
    with open(log_path, mode) as log:
        while state.step < config.total_steps:
            t0 = time.monotonic()
            batch = make_batch(paths, state.step, config)
            step_idx = state.step
            try:
                report = train_step(state, batch, style_grams, extractor, config)
            except NumericError as exc:
                raise NumericError(f"step {step_idx}: {exc}") from exc
            wall_ms = (time.monotonic() - t0) * 1000.0
            if (step_idx + 1) % config.log_every == 0:
                record = {"step": step_idx, "kind": report.step_kind.value,
                          "content": report.content, "style_color": report.style_color,
                          "style_texture": report.style_texture, "mtv": report.mtv,
                          "total": report.total, "wall_ms": round(wall_ms, 3)}
                log.write(json.dumps(record) + "\n")
                log.flush()
            if (step_idx + 1) % config.checkpoint_every == 0:
                _save_state(state, config,
                            os.path.join(config.out_dir, f"ckpt_{step_idx + 1:06d}.ckpt"))
    _save_state(state, config, final_path)
    return final_path, log_path


@dataclass
class DifferentiationReport:
    """TV energies of color outputs under smooth vs smooth+noise inputs."""

    per_image: list[tuple[str, float, float]]  # (id, tv_smooth, tv_noise)
    mean_smooth: float
    mean_noise: float
    ratio: float  # mean_noise / mean_smooth


def evaluate_texture_differentiation(
    checkpoint: str | os.PathLike,
    eval_images: list[str],
    filter_params: GuidedFilterParams | None = None,
    noise_spec: NoiseSpec = NoiseSpec(),
    seed: int = 0,
) -> DifferentiationReport:
    """Measure how much texture the color branch adds only under noise.

    For each image the color output is computed for (a) the smooth input
    and (b) the same smooth input plus noise; the report carries both TV
    energies per image and the mean ratio. Report-only: no pass/fail
    judgment is applied here.
    """
    from .model import forward_dual

    if not eval_images:
        raise DatasetError("no evaluation images given")
    net, _, _ = load_checkpoint(checkpoint)
    rows = []
    for i, path in enumerate(eval_images):
        img = load_image(path)
        base = smooth(img, filter_params)
        noise = sample_noise(base.shape[0], base.shape[1], base.shape[2], noise_spec,
                             seed=int(split_seed(seed, 3, i).integers(0, 2 ** 62)))
        color_a, _ = forward_dual(net, base)
        color_b, _ = forward_dual(net, base + noise)
        rows.append((os.path.basename(str(path)), total_variation(color_a),
                     total_variation(color_b)))
    mean_a = float(np.mean([r[1] for r in rows]))
    mean_b = float(np.mean([r[2] for r in rows]))
    if mean_b == mean_a:
        ratio = 1.0
    elif mean_a == 0:
        ratio = float("inf")
    else:
        ratio = mean_b / mean_a
    return DifferentiationReport(per_image=rows, mean_smooth=mean_a,
                                 mean_noise=mean_b, ratio=ratio)


def config_to_dict(config: TrainConfig) -> dict:
    """Serialize a TrainConfig back to a plain TOML-compatible dict."""
    d = dataclasses.asdict(config)
    d["input_policy"]["variant"] = config.input_policy.variant.value
    d["input_policy"]["step_ratio"] = list(config.input_policy.step_ratio)
    return d
