"""Acceptance suite: one test per criterion, each printing a pass/fail line.

A3 trains the shipped desk-scale recipe on synthetic data and takes a few
minutes on CPU; everything else runs in seconds.
"""
import os

import numpy as np
import pytest
import torch

from conftest import write_dataset, write_style
from dualstyle.cli import main
from dualstyle.errors import ConfigError
from dualstyle.guided import GuidedFilterParams, guided_filter, smooth
from dualstyle.image import total_variation
from dualstyle.inputs import NoiseSpec, StepKind, sample_noise
from dualstyle.losses import (
    TAP_NAMES,
    Branch,
    branch_style_loss,
    content_loss,
    gram,
    masked_total_variation,
)
from dualstyle.model import ModelConfig, forward_dual, init_params, receptive_field
from dualstyle.train import evaluate_texture_differentiation, load_config, scan_dataset, train
from test_guided import brute_force_guided
from test_losses import CONTENT_TAP, check_gradients
from test_train import _setup_step, make_batch, train_step

RECIPE = os.path.join(os.path.dirname(__file__), "..", "recipes", "desk.toml")


def report(name, ok, detail=""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name} failed: {detail}"


def test_a1_guided_filter_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(20):
        img = rng.random((16, 16))
        guide = rng.random((16, 16))
        for r in (1, 2):
            for eps in (1e-4, 1e-2):
                got = guided_filter(guide, img, GuidedFilterParams(r, eps))
                ref = brute_force_guided(guide, img, r, eps)
                worst = max(worst, float(np.abs(got - ref).max()))
    report("A1 guided-filter oracle", worst < 1e-5, f"max abs dev {worst:.2e}")


def test_a2_gradient_checks():
    rng = np.random.default_rng(202)
    img = torch.from_numpy(rng.random((3, 8, 8)))
    mask = torch.from_numpy(rng.random((8, 8)))
    check_gradients(lambda x: masked_total_variation(x, mask), img, 100, seed=1)

    feats0 = {tap: torch.from_numpy(rng.random((4, 8, 8))) for tap in TAP_NAMES}
    style_grams = {tap: gram(torch.from_numpy(rng.random((4, 8, 8))))
                   for tap in TAP_NAMES}

    def style_fn(x):
        feats = dict(feats0)
        feats[TAP_NAMES[0]] = x
        return branch_style_loss(feats, style_grams, Branch.COLOR)

    check_gradients(style_fn, feats0[TAP_NAMES[0]], 100, seed=2)

    target = {CONTENT_TAP: torch.from_numpy(rng.random((4, 8, 8)))}
    check_gradients(lambda x: content_loss({CONTENT_TAP: x}, target),
                    torch.from_numpy(rng.random((4, 8, 8))), 100, seed=3)
    report("A2 gradient checks", True,
           "mtv/gram-style/content vs central differences, 100 coords each")


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    content = root / "content"
    content.mkdir()
    write_dataset(content, 32, size=128, seed=0)
    heldout = root / "heldout"
    heldout.mkdir()
    write_dataset(heldout, 8, size=128, seed=777)
    style = write_style(root, size=128)
    config = load_config(RECIPE, overrides={
        "content_dir": str(content),
        "style_image": style,
        "out_dir": str(root / "run"),
    })
    ckpt, _ = train(config)
    return {"config": config, "checkpoint": ckpt,
            "heldout": scan_dataset(heldout)}


def test_a3_distribution_differentiation(desk_run):
    cfg = desk_run["config"]
    rep = evaluate_texture_differentiation(
        desk_run["checkpoint"], desk_run["heldout"],
        cfg.input_policy.filter, NoiseSpec(0.0, 0.1), seed=5)
    ok = rep.mean_smooth <= 0.5 * rep.mean_noise
    report("A3 distribution differentiation", ok,
           f"mean TV smooth {rep.mean_smooth:.3e} vs noise {rep.mean_noise:.3e} "
           f"(ratio {rep.ratio:.2f})")


def test_a4_noise_statistics():
    field = sample_noise(1000, 1000, 1, NoiseSpec(0.0, 0.1), seed=404)
    mean_err = abs(float(field.mean()))
    sigma_err = abs(float(field.std()) - 0.1)
    report("A4 noise statistics", mean_err < 1e-3 and sigma_err < 1e-3,
           f"|mean| {mean_err:.2e}, |sigma-0.1| {sigma_err:.2e}")


def test_a5_receptive_field_invariant():
    cfg = ModelConfig()
    ordered = receptive_field(cfg, "color") < receptive_field(cfg, "texture")
    rejected = False
    try:
        ModelConfig(color_branch_convs=5, texture_branch_convs=5)
    except ConfigError:
        rejected = True
    report("A5 receptive-field invariant", ordered and rejected,
           f"RF color {receptive_field(cfg, 'color')} < texture "
           f"{receptive_field(cfg, 'texture')}, violating config rejected")


def test_a6_determinism(tmp_path):
    content = tmp_path / "content"
    content.mkdir()
    write_dataset(content, 4, size=48)
    style = write_style(tmp_path, size=48)
    config = tmp_path / "cfg.toml"
    config.write_text(f"""
style_image = "{style}"
content_dir = "{content}"
image_size = 32
batch_size = 2
total_steps = 6
log_every = 2
[model]
stem_channels = 8
color_branch_convs = 1
texture_branch_convs = 2
channel_width = 8
""")
    ckpts = []
    for run in ("r1", "r2"):
        out = tmp_path / run
        assert main(["train", "--config", str(config), "--out-dir", str(out)]) == 0
        ckpts.append((out / "model_final.ckpt").read_bytes())
    train_ok = ckpts[0] == ckpts[1]

    content_img = str(sorted(content.iterdir())[0])
    ckpt_path = str(tmp_path / "r1" / "model_final.ckpt")
    imgs = []
    for name in ("s1.png", "s2.png"):
        out = tmp_path / name
        assert main(["stylize", "--checkpoint", ckpt_path, "--content", content_img,
                     "--out", str(out)]) == 0
        imgs.append(out.read_bytes())
    stylize_ok = imgs[0] == imgs[1]
    report("A6 determinism", train_ok and stylize_ok,
           "bit-identical checkpoints and byte-identical smooth stylization")


def test_a7_texture_removal_rule(tmp_path):
    cfg, paths, fx, grams, state = _setup_step(tmp_path, total_steps=10)
    violations = []
    for step in range(10):
        before = {n: p.clone() for n, p in state.net.named_parameters()
                  if n.startswith("texture.")}
        rep = train_step(state, make_batch(paths, step, cfg), grams, fx, cfg)
        if rep.step_kind is StepKind.TEXTURE_REMOVAL:
            if rep.style_color != 0.0 or rep.style_texture != 0.0 or rep.content != 0.0:
                violations.append(f"step {step}: nonzero inactive term")
            for n, p in state.net.named_parameters():
                if n.startswith("texture.") and not torch.equal(before[n], p):
                    violations.append(f"step {step}: {n} changed")
    report("A7 texture-removal rule", not violations, "; ".join(violations))


def test_a8_degenerate_inputs():
    const = np.full((32, 32, 3), 0.5)
    smooth_id = np.array_equal(smooth(const, GuidedFilterParams(3, 1e-2)), const)
    tv_zero = total_variation(const) == 0.0

    net = init_params(ModelConfig(), 0)
    color, texture = forward_dual(net, const)
    finite = np.isfinite(color).all() and np.isfinite(texture).all()

    # Constant single-channel feature padded with zero channels: Gram must
    # be zero off the constant channel's diagonal entry.
    feat = torch.zeros(3, 4, 4, dtype=torch.float64)
    feat[0] = 0.7
    g = gram(feat).numpy()
    off_diag_zero = np.allclose(g - np.diag(np.diag(g)), 0.0)

    ok = smooth_id and tv_zero and finite and off_diag_zero
    report("A8 degenerate inputs", ok,
           f"smooth identity {smooth_id}, TV zero {tv_zero}, finite {finite}, "
           f"gram off-diagonal zero {off_diag_zero}")
