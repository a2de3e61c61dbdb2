"""Optimizer arithmetic, schedule shape, PSNR conventions, and the fit loop."""

import csv
import math

import numpy as np
import pytest

from n2l.autodiff import Tensor
from n2l.errors import ContractViolation, TrainingDiverged
from n2l.model import get_setting
from n2l.noise import build_pyramid, positional_embedding
from n2l.training import Adam, TrainConfig, cosine_lr, overfit, psnr, psnr_from_mse


def _param(value, grad=None):
    p = Tensor(np.full((1, 1, 1, 1), float(value)), requires_grad=True)
    if grad is not None:
        p.grad = np.full((1, 1, 1, 1), float(grad))
    return p


def test_adam_first_step_moves_by_learning_rate():
    # with a single constant gradient the bias-corrected ratio is g/|g|,
    # so the very first update is -lr regardless of gradient magnitude
    cfg = TrainConfig(steps=10)
    for g in (3.0, 0.25, -7.5):
        p = _param(0.5, grad=g)
        Adam([p], ["w"], cfg).step(0.1)
        assert p.data[0, 0, 0, 0] == pytest.approx(0.5 - math.copysign(0.1, g), abs=1e-6)


def test_adam_matches_scalar_reference_over_steps():
    cfg = TrainConfig(steps=10)
    grads = [3.0, -1.5, 0.25, 2.0, -0.75]
    p = _param(0.5)
    opt = Adam([p], ["w"], cfg)
    theta, m, v = 0.5, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        p.grad = np.full((1, 1, 1, 1), g)
        opt.step(0.01, t - 1)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mhat = m / (1.0 - cfg.beta1**t)
        vhat = v / (1.0 - cfg.beta2**t)
        theta -= 0.01 * mhat / (math.sqrt(vhat) + cfg.eps)
        assert p.data[0, 0, 0, 0] == pytest.approx(theta, rel=1e-14)


def test_adam_zero_gradient_leaves_parameter_unchanged():
    p = _param(1.25, grad=0.0)
    Adam([p], ["w"], TrainConfig(steps=2)).step(0.1)
    assert p.data[0, 0, 0, 0] == 1.25


def test_adam_is_deterministic():
    cfg = TrainConfig(steps=5)
    results = []
    for _ in range(2):
        rng = np.random.default_rng(3)
        p = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
        opt = Adam([p], ["w"], cfg)
        for i in range(4):
            p.grad = rng.normal(size=p.shape)
            opt.step(cosine_lr(i, cfg), i)
        results.append(p.data.copy())
    assert np.array_equal(results[0], results[1])


def test_adam_rejects_non_finite_gradient():
    p = _param(0.0, grad=math.nan)
    opt = Adam([p], ["conv.weight"], TrainConfig(steps=2))
    with pytest.raises(TrainingDiverged, match=r"conv\.weight.*step 7"):
        opt.step(0.1, 7)


def test_cosine_schedule_endpoints_and_midpoint():
    cfg = TrainConfig(steps=1001)
    assert cosine_lr(0, cfg) == pytest.approx(8e-3, rel=1e-15)
    assert cosine_lr(1000, cfg) == pytest.approx(1e-5, rel=1e-9)
    assert cosine_lr(500, cfg) == pytest.approx((8e-3 + 1e-5) / 2.0, rel=1e-12)


def test_cosine_schedule_bounds_and_monotone_decay():
    cfg = TrainConfig(steps=64)
    values = [cosine_lr(s, cfg) for s in range(64)]
    assert all(cfg.lr_final <= v <= cfg.lr_init for v in values)
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert cosine_lr(0, TrainConfig(steps=1)) == 8e-3


def test_cosine_schedule_rejects_out_of_range_step():
    cfg = TrainConfig(steps=10)
    for bad in (-1, 10, 11):
        with pytest.raises(ContractViolation):
            cosine_lr(bad, cfg)


def test_train_config_validation():
    with pytest.raises(ContractViolation):
        TrainConfig(steps=0)
    with pytest.raises(ContractViolation):
        TrainConfig(lr_init=1e-5, lr_final=8e-3)


def test_psnr_sixteen_gray_levels():
    a = Tensor.zeros((1, 3, 4, 4))
    b = Tensor(np.full((1, 3, 4, 4), 16.0 / 255.0))
    want = 10.0 * math.log10(255.0**2 / 256.0)
    assert psnr(a, b) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(24.05, abs=5e-3)


def test_psnr_cap_and_symmetry():
    rng = np.random.default_rng(0)
    a = Tensor(rng.uniform(size=(1, 3, 5, 5)))
    b = Tensor(rng.uniform(size=(1, 3, 5, 5)))
    assert psnr(a, a) == 100.0
    assert psnr_from_mse(0.0) == 100.0
    assert psnr_from_mse(9.9e-11) == 100.0
    assert psnr_from_mse(1e-4) == pytest.approx(40.0, abs=1e-12)
    assert psnr(a, b) == psnr(b, a)


def test_psnr_shape_mismatch():
    with pytest.raises(ContractViolation):
        psnr(Tensor.zeros((1, 3, 4, 4)), Tensor.zeros((1, 3, 4, 5)))


def _tiny_image(h=8, w=8, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(0.2, 0.8, size=(1, 3, h, w)))


def test_overfit_reduces_loss_and_reports_schema(tmp_path):
    image = _tiny_image()
    config = get_setting(0)
    train = TrainConfig(steps=40, eval_every=10)
    model, report = overfit(image, config, train, seed=0)
    assert report.points[-1].mse < report.points[0].mse
    assert report.final_mse == report.points[-1].mse
    assert [p.step for p in report.points] == [0, 10, 20, 30, 40]
    assert report.points[-1].lr == 0.0
    assert report.wall_seconds > 0.0
    assert all(np.all(np.isfinite(p.data)) for p in model.parameters())

    path = tmp_path / "curve.csv"
    report.write_csv(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "mse", "psnr", "lr"]
    assert len(rows) == 1 + len(report.points)
    assert float(rows[1][1]) == pytest.approx(report.points[0].mse, rel=1e-9)


def test_overfit_is_deterministic():
    image = _tiny_image(seed=4)
    config = get_setting(0)
    train = TrainConfig(steps=12, eval_every=4)
    model_a, report_a = overfit(image, config, train, seed=2)
    model_b, report_b = overfit(image, config, train, seed=2)
    assert report_a.final_mse == report_b.final_mse
    for pa, pb in zip(model_a.parameters(), model_b.parameters()):
        assert np.array_equal(pa.data, pb.data)


def test_overfit_leaves_noise_untouched():
    image = _tiny_image(seed=5)
    config = get_setting(0)
    fused = build_pyramid(3, config, 8, 8).fused
    pe = positional_embedding(8, 8, config.pe_dims)
    before = fused.data.copy()
    overfit(image, config, TrainConfig(steps=6), seed=3, inputs=(fused, pe))
    assert np.array_equal(fused.data, before)
    assert fused.grad is None


def test_overfit_rejects_bad_image_shape():
    config = get_setting(0)
    with pytest.raises(ContractViolation):
        overfit(Tensor.zeros((2, 3, 8, 8)), config, TrainConfig(steps=2), seed=0)
    with pytest.raises(ContractViolation):
        overfit(Tensor.zeros((1, 1, 8, 8)), config, TrainConfig(steps=2), seed=0)
