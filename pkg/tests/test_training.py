"""Loss, optimizer, metrics, synthetic scenes, and evaluation harnesses."""

import numpy as np
import pytest

from lpnet.errors import EmptyMaskError
from lpnet.evaluate import (baseline_sparse_interpolation, evaluate_model,
                            run_sparsity_sweep, run_steps_sweep)
from lpnet.metrics import compute_metrics
from lpnet.network import ArchConfig, DepthPyramid, LPNetModel
from lpnet.scenes import SceneSpec, generate_scene, make_scene_set
from lpnet.sparse import SparseDepth
from lpnet.tensor import GradTape, Tensor
from lpnet.training import Adam, multiscale_loss, train_model

from oracles import metrics_oracle, multiscale_loss_oracle


def pyramid_from_arrays(levels):
    """Wrap plain (1,1,h,w) arrays as a full DepthPyramid (scale 0..4)."""
    preds = [Tensor(lv) for lv in levels]
    return DepthPyramid(preds=preds, coarse=[None] * 5, confidences=[None] * 5,
                        selections=[None] * 5, pooled=None)


def full_levels(h, w, fill):
    return [np.full((1, 1, h >> i, w >> i), fill) for i in range(5)]


class TestMultiscaleLoss:
    def test_perfect_prediction_is_zero(self):
        gt = Tensor(np.full((1, 1, 16, 16), 3.25))
        mask = Tensor(np.ones((1, 1, 16, 16)))
        total, report = multiscale_loss(pyramid_from_arrays(full_levels(16, 16, 3.25)), gt, mask)
        assert total.item() == 0.0
        assert report.total == 0.0
        assert report.valid_count == 256

    def test_single_pixel_error_analytic(self):
        gt_arr = np.zeros((1, 1, 16, 16))
        mask_arr = np.zeros((1, 1, 16, 16))
        gt_arr[0, 0, 5, 7] = 4.0
        mask_arr[0, 0, 5, 7] = 1.0
        e = 0.75
        pyr = pyramid_from_arrays(full_levels(16, 16, 4.0 + e))
        total, report = multiscale_loss(pyr, Tensor(gt_arr), Tensor(mask_arr))
        assert total.item() == pytest.approx(5 * (e * e + e), rel=1e-12)
        assert report.valid_count == 1

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(2.0, 8.0, size=(1, 1, 8, 8))
        mask = (rng.random((1, 1, 8, 8)) < 0.7).astype(np.float64)
        levels = [rng.uniform(2.0, 8.0, size=(1, 1, max(8 >> i, 1), max(8 >> i, 1)))
                  for i in range(5)]
        total, _ = multiscale_loss(pyramid_from_arrays(levels), Tensor(gt), Tensor(mask))
        expect = multiscale_loss_oracle([lv[0, 0] for lv in levels], gt[0, 0], mask[0, 0])
        assert total.item() == pytest.approx(expect, rel=1e-10)

    def test_scale_weights_apply(self):
        gt = Tensor(np.full((1, 1, 16, 16), 1.0))
        mask = Tensor(np.ones((1, 1, 16, 16)))
        pyr = pyramid_from_arrays(full_levels(16, 16, 2.0))
        weights = [1.0, 0.5, 0.25, 0.0, 0.0]
        total, _ = multiscale_loss(pyr, gt, mask, scale_weights=weights)
        assert total.item() == pytest.approx(sum(weights) * 2.0, rel=1e-12)

    def test_empty_mask_raises(self):
        gt = Tensor(np.ones((1, 1, 16, 16)))
        mask = Tensor(np.zeros((1, 1, 16, 16)))
        with pytest.raises(EmptyMaskError):
            multiscale_loss(pyramid_from_arrays(full_levels(16, 16, 1.0)), gt, mask)

    def test_differentiable(self):
        rng = np.random.default_rng(1)
        gt = Tensor(rng.uniform(2, 8, size=(1, 1, 16, 16)))
        mask = Tensor(np.ones((1, 1, 16, 16)))
        levels = [Tensor(rng.uniform(2, 8, size=(1, 1, 16 >> i, 16 >> i)), requires_grad=True)
                  for i in range(5)]
        pyr = DepthPyramid(preds=levels, coarse=[None] * 5, confidences=[None] * 5,
                           selections=[None] * 5, pooled=None)
        with GradTape() as tape:
            total, _ = multiscale_loss(pyr, gt, mask)
            tape.backward(total)
        for lv in levels:
            assert tape.grad(lv) is not None
            assert np.all(np.isfinite(tape.grad(lv)))


class TestAdam:
    def run_adam(self, start, grad_fn, steps, lr):
        from collections import OrderedDict
        x = Tensor(np.array(start, dtype=np.float64), requires_grad=True)
        params = OrderedDict(x=x)
        opt = Adam(params, lr=lr)
        for _ in range(steps):
            opt.step({"x": grad_fn(x.data)})
        return x.data

    def test_descends_on_square(self):
        out = self.run_adam([1.0], lambda x: 2.0 * x, steps=1, lr=0.1)
        assert out[0] < 1.0

    def test_zero_gradient_keeps_params(self):
        out = self.run_adam([1.0, -2.0], lambda x: np.zeros_like(x), steps=5, lr=0.1)
        np.testing.assert_array_equal(out, [1.0, -2.0])

    def test_converges_on_2d_quadratic(self):
        # f(x) = (x-a)^T diag(1, 4) (x-a), minimum at a
        a = np.array([1.5, -2.0])
        d = np.array([1.0, 4.0])
        out = self.run_adam([0.0, 0.0], lambda x: 2.0 * d * (x - a), steps=200, lr=0.1)
        assert np.abs(out - a).max() < 1e-3

    def test_missing_grad_entry_skipped(self):
        from collections import OrderedDict
        x = Tensor(np.array([3.0]), requires_grad=True)
        opt = Adam(OrderedDict(x=x), lr=0.1)
        opt.step({})
        np.testing.assert_array_equal(x.data, [3.0])


class TestMetrics:
    def test_perfect_prediction(self):
        gt = np.random.default_rng(2).uniform(2, 8, size=(8, 8))
        rep = compute_metrics(gt.copy(), gt, np.ones_like(gt))
        assert rep.rmse_mm == 0 and rep.mae_mm == 0 and rep.irmse_per_km == 0
        assert rep.imae_per_km == 0 and rep.rel == 0
        assert rep.delta1 == 100.0 and rep.delta2 == 100.0 and rep.delta3 == 100.0

    def test_single_pixel_analytic(self):
        pred = np.array([[2.5]])
        gt = np.array([[2.0]])
        rep = compute_metrics(pred, gt, np.ones_like(gt))
        assert rep.mae_mm == pytest.approx(500.0)
        assert rep.rmse_mm == pytest.approx(500.0)
        assert rep.rel == pytest.approx(0.25)
        # max ratio is exactly 1.25, strictly-less comparison fails delta1
        assert rep.delta1 == 0.0
        assert rep.delta2 == 100.0 and rep.delta3 == 100.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        pred = rng.uniform(0.5, 9.0, size=(8, 8))
        gt = rng.uniform(2.0, 8.0, size=(8, 8))
        mask = (rng.random((8, 8)) < 0.8).astype(np.float64)
        rep = compute_metrics(pred, gt, mask)
        expect = metrics_oracle(pred, gt, mask)
        for key, value in expect.items():
            assert getattr(rep, key) == pytest.approx(value, rel=1e-12), key

    def test_rmse_at_least_mae(self):
        for seed in range(6):
            rng = np.random.default_rng(10 + seed)
            rep = compute_metrics(rng.uniform(1, 9, (6, 6)), rng.uniform(2, 8, (6, 6)),
                                  np.ones((6, 6)))
            assert rep.rmse_mm >= rep.mae_mm >= 0.0
            assert 0.0 <= rep.delta1 <= rep.delta2 <= rep.delta3 <= 100.0

    def test_delta_and_rel_scale_invariant(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(1, 9, size=(6, 6))
        gt = rng.uniform(2, 8, size=(6, 6))
        mask = np.ones((6, 6))
        a = compute_metrics(pred, gt, mask)
        b = compute_metrics(3.0 * pred, 3.0 * gt, mask)
        assert b.rel == pytest.approx(a.rel, rel=1e-12)
        assert b.delta1 == a.delta1 and b.delta2 == a.delta2 and b.delta3 == a.delta3
        assert b.rmse_mm == pytest.approx(3.0 * a.rmse_mm, rel=1e-12)
        assert b.mae_mm == pytest.approx(3.0 * a.mae_mm, rel=1e-12)

    def test_negative_predictions_clamped(self):
        rep = compute_metrics(np.array([[-1.0]]), np.array([[2.0]]), np.ones((1, 1)))
        assert rep.mae_mm == pytest.approx(2000.0)

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMaskError):
            compute_metrics(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))


class TestScenes:
    def test_plane_only_scene_is_affine(self):
        spec = SceneSpec(seed=5, height=32, width=32,
                         primitives=[{"kind": "plane", "z0": 4.0, "gx": 0.01, "gy": -0.02}],
                         depth_min=2.0, depth_max=8.0, sparse_count=50)
        _, depth, _ = generate_scene(spec)
        ys, xs = np.meshgrid(np.arange(32.0), np.arange(32.0), indexing="ij")
        design = np.stack([np.ones(32 * 32), xs.ravel(), ys.ravel()], axis=1)
        coef, residuals, *_ = np.linalg.lstsq(design, depth.ravel(), rcond=None)
        fit = design @ coef
        assert np.abs(fit - depth.ravel()).max() < 1e-9

    def test_same_seed_bit_identical(self):
        spec = SceneSpec.random(seed=6, height=32, width=32)
        img_a, depth_a, sparse_a = generate_scene(spec)
        img_b, depth_b, sparse_b = generate_scene(SceneSpec.random(seed=6, height=32, width=32))
        np.testing.assert_array_equal(img_a, img_b)
        np.testing.assert_array_equal(depth_a, depth_b)
        np.testing.assert_array_equal(sparse_a.depth.data, sparse_b.depth.data)

    def test_sphere_depth_minimum_at_center(self):
        spec = SceneSpec(seed=7, height=32, width=32, primitives=[
            {"kind": "plane", "z0": 7.0, "gx": 0.0, "gy": 0.0},
            {"kind": "sphere", "cy": 16.0, "cx": 16.0, "radius_px": 8.0,
             "z_center": 5.0, "radius_m": 1.5},
        ], depth_min=2.0, depth_max=8.0, sparse_count=50)
        _, depth, _ = generate_scene(spec)
        assert depth.min() == pytest.approx(5.0 - 1.5)
        assert np.unravel_index(depth.argmin(), depth.shape) == (16, 16)

    def test_depth_positive_and_sparse_subset(self):
        for i in range(4):
            spec = SceneSpec.random(seed=20 + i, height=32, width=32, sparse_count=64)
            image, depth, sparse = generate_scene(spec)
            assert depth.min() > 0
            assert image.shape == (3, 32, 32)
            assert sparse.valid_count() == 64
            sel = sparse.mask.data[0, 0] > 0
            np.testing.assert_array_equal(sparse.depth.data[0, 0][sel], depth[sel])


class TestTrainingLoop:
    def test_short_run_reduces_loss_and_is_deterministic(self):
        scenes = make_scene_set(0, "train", count=4, height=32, width=32, sparse_count=80)
        config = ArchConfig(base_channels=2, mfp_paths=1)

        model_a = LPNetModel(config, seed=1)
        hist_a = train_model(model_a, scenes, steps=15, batch_size=2, lr=1e-3, seed=2)
        model_b = LPNetModel(config, seed=1)
        hist_b = train_model(model_b, scenes, steps=15, batch_size=2, lr=1e-3, seed=2)

        assert hist_a == hist_b
        for (na, ta), (nb, tb) in zip(model_a.named_parameters().items(),
                                      model_b.named_parameters().items()):
            np.testing.assert_array_equal(ta.data, tb.data)
        assert hist_a[-1][1] < hist_a[0][1]
        assert all(np.isfinite(loss) for _, loss in hist_a)


class TestEvaluate:
    def setup_method(self):
        self.scenes = make_scene_set(1, "eval", count=2, height=32, width=32, sparse_count=100)
        self.model = LPNetModel(ArchConfig(base_channels=2, mfp_paths=1), seed=3)

    def test_baseline_interpolates_measurements(self):
        _, depth, sparse = self.scenes[0]
        dense = baseline_sparse_interpolation(sparse)
        assert dense.shape == depth.shape
        assert np.all(np.isfinite(dense))
        sel = sparse.mask.data[0, 0] > 0
        np.testing.assert_allclose(dense[sel], depth[sel], atol=1e-9)

    def test_evaluate_model_returns_finite_report(self):
        rep = evaluate_model(self.model, self.scenes)
        for name in ("rmse_mm", "mae_mm", "rel"):
            assert np.isfinite(getattr(rep, name))
            assert getattr(rep, name) >= 0

    def test_sparsity_sweep_full_fraction_matches_eval(self):
        rows = run_sparsity_sweep(self.model, self.scenes, [0.5, 1.0], seed=4)
        assert [row[0] for row in rows] == [0.5, 1.0]
        base = evaluate_model(self.model, self.scenes)
        assert rows[1][1].rmse_mm == pytest.approx(base.rmse_mm, rel=1e-12)

    def test_steps_sweep_shape_and_consistency(self):
        rows = run_steps_sweep(self.model, self.scenes, repeats=2)
        assert [row[0] for row in rows] == [1, 2, 3, 4, 5]
        base = evaluate_model(self.model, self.scenes, steps=5)
        assert rows[-1][1] == pytest.approx(base.rmse_mm, rel=1e-12)
        assert all(row[2] > 0 for row in rows)
