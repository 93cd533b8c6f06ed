"""Confidence estimation and confidence-gated fusion."""

import numpy as np
import pytest

from lpnet.errors import ShapeError
from lpnet.fusion import ConfidenceHead, estimate_confidence, fuse_depth
from lpnet.gradcheck import gradcheck
from lpnet.sparse import SparseDepth
from lpnet import tensor as T
from lpnet.tensor import GradTape, Tensor


def sparse_level(seed, h=8, w=8, count=20, n=1):
    rng = np.random.default_rng(seed)
    depth = np.zeros((n, 1, h, w))
    mask = np.zeros((n, 1, h, w))
    for b in range(n):
        idx = rng.choice(h * w, size=count, replace=False)
        depth[b, 0].ravel()[idx] = rng.uniform(1.0, 9.0, size=count)
        mask[b, 0].ravel()[idx] = 1.0
    return SparseDepth.from_arrays(depth, mask)


class TestConfidence:
    def test_all_invalid_forces_zero(self):
        z = np.zeros((1, 1, 8, 8))
        s = SparseDepth.from_arrays(z, z.copy())
        f = Tensor(np.random.default_rng(0).normal(size=(1, 4, 8, 8)))
        head = ConfidenceHead(np.random.default_rng(1), 4)
        c = estimate_confidence(f, s, head)
        np.testing.assert_array_equal(c.data, z)

    def test_zero_logits_give_half_at_valid_pixels(self):
        s = sparse_level(seed=2)
        f = Tensor(np.zeros((1, 4, 8, 8)))
        head = ConfidenceHead(np.random.default_rng(3), 4)
        head.conv.w.data[:] = 0.0
        head.conv.b.data[:] = 0.0
        c = estimate_confidence(f, s, head)
        np.testing.assert_array_equal(c.data, 0.5 * s.mask.data)

    def test_range_and_masking_over_random_draws(self):
        for seed in range(10):
            s = sparse_level(seed=10 + seed)
            f = Tensor(np.random.default_rng(30 + seed).normal(size=(1, 4, 8, 8)))
            head = ConfidenceHead(np.random.default_rng(50 + seed), 4)
            c = estimate_confidence(f, s, head).data
            assert np.all(c >= 0.0) and np.all(c <= 1.0)
            np.testing.assert_array_equal(c[s.mask.data == 0.0], 0.0)

    def test_spatial_mismatch_raises(self):
        s = sparse_level(seed=4)
        f = Tensor(np.zeros((1, 4, 4, 4)))
        with pytest.raises(ShapeError):
            estimate_confidence(f, s, ConfidenceHead(np.random.default_rng(5), 4))


class TestFusion:
    def test_endpoints(self):
        s = sparse_level(seed=6)
        coarse = Tensor(np.random.default_rng(7).uniform(1.0, 9.0, size=s.shape))
        ones = Tensor(np.ones(s.shape))
        zeros = Tensor(np.zeros(s.shape))
        np.testing.assert_array_equal(fuse_depth(coarse, s, ones).data, s.depth.data)
        np.testing.assert_array_equal(fuse_depth(coarse, s, zeros).data, coarse.data)

    def test_quarter_blend_analytic(self):
        depth = np.full((1, 1, 1, 1), 8.0)
        s = SparseDepth.from_arrays(depth, np.ones_like(depth))
        out = fuse_depth(Tensor(np.full((1, 1, 1, 1), 4.0)), s, Tensor(np.full((1, 1, 1, 1), 0.25)))
        assert out.item() == 5.0

    def test_identity_on_coarse_where_invalid(self):
        s = sparse_level(seed=8)
        f = Tensor(np.random.default_rng(9).normal(size=(1, 4, 8, 8)))
        head = ConfidenceHead(np.random.default_rng(10), 4)
        coarse = Tensor(np.random.default_rng(11).uniform(1.0, 9.0, size=s.shape))
        c = estimate_confidence(f, s, head)
        fused = fuse_depth(coarse, s, c)
        invalid = s.mask.data == 0.0
        np.testing.assert_array_equal(fused.data[invalid], coarse.data[invalid])

    def test_convexity_where_valid(self):
        for seed in range(6):
            s = sparse_level(seed=20 + seed)
            f = Tensor(np.random.default_rng(40 + seed).normal(size=(1, 4, 8, 8)))
            head = ConfidenceHead(np.random.default_rng(60 + seed), 4)
            coarse = Tensor(np.random.default_rng(80 + seed).uniform(1.0, 9.0, size=s.shape))
            fused = fuse_depth(coarse, s, estimate_confidence(f, s, head)).data
            valid = s.mask.data > 0
            lo = np.minimum(s.depth.data, coarse.data)
            hi = np.maximum(s.depth.data, coarse.data)
            assert np.all(fused[valid] >= lo[valid] - 1e-12)
            assert np.all(fused[valid] <= hi[valid] + 1e-12)

    def test_gradients_split_by_confidence(self):
        s = sparse_level(seed=12, h=4, w=4, count=8)
        cval = np.random.default_rng(13).uniform(0.1, 0.9, size=s.shape)
        coarse = Tensor(np.random.default_rng(14).uniform(1.0, 9.0, size=s.shape),
                        requires_grad=True)
        sdep = Tensor(s.depth.data, requires_grad=True)
        with GradTape() as tape:
            out = T.add(T.mul(Tensor(cval), sdep),
                        T.mul(Tensor(1.0 - cval), coarse))
            tape.backward(T.tsum(out))
        np.testing.assert_allclose(tape.grad(coarse), 1.0 - cval, atol=1e-12)
        np.testing.assert_allclose(tape.grad(sdep), cval, atol=1e-12)

    def test_fusion_gradcheck_through_confidence(self):
        s = sparse_level(seed=15, h=4, w=4, count=6)
        f = Tensor(np.random.default_rng(16).normal(size=(1, 2, 4, 4)))
        head = ConfidenceHead(np.random.default_rng(17), 2)
        coarse = Tensor(np.random.default_rng(18).uniform(1.0, 9.0, size=s.shape),
                        requires_grad=True)

        def fn(ps):
            c = estimate_confidence(f, s, head)
            return T.tsum(T.square(fuse_depth(ps[0], s, c)))

        report = gradcheck(fn, [coarse, head.conv.w, head.conv.b])
        assert report.passed, report.summary()
