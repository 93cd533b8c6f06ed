"""The full depth completion network.

Two identical-architecture encoders (color image; sparse depth + mask) run
over five scales, fused per scale by 1x1 convolutions. The deepest fused
feature passes through the multi-path enhancement, then a decoder walks back
up with stride-2 deconvolutions and skip connections. Prediction proceeds in
five progressive steps: regress a 1/16-scale depth, fuse with pooled
measurements, then per scale upsample x2, fuse again, and refine with the
selective deformable filters.
"""

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .fusion import ConfidenceHead, estimate_confidence, fuse_depth
from .layers import LEAKY_SLOPE, Conv, Deconv, ResidualBlock
from .mfp import MFPParams, mfp_forward
from .ops import bilinear_resize
from .rng import stream
from .sdf import SDFParams, sdf_forward
from .sparse import PYRAMID_LEVELS, PoolingParams, build_pyramid
from .tensor import Tensor, concat_channels, leaky_relu, softplus

SCALES = PYRAMID_LEVELS + 1  # resolutions 1/1 .. 1/16

# fresh models start their coarse regression near scene scale instead of
# softplus(0) ~ 0.69 m, which shortens the burn-in of the smoke training
RH_BIAS_INIT = 2.0


@dataclass
class ArchConfig:
    """Width plan and module knobs; the paper-scale model is out of scope,
    so these default to desk scale."""

    base_channels: int = 16
    channel_multipliers: tuple = (1, 2, 4, 8, 8)
    mfp_paths: int = 4
    sdf_kernel: int = 3

    def channels(self):
        return [self.base_channels * m for m in self.channel_multipliers]

    def validate(self):
        if self.base_channels < 1:
            raise ShapeError("ArchConfig", f"base_channels {self.base_channels} < 1")
        if len(self.channel_multipliers) != SCALES:
            raise ShapeError("ArchConfig",
                             f"need {SCALES} channel multipliers, got {len(self.channel_multipliers)}")
        if self.mfp_paths < 1:
            raise ShapeError("ArchConfig", f"mfp_paths {self.mfp_paths} < 1")
        bottleneck = self.channels()[-1]
        if bottleneck % self.mfp_paths:
            raise ShapeError("ArchConfig",
                             f"bottleneck channels {bottleneck} not divisible by {self.mfp_paths} paths")
        if self.sdf_kernel % 2 == 0:
            raise ShapeError("ArchConfig", f"sdf_kernel {self.sdf_kernel} must be odd")
        return self


class Encoder:
    """Stem conv + residual block at full resolution, then per scale two
    residual blocks, the first with stride-2 downsampling."""

    def __init__(self, rng, in_ch, channels):
        self.stem = Conv(rng, in_ch, channels[0], k=3)
        self.block0 = ResidualBlock(rng, channels[0], channels[0])
        self.stages = []
        for i in range(1, SCALES):
            self.stages.append((
                ResidualBlock(rng, channels[i - 1], channels[i], stride=2),
                ResidualBlock(rng, channels[i], channels[i]),
            ))

    def __call__(self, x):
        feats = [self.block0(leaky_relu(self.stem(x), LEAKY_SLOPE))]
        for down, refine in self.stages:
            feats.append(refine(down(feats[-1])))
        return feats

    def named_params(self, prefix):
        yield from self.stem.named_params(f"{prefix}.stem")
        yield from self.block0.named_params(f"{prefix}.block0")
        for i, (down, refine) in enumerate(self.stages):
            yield from down.named_params(f"{prefix}.s{i + 1}.down")
            yield from refine.named_params(f"{prefix}.s{i + 1}.refine")


@dataclass
class DepthPyramid:
    """Everything the progressive predictor produces, indexed by scale
    (0 = full resolution ... 4 = 1/16)."""

    preds: list
    coarse: list
    confidences: list
    selections: list
    pooled: object
    steps: int = 5

    def finest(self):
        for scale in range(SCALES):
            if self.preds[scale] is not None:
                return scale, self.preds[scale]
        raise ValueError("empty pyramid")


class LPNetModel:
    """Parameter container plus the forward passes over it."""

    def __init__(self, config, seed=0):
        self.config = config.validate()
        self.seed = seed
        rng = stream(seed, "init")
        ch = config.channels()

        self.enc_img = Encoder(rng, 3, ch)
        self.enc_dep = Encoder(rng, 2, ch)
        self.fuse_convs = [Conv(rng, 2 * ch[i], ch[i], k=1, padding=0) for i in range(SCALES)]
        self.mfp = MFPParams(rng, ch[-1], config.mfp_paths)
        self.deconvs = [Deconv(rng, ch[i + 1], ch[i]) for i in range(SCALES - 1)]
        self.reduces = [Conv(rng, 2 * ch[i], ch[i], k=3) for i in range(SCALES - 1)]
        self.dec_blocks = [ResidualBlock(rng, ch[i], ch[i]) for i in range(SCALES - 1)]
        self.rh = Conv(rng, ch[-1], 1, k=3, bias_init=RH_BIAS_INIT)
        self.conf_heads = [ConfidenceHead(rng, ch[i]) for i in range(SCALES)]
        self.sdf = [SDFParams(rng, ch[i], k=config.sdf_kernel) for i in range(SCALES - 1)]
        self.pooling = PoolingParams(rng)

    # -- parameters --

    def named_parameters(self):
        params = OrderedDict()
        def collect(pairs):
            for name, tensor in pairs:
                params[name] = tensor
        collect(self.enc_img.named_params("enc_img"))
        collect(self.enc_dep.named_params("enc_dep"))
        for i, conv in enumerate(self.fuse_convs):
            collect(conv.named_params(f"fuse.s{i}"))
        collect(self.mfp.named_params("mfp"))
        for i, deconv in enumerate(self.deconvs):
            collect(deconv.named_params(f"dec.s{i}.up"))
        for i, conv in enumerate(self.reduces):
            collect(conv.named_params(f"dec.s{i}.reduce"))
        for i, block in enumerate(self.dec_blocks):
            collect(block.named_params(f"dec.s{i}.block"))
        collect(self.rh.named_params("rh"))
        for i, head in enumerate(self.conf_heads):
            collect(head.named_params(f"conf.s{i}"))
        for i, params_i in enumerate(self.sdf):
            collect(params_i.named_params(f"sdf.s{i}"))
        collect(self.pooling.named_params("pool"))
        return params

    def parameter_count(self):
        return sum(t.data.size for t in self.named_parameters().values())

    # -- forward passes --

    def _check_input(self, image, s):
        if image.data.ndim != 4 or image.data.shape[1] != 3:
            raise ShapeError("encode", f"image must be (N,3,H,W), got {image.data.shape}")
        n, _, h, w = image.data.shape
        if s.shape != (n, 1, h, w):
            raise ShapeError("encode", f"sparse depth {s.shape} does not match image {image.data.shape}")
        factor = 1 << (SCALES - 1)
        if h % factor or w % factor:
            raise ShapeError("encode", f"input dims {h}x{w} not divisible by {factor}")

    def encode(self, image, s):
        """Fused per-scale features from both modalities."""
        self._check_input(image, s)
        f_img = self.enc_img(image)
        f_dep = self.enc_dep(concat_channels([s.depth, s.mask]))
        fused = []
        for i in range(SCALES):
            fused.append(self.fuse_convs[i](concat_channels([f_img[i], f_dep[i]])))
        return fused

    def decode(self, fused):
        """Decoder features per scale; index 4 is the enhanced bottleneck."""
        feats = [None] * SCALES
        feats[-1] = mfp_forward(fused[-1], self.mfp)
        for i in range(SCALES - 2, -1, -1):
            x = self.deconvs[i](feats[i + 1])
            x = concat_channels([x, fused[i]])
            x = leaky_relu(self.reduces[i](x), LEAKY_SLOPE)
            feats[i] = self.dec_blocks[i](x)
        return feats

    def regression_head(self, f_bottleneck):
        """Coarse 1/16-scale depth; softplus keeps it smoothly non-negative."""
        return softplus(self.rh(f_bottleneck))

    def progressive_predict(self, image, s, steps=SCALES):
        """Run the first `steps` coarse-to-fine prediction steps."""
        if not 1 <= steps <= SCALES:
            raise ShapeError("progressive_predict", f"steps must be 1..{SCALES}, got {steps}")
        self._check_input(image, s)
        pooled = build_pyramid(s, self.pooling)
        f_dec = self.decode(self.encode(image, s))

        preds = [None] * SCALES
        coarse = [None] * SCALES
        confs = [None] * SCALES
        sels = [None] * SCALES

        coarse[-1] = self.regression_head(f_dec[-1])
        confs[-1] = estimate_confidence(f_dec[-1], pooled[-1], self.conf_heads[-1])
        preds[-1] = fuse_depth(coarse[-1], pooled[-1], confs[-1])

        for step in range(2, steps + 1):
            i = SCALES - step
            prev = preds[i + 1]
            coarse[i] = bilinear_resize(prev, 2 * prev.data.shape[2], 2 * prev.data.shape[3])
            confs[i] = estimate_confidence(f_dec[i], pooled[i], self.conf_heads[i])
            fused_depth = fuse_depth(coarse[i], pooled[i], confs[i])
            preds[i], sels[i] = sdf_forward(fused_depth, f_dec[i], self.sdf[i])

        return DepthPyramid(preds=preds, coarse=coarse, confidences=confs,
                            selections=sels, pooled=pooled, steps=steps)

    def infer_steps(self, image, s, steps=SCALES):
        """Full-resolution depth from a truncated progressive run."""
        pyr = self.progressive_predict(image, s, steps=steps)
        scale, pred = pyr.finest()
        if scale == 0:
            return pred
        h, w = image.data.shape[2], image.data.shape[3]
        return bilinear_resize(pred, h, w)
