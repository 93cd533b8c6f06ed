"""Image operations over NCHW tensors: convolution, transposed convolution,
bilinear resizing, per-pixel channel softmax, fractional-coordinate sampling,
and non-overlapping patch summation.

Forward kernels are vectorized numpy; each op registers an exact adjoint with
the active GradTape. Convolutions use an im2col contraction, the scatter side
of resampling uses bincount on flat indices.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, _make


def _require_nchw(op, t, channels=None):
    if t.data.ndim != 4:
        raise ShapeError(op, f"expected NCHW tensor, got shape {t.data.shape}")
    if channels is not None and t.data.shape[1] != channels:
        raise ShapeError(op, f"expected {channels} channels, got {t.data.shape[1]}")


# -- convolution --

def _conv_out_dim(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def _pad_hw(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp, kh, kw, stride, ho, wo):
    # (N, C, Ho, Wo, kh, kw) strided view over the padded input
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]


def _conv_fwd(x, w, stride, padding):
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    ho = _conv_out_dim(h, kh, stride, padding)
    wo = _conv_out_dim(wd, kw, stride, padding)
    win = _windows(_pad_hw(x, padding), kh, kw, stride, ho, wo)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, OC)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_grad_w(x, gout, kh, kw, stride, padding):
    n, c, h, wd = x.shape
    ho, wo = gout.shape[2], gout.shape[3]
    win = _windows(_pad_hw(x, padding), kh, kw, stride, ho, wo)
    # contract batch and output positions: (OC, C, kh, kw)
    gw = np.tensordot(gout, win, axes=([0, 2, 3], [0, 2, 3]))
    return np.ascontiguousarray(gw)


def _conv_grad_x(gout, w, stride, padding, in_h, in_w):
    n = gout.shape[0]
    oc, ic, kh, kw = w.shape
    ho, wo = gout.shape[2], gout.shape[3]
    gx = np.zeros((n, ic, in_h + 2 * padding, in_w + 2 * padding))
    gmat = gout.transpose(0, 2, 3, 1).reshape(-1, oc)  # (N*Ho*Wo, OC)
    for i in range(kh):
        for j in range(kw):
            contrib = gmat @ w[:, :, i, j]  # (N*Ho*Wo, C)
            contrib = contrib.reshape(n, ho, wo, ic).transpose(0, 3, 1, 2)
            gx[:, :, i : i + stride * (ho - 1) + 1 : stride,
               j : j + stride * (wo - 1) + 1 : stride] += contrib
    if padding:
        gx = gx[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(gx)


def conv2d(x, weight, bias, stride=1, padding=0):
    """Cross-correlation of x (N,C,H,W) with weight (OC,C,kh,kw) plus bias (OC,)."""
    _require_nchw("conv2d", x)
    if weight.data.ndim != 4:
        raise ShapeError("conv2d", f"weight must be OCxICxKHxKW, got {weight.data.shape}")
    oc, ic, kh, kw = weight.data.shape
    if x.data.shape[1] != ic:
        raise ShapeError("conv2d", f"input has {x.data.shape[1]} channels, weight expects {ic}")
    if bias.data.shape != (oc,):
        raise ShapeError("conv2d", f"bias shape {bias.data.shape} != ({oc},)")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d", f"invalid stride {stride} / padding {padding}")
    n, c, h, wd = x.data.shape
    if _conv_out_dim(h, kh, stride, padding) < 1 or _conv_out_dim(wd, kw, stride, padding) < 1:
        raise ShapeError("conv2d", f"kernel {kh}x{kw} too large for input {h}x{wd} with padding {padding}")

    out = _conv_fwd(x.data, weight.data, stride, padding)
    out += bias.data[None, :, None, None]

    def backward(g):
        return [
            (x, _conv_grad_x(g, weight.data, stride, padding, h, wd)),
            (weight, _conv_grad_w(x.data, g, kh, kw, stride, padding)),
            (bias, g.sum(axis=(0, 2, 3))),
        ]

    return _make("conv2d", out, (x, weight, bias), backward)


def conv2d_transpose(x, weight, bias, stride=1, padding=0):
    """Adjoint of conv2d: x (N,OC,H,W), weight (OC,IC,kh,kw) -> (N,IC,Ho,Wo)
    with Ho = (H-1)*stride - 2*padding + kh.
    """
    _require_nchw("conv2d_transpose", x)
    if weight.data.ndim != 4:
        raise ShapeError("conv2d_transpose", f"weight must be OCxICxKHxKW, got {weight.data.shape}")
    oc, ic, kh, kw = weight.data.shape
    if x.data.shape[1] != oc:
        raise ShapeError("conv2d_transpose",
                         f"input has {x.data.shape[1]} channels, weight expects {oc}")
    if bias.data.shape != (ic,):
        raise ShapeError("conv2d_transpose", f"bias shape {bias.data.shape} != ({ic},)")
    n, _, h, wd = x.data.shape
    out_h = (h - 1) * stride - 2 * padding + kh
    out_w = (wd - 1) * stride - 2 * padding + kw
    if out_h < 1 or out_w < 1:
        raise ShapeError("conv2d_transpose", f"degenerate output {out_h}x{out_w}")

    out = _conv_grad_x(x.data, weight.data, stride, padding, out_h, out_w)
    out += bias.data[None, :, None, None]

    def backward(g):
        return [
            (x, _conv_fwd(g, weight.data, stride, padding)),
            (weight, _conv_grad_w(g, x.data, kh, kw, stride, padding)),
            (bias, g.sum(axis=(0, 2, 3))),
        ]

    return _make("conv2d_transpose", out, (x, weight, bias), backward)


# -- bilinear resizing --

_RESIZE_CACHE = {}


def _axis_map(n_in, n_out):
    """Source taps for align-corners-false interpolation along one axis."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    # floor(src) <= n_in - 1 after clamping, so the second tap never carries
    # weight 1.0 and integer positions read back bit-exactly
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = src - i0
    mat = np.zeros((n_out, n_in))
    mat[np.arange(n_out), i0] += 1.0 - w
    mat[np.arange(n_out), i1] += w
    return i0, i1, w, mat


def _resize_plan(in_h, in_w, out_h, out_w):
    key = (in_h, in_w, out_h, out_w)
    plan = _RESIZE_CACHE.get(key)
    if plan is None:
        r0, r1, wr, mh = _axis_map(in_h, out_h)
        c0, c1, wc, mw = _axis_map(in_w, out_w)
        plan = (r0, r1, wr[:, None], c0, c1, wc, mh.T.copy(), mw.T.copy())
        _RESIZE_CACHE[key] = plan
    return plan


def bilinear_resize(x, out_h, out_w):
    """Resize (N,C,H,W) to (N,C,out_h,out_w); identity when sizes match.

    The forward pass uses the lerp form a + w*(b - a), which preserves
    constants bit-exactly and keeps outputs inside the input value range.
    """
    _require_nchw("bilinear_resize", x)
    if out_h < 1 or out_w < 1:
        raise ShapeError("bilinear_resize", f"invalid target size {out_h}x{out_w}")
    n, c, h, w = x.data.shape
    r0, r1, wr, c0, c1, wc, mh_t, mw_t = _resize_plan(h, w, out_h, out_w)

    rows_a = x.data[:, :, r0, :]
    rows = rows_a + wr * (x.data[:, :, r1, :] - rows_a)
    cols_a = rows[:, :, :, c0]
    out = cols_a + wc * (rows[:, :, :, c1] - cols_a)

    def backward(g):
        # adjoint via the equivalent interpolation matrices
        return [(x, np.matmul(mh_t, np.matmul(g, mw_t.T)))]

    return _make("bilinear_resize", out, (x,), backward)


# -- per-pixel channel softmax --

def softmax_channel(x):
    """Softmax over the channel dimension, stabilized by max subtraction."""
    _require_nchw("softmax_channel", x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return [(x, y * (g - (g * y).sum(axis=1, keepdims=True)))]

    return _make("softmax_channel", y, (x,), backward)


# -- fractional sampling --

def sample_bilinear_at(x, coords):
    """Bilinear reads from x (N,1,H,W) at absolute pixel coordinates.

    coords is (N,2,Ho,Wo): channel 0 holds row (y), channel 1 column (x)
    positions. Out-of-range coordinates clamp to the nearest edge pixel.
    Differentiable w.r.t. both the sampled values and the coordinates.
    """
    _require_nchw("sample_bilinear_at", x, channels=1)
    _require_nchw("sample_bilinear_at", coords, channels=2)
    if coords.data.shape[0] != x.data.shape[0]:
        raise ShapeError("sample_bilinear_at",
                         f"batch mismatch {coords.data.shape[0]} vs {x.data.shape[0]}")
    n, _, h, w = x.data.shape
    ho, wo = coords.data.shape[2], coords.data.shape[3]

    ys = coords.data[:, 0]
    xs = coords.data[:, 1]
    yc = np.clip(ys, 0.0, h - 1.0)
    xc = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(yc).astype(np.int64)
    x0 = np.floor(xc).astype(np.int64)
    wy = yc - y0
    wx = xc - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    img = x.data[:, 0]
    nidx = np.arange(n)[:, None, None]
    v00 = img[nidx, y0, x0]
    v01 = img[nidx, y0, x1]
    v10 = img[nidx, y1, x0]
    v11 = img[nidx, y1, x1]

    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    out = (top + wy * (bot - top))[:, None]

    # clamp subgradient: zero outside the image, one on the closed interior
    dy_gate = ((ys >= 0.0) & (ys <= h - 1.0)).astype(np.float64)
    dx_gate = ((xs >= 0.0) & (xs <= w - 1.0)).astype(np.float64)

    def backward(g):
        gz = g[:, 0]
        w00 = (1.0 - wy) * (1.0 - wx)
        w01 = (1.0 - wy) * wx
        w10 = wy * (1.0 - wx)
        w11 = wy * wx
        base = (np.arange(n)[:, None, None] * (h * w))
        flat = np.concatenate([
            (base + y0 * w + x0).ravel(),
            (base + y0 * w + x1).ravel(),
            (base + y1 * w + x0).ravel(),
            (base + y1 * w + x1).ravel(),
        ])
        vals = np.concatenate([
            (gz * w00).ravel(), (gz * w01).ravel(),
            (gz * w10).ravel(), (gz * w11).ravel(),
        ])
        gx_img = np.bincount(flat, weights=vals, minlength=n * h * w).reshape(n, 1, h, w)

        gy = gz * (bot - top) * dy_gate
        gxc = gz * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10)) * dx_gate
        gcoords = np.stack([gy, gxc], axis=1)
        return [(x, gx_img), (coords, gcoords)]

    return _make("sample_bilinear_at", out, (x, coords), backward)


# -- patch pooling --

def patch_sum(x, size):
    """Sum over non-overlapping size x size patches; (N,C,H,W) -> (N,C,H/s,W/s)."""
    _require_nchw("patch_sum", x)
    if size < 1:
        raise ShapeError("patch_sum", f"invalid patch size {size}")
    n, c, h, w = x.data.shape
    if h % size or w % size:
        raise ShapeError("patch_sum", f"dims {h}x{w} not divisible by patch size {size}")
    hs, ws = h // size, w // size
    out = x.data.reshape(n, c, hs, size, ws, size).sum(axis=(3, 5))

    def backward(g):
        gx = np.broadcast_to(g[:, :, :, None, :, None], (n, c, hs, size, ws, size))
        return [(x, gx.reshape(n, c, h, w))]

    return _make("patch_sum", out, (x,), backward)
