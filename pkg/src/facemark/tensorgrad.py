"""Dense-tensor arithmetic with reverse-mode automatic differentiation.

The scope is deliberately narrow: exactly the layers the watermark
encoder/decoder and the toy embedder are built from (convolution, batch
normalization, relu, affine, pooling, channel concatenation, the two losses),
the differentiable augmentations applied between them during training
(spatial crop, bilinear resize, photometric stretch, straight-through), and
an Adam optimizer with a finite-difference gradient checker.

Conventions
-----------
* Values are float64 ``numpy`` arrays in C (row-major) order. Training runs
  in 64-bit so that finite-difference checks are tight; persistence at
  32-bit is handled by the callers that own file formats.
* A computation graph is built fresh for every training step. ``backward``
  may be called once per graph; a second call on the same loss raises.
* ``relu`` uses subgradient 0 at exactly 0. The clamp in the photometric
  ops passes gradient on the closed interval [0, 1].
* Results are independent of BLAS thread count because every output element
  has a fixed summation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

__all__ = [
    "Node",
    "ParamSet",
    "RunningStats",
    "FiniteDiffReport",
    "leaf",
    "parameter",
    "conv2d",
    "batchnorm2d",
    "relu",
    "sigmoid",
    "affine",
    "global_avg_pool",
    "concat_channels",
    "crop_spatial",
    "resize_bilinear",
    "adjust_brightness",
    "adjust_contrast",
    "straight_through",
    "add",
    "scale",
    "sum_all",
    "mse_loss",
    "bce_logits_loss",
    "softmax_cross_entropy",
    "backward",
    "adam_step",
    "finite_diff_check",
    "bilinear_resize",
]


class Node:
    """One vertex of the computation graph: a value plus how it was produced.

    ``grad`` stays ``None`` until a backward pass reaches the node; after
    ``backward`` it has the same shape as ``value`` for every node on a path
    from a parameter to the loss.
    """

    __slots__ = ("value", "op", "parents", "grad", "requires_grad", "_vjp", "_consumed")

    def __init__(self, value, op="leaf", parents=(), requires_grad=False, vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents = tuple(parents)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._vjp = vjp
        self._consumed = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def leaf(value, requires_grad=False):
    """Wrap an array as a graph leaf, validating finiteness."""
    node = Node(value, op="leaf", requires_grad=requires_grad)
    if not np.all(np.isfinite(node.value)):
        raise ValueError("leaf: value contains NaN or Inf")
    return node


def parameter(value):
    """A trainable leaf."""
    return leaf(value, requires_grad=True)


def _as_node(x):
    return x if isinstance(x, Node) else leaf(x)


def _result(value, op, parents, vjp):
    requires = any(p.requires_grad for p in parents)
    return Node(value, op=op, parents=parents, requires_grad=requires, vjp=vjp if requires else None)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(x_padded, k, stride, out_h, out_w):
    """(N, C, Hp, Wp) -> (N, C*k*k, out_h*out_w) patch matrix (copies)."""
    n, c, hp, wp = x_padded.shape
    sn, sc, sh, sw = x_padded.strides
    patches = np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(n, c, k, k, out_h, out_w),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(n, c * k * k, out_h * out_w)


def _col2im(cols, x_shape, k, stride, out_h, out_w):
    """Scatter-add (N, C*k*k, P) columns back onto an (N, C, Hp, Wp) grid."""
    n, c, hp, wp = x_shape
    out = np.zeros(x_shape, dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, out_h, out_w)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += cols[:, :, i, j]
    return out


def conv2d(x, weight, bias, stride=1, pad=0):
    """Cross-correlation with zero padding over an N x C x H x W batch.

    ``weight`` is C_out x C_in x k x k with k odd; output spatial size is
    (H + 2*pad - k) // stride + 1 and must divide evenly.
    """
    x, weight, bias = _as_node(x), _as_node(weight), _as_node(bias)
    if x.value.ndim != 4:
        raise ValueError(f"conv2d: input must be 4-D (N,C,H,W), got shape {x.value.shape}")
    if weight.value.ndim != 4:
        raise ValueError(f"conv2d: weight must be 4-D (C_out,C_in,k,k), got shape {weight.value.shape}")
    n, c_in, h, w = x.value.shape
    c_out, wc_in, kh, kw = weight.value.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    if wc_in != c_in:
        raise ValueError(f"conv2d: input has {c_in} channels but weight expects {wc_in} (axis 1)")
    if bias.value.shape != (c_out,):
        raise ValueError(f"conv2d: bias shape {bias.value.shape} does not match {c_out} output channels (axis 0)")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride must be >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    k = kh
    if (h + 2 * pad - k) % stride or (w + 2 * pad - k) % stride:
        raise ValueError(
            f"conv2d: spatial size {h}x{w} with pad={pad}, k={k}, stride={stride} "
            "does not produce an integral output size"
        )
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(f"conv2d: output size {out_h}x{out_w} is empty")

    if pad:
        xp = np.pad(x.value, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x.value
    cols = _im2col(xp, k, stride, out_h, out_w)
    w_mat = weight.value.reshape(c_out, c_in * k * k)
    out = np.matmul(w_mat, cols).reshape(n, c_out, out_h, out_w) + bias.value[None, :, None, None]

    def vjp(g):
        gf = g.reshape(n, c_out, out_h * out_w)
        gx = gw = gb = None
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if weight.requires_grad:
            gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.value.shape)
        if x.requires_grad:
            if stride == 1 and k - 1 - pad >= 0:
                # Input gradient as a correlation of the output gradient
                # with the flipped kernel: one BLAS call instead of the
                # scatter-add loop.
                margin = k - 1 - pad
                gop = np.pad(g, ((0, 0), (0, 0), (margin, margin), (margin, margin)))
                w_flip = weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                gcols = _im2col(gop, k, 1, h, w)
                gx = np.matmul(np.ascontiguousarray(w_flip.reshape(c_in, c_out * k * k)), gcols)
                gx = gx.reshape(n, c_in, h, w)
            else:
                gcols = np.matmul(w_mat.T, gf)
                gxp = _col2im(gcols, xp.shape, k, stride, out_h, out_w)
                gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
        return gx, gw, gb

    return _result(out, "conv2d", (x, weight, bias), vjp)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class RunningStats:
    """Exponential moving average of per-channel batch statistics.

    Initialized on the first update to the batch statistics themselves,
    then blended with ``momentum`` weight on the new batch.
    """

    momentum: float = 0.1
    mean: np.ndarray | None = None
    var: np.ndarray | None = None

    @property
    def populated(self):
        return self.mean is not None

    def update(self, mean, var):
        if self.mean is None:
            self.mean = mean.copy()
            self.var = var.copy()
        else:
            m = self.momentum
            self.mean = (1.0 - m) * self.mean + m * mean
            self.var = (1.0 - m) * self.var + m * var


def batchnorm2d(x, gamma, beta, mode="train", running=None, eps=1e-5):
    """Per-channel normalization over the N, H, W axes.

    ``train`` normalizes with biased batch statistics and, when ``running``
    is given, updates its moving averages. ``infer`` requires populated
    running statistics. The same biased-variance convention is used for
    normalization and for the stored running variance.
    """
    x, gamma, beta = _as_node(x), _as_node(gamma), _as_node(beta)
    if eps <= 0:
        raise ValueError(f"batchnorm2d: eps must be > 0, got {eps}")
    if x.value.ndim != 4:
        raise ValueError(f"batchnorm2d: input must be 4-D (N,C,H,W), got shape {x.value.shape}")
    n, c, h, w = x.value.shape
    if gamma.value.shape != (c,) or beta.value.shape != (c,):
        raise ValueError(
            f"batchnorm2d: gamma/beta shapes {gamma.value.shape}/{beta.value.shape} "
            f"do not match {c} channels (axis 1)"
        )
    if mode not in ("train", "infer"):
        raise ValueError(f"batchnorm2d: mode must be 'train' or 'infer', got {mode!r}")

    axes = (0, 2, 3)
    if mode == "train":
        mu = x.value.mean(axis=axes)
        var = np.square(x.value).mean(axis=axes) - np.square(mu)
        np.maximum(var, 0.0, out=var)  # guard rounding on constant channels
        if running is not None:
            running.update(mu, var)
    else:
        if running is None or not running.populated:
            raise ValueError("batchnorm2d: infer mode requires populated running statistics")
        mu, var = running.mean, running.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.value[None, :, None, None] * xhat + beta.value[None, :, None, None]
    m = n * h * w

    def vjp(g):
        gx = ggamma = gbeta = None
        if beta.requires_grad:
            gbeta = g.sum(axis=axes)
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=axes)
        if x.requires_grad:
            scale_c = (gamma.value * inv_std)[None, :, None, None]
            if mode == "train":
                g_mean = g.mean(axis=axes)[None, :, None, None]
                gxh_mean = (g * xhat).mean(axis=axes)[None, :, None, None]
                gx = scale_c * (g - g_mean - xhat * gxh_mean)
            else:
                gx = scale_c * g
        return gx, ggamma, gbeta

    return _result(out, "batchnorm2d", (x, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def relu(x):
    """Elementwise max(0, x); subgradient at 0 is 0."""
    x = _as_node(x)
    out = np.maximum(x.value, 0.0)
    mask = x.value > 0.0

    def vjp(g):
        return (g * mask,)

    return _result(out, "relu", (x,), vjp)


def sigmoid(x):
    """Numerically stable logistic function."""
    x = _as_node(x)
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _result(out, "sigmoid", (x,), vjp)


def affine(x, weight, bias):
    """x @ weight.T + bias over an N x F batch; weight is G x F."""
    x, weight, bias = _as_node(x), _as_node(weight), _as_node(bias)
    if x.value.ndim != 2 or weight.value.ndim != 2:
        raise ValueError(
            f"affine: expected 2-D input and weight, got shapes {x.value.shape} and {weight.value.shape}"
        )
    n, f = x.value.shape
    g_dim, wf = weight.value.shape
    if wf != f:
        raise ValueError(f"affine: input has {f} features but weight expects {wf} (axis 1)")
    if bias.value.shape != (g_dim,):
        raise ValueError(f"affine: bias shape {bias.value.shape} does not match {g_dim} outputs (axis 0)")
    out = x.value @ weight.value.T + bias.value

    def vjp(g):
        gx = g @ weight.value if x.requires_grad else None
        gw = g.T @ x.value if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _result(out, "affine", (x, weight, bias), vjp)


def global_avg_pool(x):
    """Spatial mean per channel: N x C x H x W -> N x C."""
    x = _as_node(x)
    if x.value.ndim != 4:
        raise ValueError(f"global_avg_pool: input must be 4-D, got shape {x.value.shape}")
    n, c, h, w = x.value.shape
    out = x.value.mean(axis=(2, 3))

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.value.shape).copy(),)

    return _result(out, "global_avg_pool", (x,), vjp)


def concat_channels(a, b):
    """Stack two N x C x H x W tensors along the channel axis, ``a`` first."""
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim != 4 or b.value.ndim != 4:
        raise ValueError("concat_channels: inputs must be 4-D (N,C,H,W)")
    if a.value.shape[0] != b.value.shape[0] or a.value.shape[2:] != b.value.shape[2:]:
        raise ValueError(
            f"concat_channels: batch/spatial shapes differ: {a.value.shape} vs {b.value.shape}"
        )
    ca = a.value.shape[1]
    out = np.concatenate([a.value, b.value], axis=1)

    def vjp(g):
        ga = g[:, :ca] if a.requires_grad else None
        gb = g[:, ca:] if b.requires_grad else None
        return ga, gb

    return _result(out, "concat_channels", (a, b), vjp)


def crop_spatial(x, top, left, height, width):
    """Slice a spatial window; gradient scatters back into the source."""
    x = _as_node(x)
    n, c, h, w = x.value.shape
    if not (0 <= top and top + height <= h and 0 <= left and left + width <= w):
        raise ValueError(
            f"crop_spatial: window ({top},{left})+{height}x{width} out of bounds for {h}x{w}"
        )
    out = x.value[:, :, top : top + height, left : left + width].copy()

    def vjp(g):
        gx = np.zeros_like(x.value)
        gx[:, :, top : top + height, left : left + width] = g
        return (gx,)

    return _result(out, "crop_spatial", (x,), vjp)


def _bilinear_taps(in_size, out_size):
    """Source indices and blend weight for half-pixel-center sampling."""
    coords = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    lo = np.floor(coords)
    t = coords - lo
    i0 = np.clip(lo, 0, in_size - 1).astype(np.intp)
    i1 = np.clip(lo + 1, 0, in_size - 1).astype(np.intp)
    return i0, i1, t


def bilinear_resize(arr, out_h, out_w):
    """Bilinear resampling of the trailing two axes (align-corners false).

    Sample centers sit at half-pixel positions; out-of-range taps clamp to
    the edge. Plain-array helper shared by the pure image transform and the
    differentiable op so both use identical sampling.
    """
    in_h, in_w = arr.shape[-2], arr.shape[-1]
    y0, y1, ty = _bilinear_taps(in_h, out_h)
    x0, x1, tx = _bilinear_taps(in_w, out_w)
    ty = ty.reshape(-1, 1)
    tx = tx.reshape(1, -1)
    top = arr[..., y0[:, None], x0[None, :]] * (1 - tx) + arr[..., y0[:, None], x1[None, :]] * tx
    bot = arr[..., y1[:, None], x0[None, :]] * (1 - tx) + arr[..., y1[:, None], x1[None, :]] * tx
    return top * (1 - ty) + bot * ty


def resize_bilinear(x, out_h, out_w):
    """Differentiable bilinear resize of an N x C x H x W tensor."""
    x = _as_node(x)
    if x.value.ndim != 4:
        raise ValueError(f"resize_bilinear: input must be 4-D, got shape {x.value.shape}")
    in_h, in_w = x.value.shape[2], x.value.shape[3]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize_bilinear: output size {out_h}x{out_w} is empty")
    out = bilinear_resize(x.value, out_h, out_w)
    y0, y1, ty = _bilinear_taps(in_h, out_h)
    x0, x1, tx = _bilinear_taps(in_w, out_w)

    def vjp(g):
        gx = np.zeros_like(x.value)
        ty2 = ty.reshape(-1, 1)
        tx2 = tx.reshape(1, -1)
        yy0, xx0 = y0[:, None], x0[None, :]
        yy1, xx1 = y1[:, None], x1[None, :]
        np.add.at(gx, (Ellipsis, yy0, xx0), g * (1 - ty2) * (1 - tx2))
        np.add.at(gx, (Ellipsis, yy0, xx1), g * (1 - ty2) * tx2)
        np.add.at(gx, (Ellipsis, yy1, xx0), g * ty2 * (1 - tx2))
        np.add.at(gx, (Ellipsis, yy1, xx1), g * ty2 * tx2)
        return (gx,)

    return _result(out, "resize_bilinear", (x,), vjp)


def adjust_brightness(x, factor):
    """clamp(factor * x, 0, 1); gradient passes on the closed interval."""
    x = _as_node(x)
    if factor <= 0:
        raise ValueError(f"adjust_brightness: factor must be > 0, got {factor}")
    pre = factor * x.value
    out = np.clip(pre, 0.0, 1.0)
    mask = (pre >= 0.0) & (pre <= 1.0)

    def vjp(g):
        return (g * mask * factor,)

    return _result(out, "adjust_brightness", (x,), vjp)


def adjust_contrast(x, factor, channel_weights):
    """Affine stretch about the per-image channel-weighted global mean.

    out = clamp(mu + factor * (x - mu), 0, 1) with
    mu = sum_c w_c * mean_hw(x[c]); the mean itself is differentiated.
    """
    x = _as_node(x)
    if factor <= 0:
        raise ValueError(f"adjust_contrast: factor must be > 0, got {factor}")
    n, c, h, w = x.value.shape
    wts = np.asarray(channel_weights, dtype=np.float64)
    if wts.shape != (c,):
        raise ValueError(f"adjust_contrast: expected {c} channel weights, got shape {wts.shape}")
    mu = np.einsum("nchw,c->n", x.value, wts) / (h * w)
    pre = mu[:, None, None, None] + factor * (x.value - mu[:, None, None, None])
    out = np.clip(pre, 0.0, 1.0)
    mask = (pre >= 0.0) & (pre <= 1.0)

    def vjp(g):
        gm = g * mask
        per_image = gm.sum(axis=(1, 2, 3))
        gx = factor * gm + (1.0 - factor) / (h * w) * per_image[:, None, None, None] * wts[None, :, None, None]
        return (gx,)

    return _result(out, "adjust_contrast", (x,), vjp)


def straight_through(x, fn, op="straight_through"):
    """Apply a non-differentiable array map; backward passes gradients unchanged.

    ``fn`` must preserve shape — used for the JPEG round trip inside training.
    """
    x = _as_node(x)
    out = np.asarray(fn(x.value), dtype=np.float64)
    if out.shape != x.value.shape:
        raise ValueError(f"straight_through: fn changed shape {x.value.shape} -> {out.shape}")

    def vjp(g):
        return (g,)

    return _result(out, op, (x,), vjp)


def add(a, b):
    """Elementwise sum of two same-shape nodes."""
    a, b = _as_node(a), _as_node(b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"add: shapes differ: {a.value.shape} vs {b.value.shape}")
    out = a.value + b.value

    def vjp(g):
        return g, g

    return _result(out, "add", (a, b), vjp)


def scale(x, c):
    """Multiply by a python scalar."""
    x = _as_node(x)
    c = float(c)
    out = x.value * c

    def vjp(g):
        return (g * c,)

    return _result(out, "scale", (x,), vjp)


def sum_all(x):
    """Sum of all elements, as a scalar node."""
    x = _as_node(x)
    out = np.asarray(x.value.sum())

    def vjp(g):
        return (np.broadcast_to(g, x.value.shape).copy(),)

    return _result(out, "sum_all", (x,), vjp)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def mse_loss(a, b):
    """Mean of squared differences over all elements."""
    a, b = _as_node(a), _as_node(b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"mse_loss: shapes differ: {a.value.shape} vs {b.value.shape}")
    diff = a.value - b.value
    n = diff.size
    out = np.asarray((diff * diff).sum() / n)

    def vjp(g):
        base = (2.0 / n) * diff * g
        ga = base if a.requires_grad else None
        gb = -base if b.requires_grad else None
        return ga, gb

    return _result(out, "mse_loss", (a, b), vjp)


def bce_logits_loss(logits, targets):
    """Mean bit-wise binary cross-entropy on raw logits.

    Uses the softplus-stabilized form max(x,0) - x*t + log(1 + exp(-|x|)),
    finite for any finite logit. ``targets`` must be 0/1 and is treated as a
    constant.
    """
    logits = _as_node(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.value.shape:
        raise ValueError(f"bce_logits_loss: logits shape {logits.value.shape} vs targets {t.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("bce_logits_loss: targets must be exactly 0 or 1")
    x = logits.value
    if not np.all(np.isfinite(x)):
        raise ValueError("bce_logits_loss: logits contain NaN or Inf")
    n = x.size
    per_bit = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    out = np.asarray(per_bit.sum() / n)
    sig = 1.0 / (1.0 + np.exp(-np.abs(x)))
    sig = np.where(x >= 0, sig, 1.0 - sig)  # sigmoid(x) without overflow

    def vjp(g):
        return ((sig - t) / n * g,)

    return _result(out, "bce_logits_loss", (logits,), vjp)


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy for N x K logits and integer labels."""
    logits = _as_node(logits)
    if logits.value.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be 2-D, got shape {logits.value.shape}")
    n, k = logits.value.shape
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ValueError(f"softmax_cross_entropy: expected {n} labels, got shape {y.shape}")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {k})")
    x = logits.value
    xmax = x.max(axis=1, keepdims=True)
    ex = np.exp(x - xmax)
    denom = ex.sum(axis=1, keepdims=True)
    log_probs = (x - xmax) - np.log(denom)
    out = np.asarray(-log_probs[np.arange(n), y].mean())
    probs = ex / denom

    def vjp(g):
        gl = probs.copy()
        gl[np.arange(n), y] -= 1.0
        return (gl / n * g,)

    return _result(out, "softmax_cross_entropy", (logits,), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root):
    """Children-before-parents order with cycle detection (iterative DFS)."""
    WHITE, GRAY, BLACK = 0, 1, 2
    state: dict[int, int] = {}
    order: list[Node] = []
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        nid = id(node)
        if processed:
            state[nid] = BLACK
            order.append(node)
            continue
        mark = state.get(nid, WHITE)
        if mark == BLACK:
            continue
        if mark == GRAY:
            raise ValueError("backward: cycle detected in computation graph")
        state[nid] = GRAY
        stack.append((node, True))
        for p in node.parents:
            pmark = state.get(id(p), WHITE)
            if pmark == GRAY:
                raise ValueError("backward: cycle detected in computation graph")
            if pmark == WHITE:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``grad`` on every reachable node that requires gradients.

    ``loss`` must be a scalar node. Each graph supports one backward pass;
    a repeated call on the same loss raises.
    """
    if not isinstance(loss, Node):
        raise TypeError("backward: loss must be a Node")
    if loss.value.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    if loss._consumed:
        raise RuntimeError("backward: this loss was already backpropagated; rebuild the graph")
    if not np.all(np.isfinite(loss.value)):
        raise ValueError("backward: loss is not finite")
    loss._consumed = True

    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for p, g in zip(node.parents, grads):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = g.copy() if g.base is not None else g
            else:
                p.grad = p.grad + g


# ---------------------------------------------------------------------------
# parameters and Adam
# ---------------------------------------------------------------------------

class ParamSet:
    """Named trainable parameters plus their Adam moment buffers."""

    def __init__(self):
        self._params: dict[str, Node] = {}
        self._m1: dict[str, np.ndarray] = {}
        self._m2: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"ParamSet: duplicate parameter {name!r}")
        node = parameter(np.array(value, dtype=np.float64))
        self._params[name] = node
        self._m1[name] = np.zeros_like(node.value)
        self._m2[name] = np.zeros_like(node.value)
        return node

    def __getitem__(self, name) -> Node:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Node]]:
        return iter(self._params.items())

    def clear_grads(self):
        for node in self._params.values():
            node.grad = None


def adam_step(params: ParamSet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; gradients are cleared afterward."""
    for name, node in params.items():
        if node.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
        if node.grad.shape != node.value.shape:
            raise ValueError(f"adam_step: gradient shape mismatch on {name!r}")
    t = params.step_count + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, node in params.items():
        g = node.grad
        m1 = params._m1[name]
        m2 = params._m2[name]
        m1 *= beta1
        m1 += (1.0 - beta1) * g
        m2 *= beta2
        m2 += (1.0 - beta2) * (g * g)
        node.value -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + eps)
        node.grad = None
    params.step_count = t


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class FiniteDiffReport:
    """Max relative gradient error per parameter tensor."""

    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def failures(self):
        return sorted(n for n, e in self.max_rel_error.items() if not e <= self.tolerance)

    @property
    def passed(self):
        return not self.failures

    def __str__(self):
        lines = [
            f"{name}: max_rel_err={err:.3e} {'ok' if err <= self.tolerance else 'FAIL'}"
            for name, err in sorted(self.max_rel_error.items())
        ]
        return "\n".join(lines)


def finite_diff_check(
    params: Mapping[str, Node],
    build_loss: Callable[[], Node],
    tolerance=1e-4,
    step=1e-5,
    max_entries=64,
    seed=0,
):
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss graph from the *same* leaf
    nodes in ``params`` deterministically; entries of large tensors are
    subsampled (seeded) down to ``max_entries``. Relative error uses
    max(|analytic|, |numeric|, 1e-4) in the denominator so that near-zero
    gradients are judged on an absolute scale.
    """
    loss = build_loss()
    if loss.value.size != 1 or not np.all(np.isfinite(loss.value)):
        raise ValueError("finite_diff_check: builder must produce a finite scalar loss")
    for node in params.values():
        node.grad = None
    backward(loss)
    analytic = {
        name: (node.grad.copy() if node.grad is not None else np.zeros_like(node.value))
        for name, node in params.items()
    }
    for node in params.values():
        node.grad = None

    rng = np.random.default_rng(seed)
    report = FiniteDiffReport(tolerance=tolerance)
    for name, node in params.items():
        flat = node.value.reshape(-1)
        size = flat.size
        if size <= max_entries:
            idx = np.arange(size)
        else:
            idx = rng.choice(size, size=max_entries, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lp = float(build_loss().value)
            flat[i] = orig - step
            lm = float(build_loss().value)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise ValueError(f"finite_diff_check: non-finite loss while perturbing {name!r}")
            numeric = (lp - lm) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-4)
            worst = max(worst, abs(a - numeric) / denom)
        report.max_rel_error[name] = worst
    return report
