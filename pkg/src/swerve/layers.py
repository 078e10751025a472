"""Differentiable layer primitives: convolution, pooling, dense, softmax,
batch normalization, dropout, and a fused cross-entropy-from-logits loss.

Convolution is im2col + one GEMM per call; its backward scatters the column
gradients back with K*K strided adds, so everything heavy stays inside BLAS.
Spatial tensors are channels-last: (H, W, C) for a single image or
(N, H, W, C) for a batch. Filters are (K, K, C, F).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, _accum, _record


def conv_output_size(n: int, k: int, stride: int, padding: str) -> int:
    """Spatial output size of a conv along one axis (same/valid, any stride)."""
    if padding == "same":
        return -(-n // stride)  # ceil
    return (n - k) // stride + 1


def _same_pads(n: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-n // stride)
    total = max((out - 1) * stride + k - n, 0)
    return total // 2, total - total // 2


def conv2d(x: Tensor, filters: Tensor, stride: int = 1, padding: str = "valid") -> Tensor:
    """2-D convolution (cross-correlation) of x with a bank of square filters."""
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise ValueError(f"conv2d: stride must be a positive integer, got {stride!r}")
    if padding not in ("same", "valid"):
        raise ValueError(f"conv2d: padding must be 'same' or 'valid', got {padding!r}")
    if filters.ndim != 4:
        raise ValueError(f"conv2d: filters must be (K, K, C, F), got shape {filters.shape}")
    kh, kw, fc, nf = filters.shape
    if kh != kw:
        raise ValueError(f"conv2d: filters must be square, got shape {filters.shape}")
    batched = x.ndim == 4
    if x.ndim not in (3, 4):
        raise ValueError(f"conv2d: input must be (H, W, C) or (N, H, W, C), got shape {x.shape}")
    if x.shape[-1] != fc:
        raise ValueError(
            f"conv2d: input channels do not match filter channels (input {x.shape}, filters {filters.shape})"
        )
    if x.dtype != filters.dtype:
        raise TypeError(f"conv2d: input dtype {x.dtype} does not match filter dtype {filters.dtype}")

    xd = x.data if batched else x.data[None]
    n, h, w, _ = xd.shape
    k = kh
    if padding == "same":
        pt, pb = _same_pads(h, k, stride)
        pl, pr = _same_pads(w, k, stride)
    else:
        pt = pb = pl = pr = 0
    xp = np.pad(xd, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else xd
    hp, wp = xp.shape[1], xp.shape[2]
    if hp < k or wp < k:
        raise ValueError(f"conv2d: filter {k}x{k} exceeds padded input {hp}x{wp} (input {x.shape})")
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1

    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (n, oh, ow, C, k, k)
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, k * k * fc)
    wmat = filters.data.reshape(k * k * fc, nf)
    out_data = (cols @ wmat).reshape(n, oh, ow, nf)
    if not batched:
        out_data = out_data[0]

    def _back(g):
        gm = g.reshape(n * oh * ow, nf)
        if filters.requires_grad:
            _accum(filters, (cols.T @ gm).reshape(filters.shape))
        if x.requires_grad:
            dcols = (gm @ wmat.T).reshape(n, oh, ow, k, k, fc)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += dcols[:, :, :, i, j, :]
            dx = dxp[:, pt : pt + h, pl : pl + w, :] if (pt or pb or pl or pr) else dxp
            _accum(x, dx if batched else dx[0])

    return _record(out_data, (x, filters), _back, "conv2d")


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient routes to the window argmax only
    (ties to the lowest flat index within the window)."""
    batched = x.ndim == 4
    if x.ndim not in (3, 4):
        raise ValueError(f"maxpool2x2: input must be (H, W, C) or (N, H, W, C), got shape {x.shape}")
    xd = x.data if batched else x.data[None]
    n, h, w, c = xd.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2: spatial dims must be even, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    v = xd.reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
    idx = v.argmax(axis=3)
    out_data = np.take_along_axis(v, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    if not batched:
        out_data = out_data[0]

    def _back(g):
        gb = g.reshape(n, h2, w2, c)
        dv = np.zeros_like(v)
        np.put_along_axis(dv, idx[:, :, :, None, :], gb[:, :, :, None, :], axis=3)
        dx = dv.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, c)
        _accum(x, dx if batched else dx[0])

    return _record(out_data, (x,), _back, "maxpool2x2")


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ weights + bias for a vector (n,) or a batch (N, n)."""
    if weights.ndim != 2:
        raise ValueError(f"dense: weights must be 2-D, got shape {weights.shape}")
    if bias.ndim != 1 or bias.shape[0] != weights.shape[1]:
        raise ValueError(f"dense: bias shape {bias.shape} does not match weights {weights.shape}")
    vector = x.ndim == 1
    if x.ndim not in (1, 2):
        raise ValueError(f"dense: input must be (n,) or (N, n), got shape {x.shape}")
    xd = x.data[None] if vector else x.data
    if xd.shape[1] != weights.shape[0]:
        raise ValueError(f"dense: input width {xd.shape[1]} does not match weights {tuple(weights.shape)}")
    out_data = xd @ weights.data + bias.data
    if vector:
        out_data = out_data[0]

    def _back(g):
        gm = g[None] if vector else g
        if weights.requires_grad:
            _accum(weights, xd.T @ gm)
        if bias.requires_grad:
            _accum(bias, gm.sum(axis=0))
        if x.requires_grad:
            dx = gm @ weights.data.T
            _accum(x, dx[0] if vector else dx)

    return _record(out_data, (x, weights, bias), _back, "dense")


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; input (m,) or (N, m), m >= 2."""
    if x.ndim not in (1, 2):
        raise ValueError(f"softmax: input must be (m,) or (N, m), got shape {x.shape}")
    if x.shape[-1] < 2:
        raise ValueError(f"softmax: needs at least 2 classes, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def _back(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(x, out_data * (g - inner))

    return _record(out_data, (x,), _back, "softmax")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    mode: str,
    momentum: float = 0.99,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over all axes but the last (channels).

    Train mode uses biased batch statistics and folds them into the running
    buffers (old * momentum + new * (1 - momentum)); infer mode uses the
    running buffers only and stays differentiable w.r.t. x. The running
    buffers are rebound, not edited in place, so concurrent readers of the
    old arrays are safe; updating them still needs exclusive model access.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"batch_norm: mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim < 2:
        raise ValueError(f"batch_norm: input must have a batch axis and a channel axis, got shape {x.shape}")
    c = x.shape[-1]
    for name, stat in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)):
        if stat.shape != (c,):
            raise ValueError(f"batch_norm: {name} shape {stat.shape} does not match channel count {c}")
    xd = x.data
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] == 0:
            raise ValueError("batch_norm: zero-size batch in train mode")
        m = xd.size // c
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)  # biased
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xd - mu) * inv
        running_mean.data = (momentum * running_mean.data + (1.0 - momentum) * mu).astype(xd.dtype)
        running_var.data = (momentum * running_var.data + (1.0 - momentum) * var).astype(xd.dtype)

        def _back(g):
            if gamma.requires_grad:
                _accum(gamma, (g * xhat).sum(axis=axes))
            if beta.requires_grad:
                _accum(beta, g.sum(axis=axes))
            if x.requires_grad:
                dxhat = g * gamma.data
                term = dxhat.sum(axis=axes) + xhat * (dxhat * xhat).sum(axis=axes)
                _accum(x, (inv / m) * (m * dxhat - term))

    else:
        inv = 1.0 / np.sqrt(running_var.data + eps)
        xhat = (xd - running_mean.data) * inv

        def _back(g):
            if gamma.requires_grad:
                _accum(gamma, (g * xhat).sum(axis=axes))
            if beta.requires_grad:
                _accum(beta, g.sum(axis=axes))
            if x.requires_grad:
                _accum(x, g * (gamma.data * inv))

    out_data = gamma.data * xhat + beta.data
    return _record(out_data, (x, gamma, beta), _back, "batch_norm")


def dropout(x: Tensor, fraction: float, mode: str, rng=None) -> Tensor:
    """Inverted dropout: train mode zeroes units with probability `fraction`
    and scales survivors by 1/(1-fraction); infer mode is the identity.

    rng may be a numpy Generator or an integer seed; the mask is reproducible
    from it.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"dropout: fraction must lie in [0, 1), got {fraction}")
    if mode not in ("train", "infer"):
        raise ValueError(f"dropout: mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or fraction == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: train mode needs an rng (Generator or integer seed)")
    gen = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    keep = gen.random(x.shape) >= fraction
    mask = keep.astype(x.data.dtype) * (1.0 / (1.0 - fraction))
    out_data = x.data * mask

    def _back(g):
        _accum(x, g * mask)

    return _record(out_data, (x,), _back, "dropout")


def cross_entropy_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy computed from logits via log-sum-exp (never log of
    a softmax output). labels are integer class indices, shape (N,)."""
    if logits.ndim != 2:
        raise ValueError(f"cross_entropy_with_logits: logits must be (N, K), got shape {logits.shape}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError(
            f"cross_entropy_with_logits: labels shape {labels.shape} does not match logits {logits.shape}"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        raise TypeError(f"cross_entropy_with_logits: labels must be integers, got dtype {labels.dtype}")
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"cross_entropy_with_logits: label out of range [0, {k})")
    ld = logits.data
    m = ld.max(axis=1, keepdims=True)
    z = ld - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    rows = np.arange(n)
    out_data = (lse[:, 0] - ld[rows, labels]).mean()

    def _back(g):
        p = np.exp(ld - lse)
        p[rows, labels] -= 1.0
        _accum(logits, p * (float(g) / n))

    return _record(out_data, (logits,), _back, "cross_entropy")
