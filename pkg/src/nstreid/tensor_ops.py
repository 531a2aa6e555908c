"""Dense NCHW tensor kernels: forward maps and their vector-Jacobian products.

Every kernel is a pure function over numpy arrays. The pipeline runs on
float32 data; reductions are accumulated in float64 so results are
deterministic and drift-bounded regardless of internal blocking. Outputs
keep the input dtype, so passing float64 arrays runs the whole computation
in float64 (the gradient checker relies on this for tight tolerances).

Convolution uses the cross-correlation convention (no kernel flip).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class ConvParams:
    """Parameters of a 2-D convolution: weights (outC, inC, kH, kW),
    bias (outC,), integer stride and zero-padding."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ValidationError(
                f"conv weights must be rank 4 (outC, inC, kH, kW), got shape {self.weights.shape}"
            )
        if self.bias.shape != (self.weights.shape[0],):
            raise ValidationError(
                f"conv bias shape {self.bias.shape} does not match output channels "
                f"{self.weights.shape[0]}"
            )
        if self.stride < 1 or self.padding < 0:
            raise ValidationError("conv stride must be >= 1 and padding >= 0")


def _require_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"{name} produced non-finite values")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Unfold (N, C, H, W) into column matrix (N, C*kh*kw, oh*ow)."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, oh, ow, kh, kw)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols, dtype=np.float64), oh, ow


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add column gradients back onto the (padded) input."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[
                :, :, i, j
            ]
    if pad:
        xp = xp[:, :, pad : pad + h, pad : pad + w]
    return xp


def _conv_out_shape(x_shape, p: ConvParams):
    n, c, h, w = x_shape
    oc, ic, kh, kw = p.weights.shape
    if c != ic:
        raise ValidationError(
            f"conv input has {c} channels (shape {tuple(x_shape)}) but kernel expects "
            f"{ic} (shape {tuple(p.weights.shape)})"
        )
    if h + 2 * p.padding < kh or w + 2 * p.padding < kw:
        raise ValidationError(
            f"padded input {h + 2 * p.padding}x{w + 2 * p.padding} smaller than kernel {kh}x{kw}"
        )
    oh = (h + 2 * p.padding - kh) // p.stride + 1
    ow = (w + 2 * p.padding - kw) // p.stride + 1
    return n, oc, oh, ow


def conv2d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Cross-correlate x (N, C, H, W) with p.weights and add bias.

    Output shape (N, outC, (H+2*pad-kH)//stride+1, (W+2*pad-kW)//stride+1).
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValidationError(f"conv input must be rank 4 (N, C, H, W), got shape {x.shape}")
    n, oc, oh, ow = _conv_out_shape(x.shape, p)
    kh, kw = p.weights.shape[2:]
    cols, _, _ = _im2col(x, kh, kw, p.stride, p.padding)
    wmat = p.weights.reshape(oc, -1).astype(np.float64)
    out = np.matmul(wmat, cols)  # (n, oc, oh*ow)
    out += p.bias.astype(np.float64)[:, None]
    out = out.reshape(n, oc, oh, ow).astype(x.dtype)
    _require_finite("conv2d_forward", out)
    return out


def conv2d_vjp(x: np.ndarray, p: ConvParams, upstream: np.ndarray):
    """Vector-Jacobian products of conv2d_forward.

    Returns (grad_input, grad_weights, grad_bias) for the given upstream
    gradient, which must have the forward output shape.
    """
    x = np.asarray(x)
    expected = _conv_out_shape(x.shape, p)
    if tuple(upstream.shape) != expected:
        raise ValidationError(
            f"upstream gradient shape {tuple(upstream.shape)} does not match conv output "
            f"shape {expected}"
        )
    n, oc, oh, ow = expected
    kh, kw = p.weights.shape[2:]
    cols, _, _ = _im2col(x, kh, kw, p.stride, p.padding)
    up = upstream.reshape(n, oc, oh * ow).astype(np.float64)

    grad_bias = up.sum(axis=(0, 2))
    grad_weights = np.einsum("nol,nkl->ok", up, cols).reshape(p.weights.shape)
    wmat = p.weights.reshape(oc, -1).astype(np.float64)
    gcols = np.matmul(wmat.T, up)  # (n, c*kh*kw, oh*ow)
    grad_input = _col2im(gcols, x.shape, kh, kw, p.stride, p.padding)

    gx = grad_input.astype(x.dtype)
    gw = grad_weights.astype(p.weights.dtype)
    gb = grad_bias.astype(p.bias.dtype)
    _require_finite("conv2d_vjp", gx, gw, gb)
    return gx, gw, gb


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_vjp(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass upstream where x > 0, else 0. The tie at exactly 0 passes 0."""
    if x.shape != upstream.shape:
        raise ValidationError(
            f"relu upstream shape {upstream.shape} does not match input shape {x.shape}"
        )
    return upstream * (x > 0)


def avgpool2d_forward(x: np.ndarray, window: int = 2, stride: int = 2) -> np.ndarray:
    """Mean over non-overlapping window x window patches (window == stride)."""
    if window != stride:
        raise ValidationError("avgpool2d supports window == stride only")
    if x.ndim != 4:
        raise ValidationError(f"avgpool input must be rank 4, got shape {x.shape}")
    n, c, h, w = x.shape
    if h % window or w % window:
        raise ValidationError(
            f"avgpool needs spatial dims divisible by {window}, got {h}x{w}; "
            f"resize the input first"
        )
    out = x.reshape(n, c, h // window, window, w // window, window).mean(
        axis=(3, 5), dtype=np.float64
    )
    return out.astype(x.dtype)


def avgpool2d_vjp(x: np.ndarray, upstream: np.ndarray, window: int = 2, stride: int = 2) -> np.ndarray:
    """Distribute upstream / window^2 uniformly over each pooled patch."""
    if window != stride:
        raise ValidationError("avgpool2d supports window == stride only")
    n, c, h, w = x.shape
    if upstream.shape != (n, c, h // window, w // window):
        raise ValidationError(
            f"avgpool upstream shape {upstream.shape} does not match pooled shape "
            f"{(n, c, h // window, w // window)}"
        )
    g = np.repeat(np.repeat(upstream, window, axis=2), window, axis=3)
    return (g / (window * window)).astype(x.dtype)


def linear_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """y = x W^T + b, with x either (in,) or (N, in)."""
    if weights.ndim != 2 or bias.shape != (weights.shape[0],):
        raise ValidationError(
            f"linear weights must be (out, in) with bias (out,), got {weights.shape} "
            f"and {bias.shape}"
        )
    if x.shape[-1] != weights.shape[1]:
        raise ValidationError(
            f"linear input features {x.shape[-1]} do not match weights {weights.shape}"
        )
    y = x.astype(np.float64) @ weights.T.astype(np.float64) + bias.astype(np.float64)
    y = y.astype(x.dtype)
    _require_finite("linear_forward", y)
    return y


def linear_vjp(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, upstream: np.ndarray):
    """Returns (grad_input, grad_weights, grad_bias) = (u W, u^T x, sum u)."""
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    u2 = upstream[None, :] if single else upstream
    if u2.shape != (x2.shape[0], weights.shape[0]):
        raise ValidationError(
            f"linear upstream shape {upstream.shape} does not match output shape "
            f"{(x2.shape[0], weights.shape[0])}"
        )
    u64 = u2.astype(np.float64)
    gx = (u64 @ weights.astype(np.float64)).astype(x.dtype)
    gw = (u64.T @ x2.astype(np.float64)).astype(weights.dtype)
    gb = u64.sum(axis=0).astype(bias.dtype)
    if single:
        gx = gx[0]
    _require_finite("linear_vjp", gx, gw, gb)
    return gx, gw, gb


def softmax_cross_entropy(logits: np.ndarray, label):
    """Stabilized cross-entropy of softmax(logits) against an integer label.

    Accepts a single (K,) row with an int label, or a (N, K) batch with a
    length-N label array; the batch form returns the mean loss and the
    gradient of that mean. grad = softmax(logits) - one_hot(label), / N for
    the batch mean.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = (logits[None, :] if single else logits).astype(np.float64)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    n, k = z.shape
    if labels.shape != (n,):
        raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError(
            f"label out of range: got {int(labels.min())}..{int(labels.max())} "
            f"for {k} classes"
        )
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    denom = expz.sum(axis=1, keepdims=True)
    probs = expz / denom
    losses = np.log(denom[:, 0]) - z[np.arange(n), labels]
    loss = float(losses.mean())

    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    if not single:
        grad /= n
    grad = (grad[0] if single else grad).astype(logits.dtype)
    _require_finite("softmax_cross_entropy", grad)
    if not np.isfinite(loss):
        raise NumericalError("softmax_cross_entropy produced a non-finite loss")
    return loss, grad


def finite_diff_check(
    fn: Callable[[np.ndarray], object],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    eps: float = 1e-3,
) -> float:
    """Compare an analytic gradient against central finite differences.

    fn maps a tensor to a scalar loss, or to (loss, signature) where the
    signature captures discrete state such as ReLU activation patterns; a
    coordinate whose +eps and -eps signatures differ straddles a kink and is
    skipped. Returns the worst relative error over compared coordinates.
    Run fn in float64 for meaningful tolerances.
    """
    if not eps > 0:
        raise ValidationError(f"finite-difference eps must be > 0, got {eps}")
    if analytic_grad.shape != x.shape:
        raise ValidationError(
            f"analytic gradient shape {analytic_grad.shape} does not match input "
            f"shape {x.shape}"
        )

    def evaluate(xv):
        out = fn(xv)
        if isinstance(out, tuple):
            loss, sig = out
        else:
            loss, sig = out, None
        return float(loss), sig

    worst = 0.0
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xp[idx] += eps
        fp, sig_p = evaluate(xp)
        xm = x.copy()
        xm[idx] -= eps
        fm, sig_m = evaluate(xm)
        if sig_p is not None and not _signatures_equal(sig_p, sig_m):
            continue  # crossing a non-differentiable point
        fd = (fp - fm) / (2.0 * eps)
        a = float(analytic_grad[idx])
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


def _signatures_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, (tuple, list)) and isinstance(b, (tuple, list)):
        return len(a) == len(b) and all(_signatures_equal(u, v) for u, v in zip(a, b))
    return a == b
