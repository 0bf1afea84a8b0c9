"""Layer primitives with hand-written backward passes.

Tensors are float64 numpy arrays.  Batched conventions: convolution inputs are
``(B, C, L)``, dense inputs ``(B, features)``; single-sample forms ``(C, L)``
and ``(features,)`` are accepted and returned unbatched.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


class ShapeError(ValueError):
    pass


def _as_batch(x, ndim):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")
    return x, False


def _check_conv(x, w, b):
    if w.ndim != 3:
        raise ShapeError(f"kernels must be (C_out, C_in, p), got {w.shape}")
    if w.shape[2] % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {w.shape[2]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernels expect {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias must have shape ({w.shape[0]},), got {b.shape}")
    if x.shape[2] < 1:
        raise ShapeError("sequence length must be >= 1")


def conv1d_forward(x, w, b):
    """Same-padded convolution ``y[o,k] = sum_c,i w[o,c,i] x[c,k+i-p//2] + b[o]``."""
    xb, single = _as_batch(x, 3)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    _check_conv(xb, w, b)
    y = kernels.conv1d_forward(xb, w, b)
    return y[0] if single else y


def conv1d_backward(grad_out, x, w):
    xb, single = _as_batch(x, 3)
    gb, _ = _as_batch(grad_out, 3)
    w = np.ascontiguousarray(w, dtype=np.float64)
    _check_conv(xb, w, np.zeros(w.shape[0]))
    if gb.shape != (xb.shape[0], w.shape[0], xb.shape[2]):
        raise ShapeError(
            f"grad_out shape {gb.shape} does not match forward output "
            f"{(xb.shape[0], w.shape[0], xb.shape[2])}"
        )
    gx, gw, gbias = kernels.conv1d_backward(gb, xb, w)
    return (gx[0] if single else gx), gw, gbias


def dense_forward(x, W, b):
    """``z = x W^T + b`` with ``W`` shaped (out, in)."""
    xb, single = _as_batch(x, 2)
    if xb.shape[1] != W.shape[1]:
        raise ShapeError(f"dense expects {W.shape[1]} inputs, got {xb.shape[1]}")
    z = xb @ W.T + b
    return z[0] if single else z


def dense_backward(grad_out, x, W):
    xb, single = _as_batch(x, 2)
    gb, _ = _as_batch(grad_out, 2)
    grad_W = gb.T @ xb
    grad_b = gb.sum(axis=0)
    grad_x = gb @ W
    return (grad_x[0] if single else grad_x), grad_W, grad_b


def selu(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return kernels.selu_forward(x.reshape(-1)).reshape(x.shape)


def selu_backward(grad_out, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    g = np.ascontiguousarray(np.broadcast_to(grad_out, x.shape), dtype=np.float64)
    return kernels.selu_backward(g.reshape(-1), x.reshape(-1)).reshape(x.shape)


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out, x):
    return grad_out * (np.asarray(x) > 0)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"label index out of range [0, {n_classes})")
    return labels.astype(np.intp)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``probs``."""
    probs = np.atleast_2d(probs)
    labels = _check_labels(np.atleast_1d(labels), probs.shape[1])
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def softmax_cross_entropy_backward(probs, labels):
    """Gradient of mean CE w.r.t. the logits: ``(p - onehot) / batch``."""
    probs = np.atleast_2d(probs)
    labels = _check_labels(np.atleast_1d(labels), probs.shape[1])
    g = probs.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update of ``param`` and ``state``."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"adam shapes differ: param {param.shape}, grad {grad.shape}, m {state.m.shape}")
    if not (param.flags.c_contiguous and state.m.flags.c_contiguous and state.v.flags.c_contiguous):
        raise ShapeError("adam buffers must be C-contiguous")
    state.t += 1
    kernels.adam_update(
        param.reshape(-1),
        np.ascontiguousarray(grad, dtype=np.float64).reshape(-1),
        state.m.reshape(-1),
        state.v.reshape(-1),
        float(lr), state.beta1, state.beta2, state.eps, state.t,
    )


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def numerical_gradient(f, x: np.ndarray, index, step: float = 1e-6) -> float:
    """Central difference of scalar ``f()`` w.r.t. ``x[index]`` (``x`` mutated and restored)."""
    orig = x[index]
    x[index] = orig + step
    fp = f()
    x[index] = orig - step
    fm = f()
    x[index] = orig
    return (fp - fm) / (2.0 * step)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
