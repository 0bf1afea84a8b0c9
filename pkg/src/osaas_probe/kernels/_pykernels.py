"""Pure-numpy implementations of the hot kernels.

Same contract as the compiled ``_ckernels`` module: float64, C-contiguous
inputs, "same" zero padding with an odd kernel size.
"""
import numpy as np


def _columns(x, p):
    pad = p // 2
    B, C, L = x.shape
    xp = np.zeros((B, C, L + 2 * pad))
    xp[:, :, pad:pad + L] = x
    # cols[b, c, i, k] = x[b, c, k + i - pad]
    return np.stack([xp[:, :, i:i + L] for i in range(p)], axis=2)


def conv1d_forward(x, w, b):
    p = w.shape[2]
    cols = _columns(x, p)
    y = np.tensordot(cols, w, axes=([1, 2], [1, 2]))  # (B, L, C_out)
    y = y.transpose(0, 2, 1) + b[None, :, None]
    return np.ascontiguousarray(y)


def conv1d_backward(grad_out, x, w):
    p = w.shape[2]
    pad = p // 2
    B, C, L = x.shape
    cols = _columns(x, p)
    grad_w = np.tensordot(grad_out, cols, axes=([0, 2], [0, 3]))  # (C_out, C, p)
    grad_b = grad_out.sum(axis=(0, 2))
    gcols = np.tensordot(w, grad_out, axes=([0], [1]))  # (C, p, B, L)
    gxp = np.zeros((B, C, L + 2 * pad))
    for i in range(p):
        gxp[:, :, i:i + L] += gcols[:, i].transpose(1, 0, 2)
    grad_x = np.ascontiguousarray(gxp[:, :, pad:pad + L])
    return grad_x, np.ascontiguousarray(grad_w), grad_b


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


def selu_forward(x):
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_backward(g, x):
    return g * np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
