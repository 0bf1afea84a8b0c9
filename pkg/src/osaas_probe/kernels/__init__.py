"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is used.  Set ``OSAAS_PROBE_KERNELS``
to ``python`` to force the fallback.

Functions
---------
conv1d_forward(x, w, b)
    Batched same-padded 1-D convolution, ``x`` (B, C_in, L).
conv1d_backward(grad_out, x, w)
    Returns ``(grad_x, grad_w, grad_b)``.
selu_forward(x), selu_backward(grad_out, x)
    Elementwise SELU and its vector-Jacobian product on flat buffers.
adam_update(param, grad, m, v, lr, beta1, beta2, eps, t)
    In-place bias-corrected Adam step on flat float64 buffers.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("OSAAS_PROBE_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def backends():
    """Available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
adam_update = _impl.adam_update
selu_forward = _impl.selu_forward
selu_backward = _impl.selu_backward
