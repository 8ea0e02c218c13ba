"""Hot numeric kernels: numba-jitted fast path with a pure-numpy fallback.

Every kernel exists twice: a vectorized numpy implementation (suffix
``_np``) and a loop-style one compiled with ``@njit`` when numba is
available. The active set is chosen once at import time from the
``QSIFT_BACKEND`` environment variable ("numba" or "numpy"; default is
numba when importable). Both paths work in float64 and agree to within
a few ulps; ``benchmarks/bench_kernels.py`` times them against each other.

All row-wise kernels take C-contiguous 2-D float64 arrays.
"""

import math
import os

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _requested_backend() -> str:
    choice = os.environ.get("QSIFT_BACKEND", "numba").strip().lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"QSIFT_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    return choice


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def softmax_rows_np(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward_np(y, grad):
    inner = (y * grad).sum(axis=1, keepdims=True)
    return y * (grad - inner)


def log_softmax_rows_np(x):
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def log_softmax_rows_backward_np(y, grad):
    return grad - np.exp(y) * grad.sum(axis=1, keepdims=True)


def layer_norm_rows_np(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layer_norm_rows_backward_np(grad, xhat, rstd, gain):
    dxhat = grad * gain
    gx = rstd[:, None] * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    ggain = (grad * xhat).sum(axis=0)
    gbias = grad.sum(axis=0)
    return gx, ggain, gbias


def gelu_np(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * x * (1.0 + t)


def gelu_backward_np(x, grad):
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return grad * (0.5 * (1.0 + t) + 0.5 * x * dt)


def adam_update_np(param, grad, m, v, t, lr, beta1, beta2, eps):
    """In-place bias-corrected Adam step on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def index_add_rows_np(out, idx, rows):
    """out[idx[i]] += rows[i] with repeated indices accumulating."""
    np.add.at(out, idx, rows)


# ---------------------------------------------------------------------------
# numba implementations (loop style; compiled below when requested)
# ---------------------------------------------------------------------------


def _softmax_rows_nb(x):
    r, c = x.shape
    out = np.empty((r, c))
    for i in range(r):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(c):
            e = math.exp(x[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(c):
            out[i, j] /= s
    return out


def _softmax_rows_backward_nb(y, grad):
    r, c = y.shape
    gx = np.empty((r, c))
    for i in range(r):
        inner = 0.0
        for j in range(c):
            inner += y[i, j] * grad[i, j]
        for j in range(c):
            gx[i, j] = y[i, j] * (grad[i, j] - inner)
    return gx


def _log_softmax_rows_nb(x):
    r, c = x.shape
    out = np.empty((r, c))
    for i in range(r):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(c):
            s += math.exp(x[i, j] - m)
        lse = math.log(s)
        for j in range(c):
            out[i, j] = x[i, j] - m - lse
    return out


def _log_softmax_rows_backward_nb(y, grad):
    r, c = y.shape
    gx = np.empty((r, c))
    for i in range(r):
        gsum = 0.0
        for j in range(c):
            gsum += grad[i, j]
        for j in range(c):
            gx[i, j] = grad[i, j] - math.exp(y[i, j]) * gsum
    return gx


def _layer_norm_rows_nb(x, gain, bias, eps):
    r, c = x.shape
    out = np.empty((r, c))
    xhat = np.empty((r, c))
    rstd = np.empty(r)
    for i in range(r):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        rs = 1.0 / math.sqrt(var + eps)
        rstd[i] = rs
        for j in range(c):
            h = (x[i, j] - mu) * rs
            xhat[i, j] = h
            out[i, j] = h * gain[j] + bias[j]
    return out, xhat, rstd


def _layer_norm_rows_backward_nb(grad, xhat, rstd, gain):
    r, c = xhat.shape
    gx = np.empty((r, c))
    ggain = np.zeros(c)
    gbias = np.zeros(c)
    for i in range(r):
        mean_d = 0.0
        mean_dx = 0.0
        for j in range(c):
            d = grad[i, j] * gain[j]
            mean_d += d
            mean_dx += d * xhat[i, j]
        mean_d /= c
        mean_dx /= c
        for j in range(c):
            d = grad[i, j] * gain[j]
            gx[i, j] = rstd[i] * (d - mean_d - xhat[i, j] * mean_dx)
            ggain[j] += grad[i, j] * xhat[i, j]
            gbias[j] += grad[i, j]
    return gx, ggain, gbias


def _gelu_nb(x):
    n = x.size
    flat = x.ravel()
    out = np.empty(n)
    for i in range(n):
        v = flat[i]
        t = math.tanh(_GELU_C * (v + _GELU_A * v * v * v))
        out[i] = 0.5 * v * (1.0 + t)
    return out.reshape(x.shape)


def _gelu_backward_nb(x, grad):
    n = x.size
    flat = x.ravel()
    gflat = grad.ravel()
    out = np.empty(n)
    for i in range(n):
        v = flat[i]
        t = math.tanh(_GELU_C * (v + _GELU_A * v * v * v))
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
        out[i] = gflat[i] * (0.5 * (1.0 + t) + 0.5 * v * dt)
    return out.reshape(x.shape)


def _adam_update_nb(param, grad, m, v, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(param.size):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        param[i] -= lr * (m[i] / c1) / (math.sqrt(v[i] / c2) + eps)


def _index_add_rows_nb(out, idx, rows):
    n, c = rows.shape
    for i in range(n):
        r = idx[i]
        for j in range(c):
            out[r, j] += rows[i, j]


_NUMBA_SOURCES = {
    "softmax_rows": _softmax_rows_nb,
    "softmax_rows_backward": _softmax_rows_backward_nb,
    "log_softmax_rows": _log_softmax_rows_nb,
    "log_softmax_rows_backward": _log_softmax_rows_backward_nb,
    "layer_norm_rows": _layer_norm_rows_nb,
    "layer_norm_rows_backward": _layer_norm_rows_backward_nb,
    "gelu": _gelu_nb,
    "gelu_backward": _gelu_backward_nb,
    "adam_update": _adam_update_nb,
    "index_add_rows": _index_add_rows_nb,
}

_NUMPY_IMPLS = {
    "softmax_rows": softmax_rows_np,
    "softmax_rows_backward": softmax_rows_backward_np,
    "log_softmax_rows": log_softmax_rows_np,
    "log_softmax_rows_backward": log_softmax_rows_backward_np,
    "layer_norm_rows": layer_norm_rows_np,
    "layer_norm_rows_backward": layer_norm_rows_backward_np,
    "gelu": gelu_np,
    "gelu_backward": gelu_backward_np,
    "adam_update": adam_update_np,
    "index_add_rows": index_add_rows_np,
}


def compile_numba_impls():
    """Jit-compile the loop kernels. Raises ImportError when numba is absent."""
    from numba import njit

    return {name: njit(cache=True)(fn) for name, fn in _NUMBA_SOURCES.items()}


_BACKEND = "numpy"
_ACTIVE = dict(_NUMPY_IMPLS)

if _requested_backend() == "numba":
    try:
        _ACTIVE = compile_numba_impls()
        _BACKEND = "numba"
    except ImportError:
        pass


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _BACKEND


softmax_rows = _ACTIVE["softmax_rows"]
softmax_rows_backward = _ACTIVE["softmax_rows_backward"]
log_softmax_rows = _ACTIVE["log_softmax_rows"]
log_softmax_rows_backward = _ACTIVE["log_softmax_rows_backward"]
layer_norm_rows = _ACTIVE["layer_norm_rows"]
layer_norm_rows_backward = _ACTIVE["layer_norm_rows_backward"]
gelu = _ACTIVE["gelu"]
gelu_backward = _ACTIVE["gelu_backward"]
adam_update = _ACTIVE["adam_update"]
index_add_rows = _ACTIVE["index_add_rows"]
