"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

PURELIN, RELU, TANH, SIGMOID = 0, 1, 2, 3


def _act(code, z):
    if code == TANH:
        return np.tanh(z)
    if code == RELU:
        return np.maximum(z, 0.0)
    if code == SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def forward(layers, x):
    cur = np.asarray(x, dtype=np.float64)
    for w, _, _, b, code in layers:
        cur = _act(code, w @ cur + b)
    return cur


def interval_forward(layers, lo, hi):
    # lower pre = W lo + W_neg (hi - lo); upper pre = W lo + W_pos (hi - lo)
    cl = np.asarray(lo, dtype=np.float64)
    cu = np.asarray(hi, dtype=np.float64)
    for w, wn, wp, b, code in layers:
        base = w @ cl
        d = cu - cl
        cl, cu = _act(code, (base + wn @ d) + b), _act(code, (base + wp @ d) + b)
    return cl, cu


def pivot(t, r, c):
    t[r] /= t[r, c]
    t[r, c] = 1.0
    col = t[:, c].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])
    t[:, c] = 0.0
    t[r, c] = 1.0
