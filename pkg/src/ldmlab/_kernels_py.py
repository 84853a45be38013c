"""NumPy implementations of the convolution and pooling kernels.

Used when the compiled extension is unavailable or disabled. Results agree
with the compiled versions to rounding (summation order differs).
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w):
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N,C,Ho,Wo,kh,kw
    return np.einsum("nchwij,fcij->nfhw", win, w, optimize=True)


def conv2d_backward(x, w, g):
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    gw = np.einsum("nchwij,nfhw->fcij", win, g, optimize=True)
    gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    gwin = sliding_window_view(gp, (kh, kw), axis=(2, 3))  # N,F,H,W,kh,kw
    gx = np.einsum("nfhwij,fcij->nchw", gwin, w[:, :, ::-1, ::-1], optimize=True)
    return np.ascontiguousarray(gx), gw


def maxpool2d_forward(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    # first maximum in (0,0),(0,1),(1,0),(1,1) order wins ties
    argmax = blocks.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(blocks, argmax[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, argmax


def maxpool2d_backward(g, argmax, shape):
    n, c, h, w = shape
    ho, wo = g.shape[2], g.shape[3]
    gx = np.zeros(shape)
    di = argmax // 2
    dj = argmax % 2
    ii = 2 * np.arange(ho)[None, None, :, None] + di
    jj = 2 * np.arange(wo)[None, None, None, :] + dj
    nn = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    gx[nn, cc, ii, jj] = g
    return gx


LOG_EPS = 1e-7


def _side(A, positive, W1, b1, w2, b2):
    n = A.shape[0]
    z = A @ W1
    z += b1
    live_h = z > 0
    h = np.where(live_h, z, 0.0)
    t = (h @ w2)[:, 0] + b2
    s = np.empty_like(t)
    pos = t >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    s[~pos] = et / (1.0 + et)
    c = np.clip(s, LOG_EPS, 1.0 - LOG_EPS)
    live = (s > LOG_EPS) & (s < 1.0 - LOG_EPS)
    if positive:
        val, dt = np.log(c), (1.0 - s)
    else:
        val, dt = np.log(1.0 - c), -s
    dt = np.where(live, dt, 0.0) / n
    dz = np.outer(dt, w2[:, 0])
    dz *= live_h
    grads = (A.T @ dz, dz.sum(axis=0), (h.T @ dt)[:, None], dt.sum())
    return val.mean(), grads, dz @ W1.T


def js_objective(X, Xs, W1, b1, w2, b2):
    """Joint-vs-shuffled JS objective of an ``m -> H (ReLU) -> 1`` scorer and its gradients."""
    w2 = w2.reshape(-1, 1)
    o1, g1, gX = _side(X, True, W1, b1, w2, b2)
    o2, g2, gXs = _side(Xs, False, W1, b1, w2, b2)
    return o1 + o2, (gX, gXs, g1[0] + g2[0], g1[1] + g2[1], g1[2] + g2[2], np.array([g1[3] + g2[3]]))
