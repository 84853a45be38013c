# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels (stride 1 valid conv, 2x2 pool)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fmin, fmax

cnp.import_array()


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = w.shape[0], KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t HO = H - KH + 1, WO = W - KW + 1
    out_arr = np.zeros((N, F, HO, WO))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, f, c, i, j, a, b
    cdef double acc
    for n in range(N):
        for f in range(F):
            for i in range(HO):
                for j in range(WO):
                    acc = 0.0
                    for c in range(C):
                        for a in range(KH):
                            for b in range(KW):
                                acc = acc + x[n, c, i + a, j + b] * w[f, c, a, b]
                    out[n, f, i, j] = acc
    return out_arr


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] g):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = w.shape[0], KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t HO = g.shape[2], WO = g.shape[3]
    gx_arr = np.zeros((N, C, H, W))
    gw_arr = np.zeros((F, C, KH, KW))
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t n, f, c, i, j, a, b
    cdef double gv
    for n in range(N):
        for f in range(F):
            for i in range(HO):
                for j in range(WO):
                    gv = g[n, f, i, j]
                    if gv == 0.0:
                        continue
                    for c in range(C):
                        for a in range(KH):
                            for b in range(KW):
                                gx[n, c, i + a, j + b] += gv * w[f, c, a, b]
                                gw[f, c, a, b] += gv * x[n, c, i + a, j + b]
    return gx_arr, gw_arr


def maxpool2d_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t HO = x.shape[2] // 2, WO = x.shape[3] // 2
    out_arr = np.empty((N, C, HO, WO))
    arg_arr = np.empty((N, C, HO, WO), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef signed char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t n, c, i, j, k
    cdef double best, v
    cdef signed char bk
    for n in range(N):
        for c in range(C):
            for i in range(HO):
                for j in range(WO):
                    best = x[n, c, 2 * i, 2 * j]
                    bk = 0
                    for k in range(1, 4):
                        v = x[n, c, 2 * i + k // 2, 2 * j + k % 2]
                        if v > best:
                            best = v
                            bk = <signed char>k
                    out[n, c, i, j] = best
                    arg[n, c, i, j] = bk
    return out_arr, arg_arr


def maxpool2d_backward(const double[:, :, :, ::1] g, const signed char[:, :, :, ::1] arg, shape):
    gx_arr = np.zeros(tuple(shape))
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1], HO = g.shape[2], WO = g.shape[3]
    cdef Py_ssize_t n, c, i, j, k
    for n in range(N):
        for c in range(C):
            for i in range(HO):
                for j in range(WO):
                    k = arg[n, c, i, j]
                    gx[n, c, 2 * i + k // 2, 2 * j + k % 2] = g[n, c, i, j]
    return gx_arr


cdef double _LOG_EPS = 1e-7


cdef double _score_rows(const double[::1] t, Py_ssize_t n_pos, double[::1] dt) noexcept nogil:
    # t holds scores on entry; dt receives d(objective)/d(score) per row.
    cdef Py_ssize_t n = t.shape[0], r
    cdef double s, tr, total_pos = 0.0, total_neg = 0.0, g
    cdef double inv_pos = 1.0 / n_pos, inv_neg = 1.0 / (n - n_pos)
    for r in range(n):
        tr = t[r]
        if tr >= 0.0:
            s = 1.0 / (1.0 + exp(-tr))
        else:
            s = exp(tr) / (1.0 + exp(tr))
        if r < n_pos:
            total_pos += log(fmin(fmax(s, _LOG_EPS), 1.0 - _LOG_EPS))
            g = (1.0 - s) * inv_pos
        else:
            total_neg += log(1.0 - fmin(fmax(s, _LOG_EPS), 1.0 - _LOG_EPS))
            g = -s * inv_neg
        dt[r] = g if (s > _LOG_EPS and s < 1.0 - _LOG_EPS) else 0.0
    return total_pos * inv_pos + total_neg * inv_neg


cdef void _mask_outer(double[:, ::1] Hm, const double[::1] dt, const double[::1] w2) noexcept nogil:
    # Hm holds relu activations on entry, d(objective)/d(pre-activation) on exit.
    cdef Py_ssize_t n = Hm.shape[0], H = Hm.shape[1], r, k
    cdef double d
    for r in range(n):
        d = dt[r]
        for k in range(H):
            Hm[r, k] = d * w2[k] if Hm[r, k] > 0.0 else 0.0


_workspace = {}


def _buffer(shape):
    buf = _workspace.get(shape)
    if buf is None:
        if len(_workspace) > 16:
            _workspace.clear()
        buf = _workspace[shape] = np.empty(shape)
    return buf


def js_objective(X, Xs, W1, b1, w2, double b2):
    # single-threaded use only: the hidden-layer buffer is shared across calls
    cdef Py_ssize_t n_pos = X.shape[0]
    A = np.concatenate([X, Xs])
    Hm = _buffer((A.shape[0], W1.shape[1]))
    np.matmul(A, W1, out=Hm)
    Hm += b1
    np.maximum(Hm, 0.0, out=Hm)
    t = Hm @ w2
    t += b2
    dt = np.empty_like(t)
    cdef double[::1] tv = t, dtv = dt
    cdef double[:, ::1] hv = Hm
    cdef const double[::1] w2v = w2
    cdef double obj
    with nogil:
        obj = _score_rows(tv, n_pos, dtv)
    gw2 = Hm.T @ dt
    with nogil:
        _mask_outer(hv, dtv, w2v)
    gb1 = Hm.sum(axis=0)
    gA = Hm @ W1.T
    gW1 = A.T @ Hm
    return obj, (gA[:n_pos], gA[n_pos:], gW1, gb1, gw2.reshape(-1, 1), np.array([dt.sum()]))
