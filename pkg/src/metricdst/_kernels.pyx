# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; same signatures as ``_kernels_py``."""
import numpy as np

from libc.math cimport sqrt, exp
from libc.stdint cimport int64_t

cdef double DIST_EPS = 1e-12
cdef double LOGIT_CLIP = 36.0


cdef double _batch(const double[:, ::1] X, const int64_t[::1] y,
                   const int64_t[::1] rows, Py_ssize_t start, Py_ssize_t bsz,
                   const double[::1] theta, Py_ssize_t n_in, Py_ssize_t hid,
                   Py_ssize_t out, double m_pos, double m_neg, double[::1] grad,
                   double[:, ::1] A1, double[:, ::1] Z, double[:, ::1] dZ) noexcept nogil:
    cdef Py_ssize_t o_b1 = n_in * hid
    cdef Py_ssize_t o_w2 = o_b1 + hid
    cdef Py_ssize_t o_b2 = o_w2 + hid * out
    cdef Py_ssize_t r, a, b, i, h, o, row
    cdef double s, sq, diff, d, g, t, loss = 0.0, hv, dh, da
    cdef bint same

    for r in range(bsz):
        row = rows[start + r]
        for h in range(hid):
            s = theta[o_b1 + h]
            for i in range(n_in):
                s += X[row, i] * theta[i * hid + h]
            A1[r, h] = s
        for o in range(out):
            s = theta[o_b2 + o]
            for h in range(hid):
                if A1[r, h] > 0.0:
                    s += A1[r, h] * theta[o_w2 + h * out + o]
            s = min(max(s, -LOGIT_CLIP), LOGIT_CLIP)
            Z[r, o] = 1.0 / (1.0 + exp(-s))
            dZ[r, o] = 0.0

    for a in range(bsz):
        for b in range(a + 1, bsz):
            sq = 0.0
            for o in range(out):
                diff = Z[a, o] - Z[b, o]
                sq += diff * diff
            d = sqrt(sq + DIST_EPS)
            same = y[rows[start + a]] == y[rows[start + b]]
            g = 0.0
            if same:
                if d > m_pos:
                    loss += d - m_pos
                    g = 1.0
            elif d < m_neg:
                loss += m_neg - d
                g = -1.0
            if g != 0.0 and sq > 0.0:
                for o in range(out):
                    t = g * (Z[a, o] - Z[b, o]) / d
                    dZ[a, o] += t
                    dZ[b, o] -= t

    for i in range(grad.shape[0]):
        grad[i] = 0.0
    for r in range(bsz):
        row = rows[start + r]
        for o in range(out):
            da = dZ[r, o] * Z[r, o] * (1.0 - Z[r, o])
            dZ[r, o] = da
            grad[o_b2 + o] += da
        for h in range(hid):
            hv = A1[r, h]
            if hv <= 0.0:
                continue
            dh = 0.0
            for o in range(out):
                grad[o_w2 + h * out + o] += hv * dZ[r, o]
                dh += dZ[r, o] * theta[o_w2 + h * out + o]
            grad[o_b1 + h] += dh
            for i in range(n_in):
                grad[i * hid + h] += X[row, i] * dh
    return loss


def batch_loss_grad(X, y, theta, Py_ssize_t n_in, Py_ssize_t hidden, Py_ssize_t out,
                    double m_pos, double m_neg, double[::1] grad):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef const int64_t[::1] rows = np.arange(n, dtype=np.int64)
    cdef double[:, ::1] A1 = np.empty((n, hidden))
    cdef double[:, ::1] Z = np.empty((n, out))
    cdef double[:, ::1] dZ = np.empty((n, out))
    cdef double loss
    with nogil:
        loss = _batch(Xv, yv, rows, 0, n, tv, n_in, hidden, out, m_pos, m_neg,
                      grad, A1, Z, dZ)
    return loss


def train_epoch(X, y, order, Py_ssize_t batch_size, double[::1] theta,
                double[::1] m, double[::1] v, long t, Py_ssize_t n_in,
                Py_ssize_t hidden, Py_ssize_t out, double lr, double beta1,
                double beta2, double eps, double m_pos, double m_neg):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef const int64_t[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = ov.shape[0], p = theta.shape[0]
    cdef double[::1] grad = np.empty(p)
    cdef double[:, ::1] A1 = np.empty((batch_size, hidden))
    cdef double[:, ::1] Z = np.empty((batch_size, out))
    cdef double[:, ::1] dZ = np.empty((batch_size, out))
    cdef Py_ssize_t start, bsz, i
    cdef double c1, c2, g, mh, vh
    with nogil:
        start = 0
        while start < n:
            bsz = batch_size if start + batch_size <= n else n - start
            if bsz >= 2:
                _batch(Xv, yv, ov, start, bsz, theta, n_in, hidden, out,
                       m_pos, m_neg, grad, A1, Z, dZ)
                t += 1
                c1 = 1.0 - beta1 ** t
                c2 = 1.0 - beta2 ** t
                for i in range(p):
                    g = grad[i]
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
                    mh = m[i] / c1
                    vh = v[i] / c2
                    theta[i] -= lr * mh / (sqrt(vh) + eps)
            start += batch_size
    return t


def mean_pair_loss(Z, y, double m_pos, double m_neg):
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef const int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = Zv.shape[0], dim = Zv.shape[1], a, b, o
    cdef double total = 0.0, sq, diff, d
    if n < 2:
        return 0.0
    with nogil:
        for a in range(n):
            for b in range(a + 1, n):
                sq = 0.0
                for o in range(dim):
                    diff = Zv[a, o] - Zv[b, o]
                    sq += diff * diff
                d = sqrt(sq)
                if yv[a] == yv[b]:
                    if d > m_pos:
                        total += d - m_pos
                elif d < m_neg:
                    total += m_neg - d
    return total / (n * (n - 1) / 2.0)


def knn_search(Q, R, Py_ssize_t k):
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef Py_ssize_t nq = Qv.shape[0], nr = Rv.shape[0], dim = Qv.shape[1]
    idx_arr = np.empty((nq, k), dtype=np.int64)
    dist_arr = np.empty((nq, k), dtype=np.float64)
    cdef int64_t[:, ::1] idx = idx_arr
    cdef double[:, ::1] dist = dist_arr
    cdef Py_ssize_t q, r, o, filled, pos
    cdef double sq, diff, d
    with nogil:
        for q in range(nq):
            filled = 0
            for r in range(nr):
                sq = 0.0
                for o in range(dim):
                    diff = Qv[q, o] - Rv[r, o]
                    sq += diff * diff
                d = sqrt(sq)
                if filled == k and d >= dist[q, k - 1]:
                    continue
                # insert after every kept neighbour with distance <= d
                pos = filled if filled < k else k - 1
                while pos > 0 and dist[q, pos - 1] > d:
                    if pos < k:
                        dist[q, pos] = dist[q, pos - 1]
                        idx[q, pos] = idx[q, pos - 1]
                    pos -= 1
                dist[q, pos] = d
                idx[q, pos] = r
                if filled < k:
                    filled += 1
    return idx_arr, dist_arr
