"""Pure numpy implementations of the hot loops.

Mirrors the compiled ``_kernels`` extension function for function. The
parameter vector ``theta`` is laid out as ``[W1 (n_in x hidden, row-major),
b1, W2 (hidden x out, row-major), b2]``.
"""
import numpy as np

DIST_EPS = 1e-12
# keeps sigmoid outputs strictly inside (0, 1) in double precision
LOGIT_CLIP = 36.0


def unpack(theta, n_in, hidden, out):
    o1 = n_in * hidden
    o2 = o1 + hidden
    o3 = o2 + hidden * out
    return (theta[:o1].reshape(n_in, hidden), theta[o1:o2],
            theta[o2:o3].reshape(hidden, out), theta[o3:o3 + out])


def batch_loss_grad(X, y, theta, n_in, hidden, out, m_pos, m_neg, grad):
    """Contrastive loss summed over all row pairs of ``X``; fills ``grad``."""
    w1, b1, w2, b2 = unpack(theta, n_in, hidden, out)
    a1 = X @ w1 + b1
    h = np.maximum(a1, 0.0)
    z = 1.0 / (1.0 + np.exp(-np.clip(h @ w2 + b2, -LOGIT_CLIP, LOGIT_CLIP)))
    n = X.shape[0]
    diff = z[:, None, :] - z[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(sq + DIST_EPS)
    same = y[:, None] == y[None, :]
    pos_active = same & (d > m_pos)
    neg_active = ~same & (d < m_neg)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    loss = (np.sum((d - m_pos)[pos_active & upper])
            + np.sum((m_neg - d)[neg_active & upper]))
    coef = pos_active.astype(np.float64) - neg_active.astype(np.float64)
    coef[sq == 0.0] = 0.0
    np.fill_diagonal(coef, 0.0)
    g = coef / d
    dz = z * g.sum(axis=1)[:, None] - g @ z
    da2 = dz * z * (1.0 - z)
    dh = (da2 @ w2.T) * (a1 > 0.0)
    gw1, gb1, gw2, gb2 = unpack(grad, n_in, hidden, out)
    gw1[...] = X.T @ dh
    gb1[...] = dh.sum(axis=0)
    gw2[...] = h.T @ da2
    gb2[...] = da2.sum(axis=0)
    return float(loss)


def train_epoch(X, y, order, batch_size, theta, m, v, t, n_in, hidden, out,
                lr, beta1, beta2, eps, m_pos, m_neg):
    """One pass of Adam over ``order`` in consecutive batches; returns the step count."""
    grad = np.empty_like(theta)
    n = order.shape[0]
    for start in range(0, n, batch_size):
        rows = order[start:start + batch_size]
        if rows.shape[0] < 2:
            continue
        batch_loss_grad(X[rows], y[rows], theta, n_in, hidden, out, m_pos, m_neg, grad)
        t += 1
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
    return t


def mean_pair_loss(Z, y, m_pos, m_neg):
    """Mean contrastive loss over all unordered pairs, exact distances."""
    n = Z.shape[0]
    if n < 2:
        return 0.0
    total = 0.0
    # row blocks keep memory bounded for large validation sets
    for start in range(0, n - 1, 512):
        zi = Z[start:start + 512]
        diff = zi[:, None, :] - Z[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        same = y[start:start + 512, None] == y[None, :]
        rows = np.arange(start, start + zi.shape[0])[:, None]
        upper = np.arange(n)[None, :] > rows
        total += np.sum(np.where(same, np.maximum(0.0, d - m_pos),
                                 np.maximum(0.0, m_neg - d))[upper])
    return float(total / (n * (n - 1) / 2))


def knn_search(Q, R, k):
    """k nearest rows of ``R`` per query; ties resolved by lower row index."""
    nq = Q.shape[0]
    idx = np.empty((nq, k), dtype=np.int64)
    dist = np.empty((nq, k), dtype=np.float64)
    for start in range(0, nq, 256):
        q = Q[start:start + 256]
        diff = q[:, None, :] - R[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        idx[start:start + q.shape[0]] = nn
        dist[start:start + q.shape[0]] = np.take_along_axis(d, nn, axis=1)
    return idx, dist
