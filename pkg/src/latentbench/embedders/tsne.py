"""Exact t-SNE.

Affinities are calibrated per point by bisection on the Gaussian precision,
the embedding minimises KL(P || Q) with a Student-t Q using gradient descent
with momentum, per-coordinate gains and early exaggeration.
"""

import warnings

import numpy as np

from ..errors import InvalidInput
from ..numerics import as_matrix, pairwise_sq_dists
from .base import EmbedderModel, EmbedderSpec, fingerprint
from .pca import pca_fit

PERPLEXITY_TOL = 1e-5
EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
N_ITERS = 1000
MIN_GAIN = 0.01


def conditional_affinities(d2, perplexity, tol=PERPLEXITY_TOL, max_iter=200):
    """Row-stochastic p_{j|i} whose rows hit the requested perplexity.

    Parameters
    ----------
    d2 : ndarray (n, n)
        Squared distances; the diagonal is ignored.
    perplexity : float
        Target ``exp(H(P_i))``. Values above ``n - 1`` are clamped.

    Returns
    -------
    p : ndarray (n, n)
    perp : ndarray (n,)
        Achieved perplexity of every row.
    """
    d2 = np.asarray(d2, dtype=np.float64)
    n = d2.shape[0]
    if n < 2:
        raise InvalidInput("need at least two points")
    if perplexity > n - 1:
        warnings.warn(f"perplexity {perplexity} infeasible for {n} points; clamped to {n - 1}")
        perplexity = float(n - 1)
    off = ~np.eye(n, dtype=bool)
    dist = d2[off].reshape(n, n - 1)
    dist = dist - dist.min(axis=1, keepdims=True)
    target = np.log(perplexity)

    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)

    def row_stats(b, dd):
        e = np.exp(-b[:, None] * dd)
        z = e.sum(axis=1)
        h = np.log(z) + b * (e * dd).sum(axis=1) / z
        return e / z[:, None], h

    p, h = row_stats(beta, dist)
    active = np.abs(np.exp(h) - perplexity) >= tol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        too_flat = h[idx] > target
        lo[idx[too_flat]] = beta[idx[too_flat]]
        hi[idx[~too_flat]] = beta[idx[~too_flat]]
        b_lo, b_hi = lo[idx], hi[idx]
        beta[idx] = np.where(np.isinf(b_hi), beta[idx] * 2.0, 0.5 * (b_lo + b_hi))
        p_new, h_new = row_stats(beta[idx], dist[idx])
        p[idx] = p_new
        h[idx] = h_new
        active[idx] = np.abs(np.exp(h_new) - perplexity) >= tol

    perp = np.exp(h)
    failed = np.abs(perp - perplexity) >= 1e-3
    if failed.any():
        warnings.warn(f"{int(failed.sum())} rows could not reach perplexity {perplexity}; using uniform affinities")
        p[failed] = 1.0 / (n - 1)
        perp[failed] = n - 1
    out = np.zeros((n, n))
    out[off] = p.ravel()
    return out, perp


def joint_probabilities(p_cond):
    n = p_cond.shape[0]
    return (p_cond + p_cond.T) / (2.0 * n)


def _student_t(y):
    num = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    return num


def q_matrix(y):
    num = _student_t(y)
    return num / num.sum()


def kl_divergence(p, y):
    """KL(P || Q(y)) summed over off-diagonal pairs with p > 0."""
    q = q_matrix(y)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_gradient(p, y):
    """dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)."""
    num = _student_t(y)
    q = num / num.sum()
    pq = (p - q) * num
    return 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)


def auto_learning_rate(n, exaggeration=EARLY_EXAGGERATION):
    return max(n / exaggeration / 4.0, 50.0)


def optimize_embedding(p, y0, n_iters=N_ITERS, learning_rate=None,
                       exaggeration=EARLY_EXAGGERATION, exaggeration_iters=EXAGGERATION_ITERS):
    """Gradient descent with momentum 0.5 -> 0.8 and delta-bar-delta gains."""
    y = y0.copy()
    n = y.shape[0]
    lr = auto_learning_rate(n, exaggeration) if learning_rate in (None, "auto") else float(learning_rate)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(n_iters):
        early = it < exaggeration_iters
        momentum = 0.5 if early else 0.8
        grad = kl_gradient(p * exaggeration if early else p, y)
        same_dir = update * grad < 0.0
        gains = np.where(same_dir, gains + 0.2, gains * 0.8)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - lr * gains * grad
        y += update
    return y


class TSNEModel(EmbedderModel):
    method = "tsne"
    can_inverse = False

    def __init__(self, spec, x_fit, embedding, p, train_fp):
        super().__init__(spec, x_fit.shape[1], train_fp, train_latent=embedding)
        self.x_fit = x_fit
        self.p = p

    @property
    def embedding(self):
        return self.train_latent

    def _transform(self, x):
        # inverse-square-distance interpolation over the nearest training points
        k = min(self.spec.params["oos_neighbors"], self.x_fit.shape[0])
        d2 = pairwise_sq_dists(x, self.x_fit)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        dn = np.take_along_axis(d2, nn, axis=1)
        exact = dn[:, 0] == 0.0
        w = np.where(exact[:, None], (dn == 0.0).astype(float), 1.0 / np.where(dn > 0, dn, 1.0))
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("ij,ijk->ik", w, self.embedding[nn])

    def _inverse_reason(self):
        return "tsne: no inverse transform implementation is available"


def tsne_fit(x_train, k=2, perplexity=30.0, learning_rate="auto", n_iters=N_ITERS,
             oos_neighbors=30, seed=0):
    x = as_matrix(x_train, "x_train")
    n = x.shape[0]
    if n <= 3 * perplexity:
        raise InvalidInput(f"tsne needs more than 3 * perplexity = {3 * perplexity:g} rows, got {n}")
    if k < 1:
        raise InvalidInput("latent_dim must be >= 1")
    p_cond, _ = conditional_affinities(pairwise_sq_dists(x), perplexity)
    p = joint_probabilities(p_cond)
    init = pca_fit(x, min(k, x.shape[1], n - 1)).transform(x)
    if init.shape[1] < k:
        init = np.hstack([init, np.zeros((n, k - init.shape[1]))])
    init = init / np.std(init[:, 0]) * 1e-4
    y = optimize_embedding(p, init, n_iters=n_iters, learning_rate=learning_rate)
    params = {"perplexity": perplexity, "learning_rate": learning_rate, "n_iters": n_iters,
              "oos_neighbors": oos_neighbors}
    return TSNEModel(EmbedderSpec("tsne", k, params, seed), x, y, p, fingerprint(x))
