"""UMAP with exact nearest neighbours.

Graph construction follows the usual smooth-kNN calibration and fuzzy
union; the layout is optimised by SGD with negative sampling starting from
a spectral embedding of the graph.
"""

import warnings

import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from ..errors import InvalidInput
from ..numerics import as_matrix, derive_seed, make_rng, pairwise_sq_dists, sym_eig
from .base import EmbedderModel, EmbedderSpec, fingerprint

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3
DENSE_SPECTRAL_MAX = 4096


def exact_knn(x, n_neighbors, y=None):
    """Indices and Euclidean distances of the ``n_neighbors`` nearest rows.

    Without ``y`` the query set is ``x`` itself and each point is its own
    first neighbour.
    """
    ref = x if y is None else y
    n = x.shape[0]
    k = min(n_neighbors, ref.shape[0])
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    step = max(1, (1 << 22) // max(1, ref.shape[0]))
    for start in range(0, n, step):
        d2 = pairwise_sq_dists(x[start:start + step], ref)
        if y is None:
            rows = np.arange(d2.shape[0])
            d2[rows, start + rows] = -1.0  # self first even among duplicates
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, pd), axis=1)
        idx[start:start + step] = np.take_along_axis(part, order, axis=1)
        dist[start:start + step] = np.sqrt(np.maximum(np.take_along_axis(pd, order, axis=1), 0.0))
    return idx, dist


def smooth_knn_dist(knn_dists, n_neighbors, n_iter=64, tol=SMOOTH_K_TOLERANCE):
    """Per-point offset rho and bandwidth sigma.

    ``rho`` is the smallest positive neighbour distance; ``sigma`` solves
    ``sum_j exp(-max(0, d_ij - rho) / sigma) = log2(n_neighbors)`` over the
    non-self neighbours by bisection.
    """
    n = knn_dists.shape[0]
    target = np.log2(n_neighbors)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = float(np.mean(knn_dists))
    for i in range(n):
        row = knn_dists[i]
        pos = row[row > 0.0]
        if pos.size:
            rho[i] = pos[0]
        gaps = row[1:] - rho[i]
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            psum = float(np.sum(np.where(gaps > 0, np.exp(-np.maximum(gaps, 0.0) / mid), 1.0)))
            if abs(psum - target) < tol:
                break
            if psum > target:
                hi = mid
                mid = 0.5 * (lo + hi)
            else:
                lo = mid
                mid = mid * 2.0 if np.isinf(hi) else 0.5 * (lo + hi)
        floor = MIN_K_DIST_SCALE * (float(np.mean(row)) if rho[i] > 0 else mean_all)
        sigma[i] = max(mid, floor)
    return rho, sigma


def membership_residual(knn_dists, rho, sigma, n_neighbors):
    """|sum_j exp(-max(0, d_ij - rho_i) / sigma_i) - log2(k)| per point."""
    gaps = np.maximum(knn_dists[:, 1:] - rho[:, None], 0.0)
    return np.abs(np.exp(-gaps / sigma[:, None]).sum(axis=1) - np.log2(n_neighbors))


def directed_memberships(knn_idx, knn_dists, rho, sigma):
    """Sparse matrix A with A[i, j] = exp(-max(0, d_ij - rho_i) / sigma_i)."""
    n, k = knn_idx.shape
    vals = np.exp(-np.maximum(knn_dists - rho[:, None], 0.0) / sigma[:, None])
    vals[knn_idx == np.arange(n)[:, None]] = 0.0
    rows = np.repeat(np.arange(n), k)
    a = sp.csr_matrix((vals.ravel(), (rows, knn_idx.ravel())), shape=(n, n))
    a.eliminate_zeros()
    return a


def fuzzy_union(a):
    """B = A + A^T - A o A^T."""
    at = a.T.tocsr()
    b = a + at - a.multiply(at)
    b = sp.csr_matrix(b)
    b.eliminate_zeros()
    return b


def find_ab_params(spread=1.0, min_dist=0.1):
    """Least-squares fit of 1 / (1 + a d^(2b)) to the offset-exponential curve."""
    xv = np.linspace(0.0, 3.0 * spread, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = curve_fit(curve, xv, yv, p0=(1.0, 1.0))
    return float(a), float(b)


def _spectral(graph, dim, rng):
    n = graph.shape[0]
    deg = np.asarray(graph.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    norm_adj = sp.diags(inv_sqrt) @ graph @ sp.diags(inv_sqrt)
    if n <= DENSE_SPECTRAL_MAX:
        dense = norm_adj.toarray()
        dense = 0.5 * (dense + dense.T)
        w, v = sym_eig(dense)
        return v[:, 1:dim + 1]
    lap = sp.identity(n) - norm_adj
    w, v = eigsh(lap, dim + 1, which="SM", tol=1e-4, v0=np.ones(n), maxiter=n * 5)
    order = np.argsort(w)
    return v[:, order[1:dim + 1]]


def spectral_init(graph, dim, seed):
    """Laplacian-eigenmap start, laid out per connected component."""
    rng = make_rng(seed, "umap-init")
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp == 1 and graph.shape[0] > dim + 1:
        emb = _spectral(graph, dim, rng)
    else:
        if n_comp > 1:
            warnings.warn(f"kNN graph has {n_comp} components; laying them out separately")
        emb = np.zeros((graph.shape[0], dim))
        for c in range(n_comp):
            members = np.flatnonzero(labels == c)
            if members.size > dim + 1:
                sub = _spectral(graph[members][:, members], dim, rng)
            else:
                sub = rng.uniform(-1.0, 1.0, size=(members.size, dim))
            span = np.abs(sub).max()
            sub = sub / span if span > 0 else sub
            sub[:, 0] += 3.0 * c
            emb[members] = sub
    expansion = 10.0 / np.abs(emb).max()
    return emb * expansion + rng.normal(scale=1e-4, size=emb.shape)


def make_epochs_per_sample(weights, n_epochs):
    result = np.full(weights.shape[0], -1.0)
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = n_epochs / n_samples[n_samples > 0]
    return result


@numba.njit(cache=True)
def _xorshift(state):
    x = state[0]
    x ^= (x << np.uint64(13))
    x ^= (x >> np.uint64(7))
    x ^= (x << np.uint64(17))
    state[0] = x
    return x


@numba.njit(cache=True)
def _clip(v):
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


@numba.njit(cache=True)
def _sgd_layout(emb, head, tail, epochs_per_sample, n_epochs, a, b, gamma,
                initial_alpha, negative_sample_rate, seed):
    n_vertices, dim = emb.shape
    n_edges = head.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) | np.uint64(1)
    eps_neg = epochs_per_sample / negative_sample_rate
    next_neg = eps_neg.copy()
    next_sample = epochs_per_sample.copy()
    for epoch in range(n_epochs):
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
        for i in range(n_edges):
            if epochs_per_sample[i] <= 0 or next_sample[i] > epoch:
                continue
            j = head[i]
            k = tail[i]
            d2 = 0.0
            for d in range(dim):
                diff = emb[j, d] - emb[k, d]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = -2.0 * a * b * d2 ** (b - 1.0) / (a * d2 ** b + 1.0)
            else:
                coeff = 0.0
            for d in range(dim):
                g = _clip(coeff * (emb[j, d] - emb[k, d]))
                emb[j, d] += g * alpha
                emb[k, d] -= g * alpha
            next_sample[i] += epochs_per_sample[i]
            n_neg = int((epoch - next_neg[i]) / eps_neg[i])
            for _ in range(n_neg):
                k = int(_xorshift(state) % np.uint64(n_vertices))
                if k == j:
                    continue
                d2 = 0.0
                for d in range(dim):
                    diff = emb[j, d] - emb[k, d]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = 2.0 * gamma * b / ((0.001 + d2) * (a * d2 ** b + 1.0))
                    for d in range(dim):
                        emb[j, d] += _clip(coeff * (emb[j, d] - emb[k, d])) * alpha
                else:
                    for d in range(dim):
                        emb[j, d] += 4.0 * alpha
            next_neg[i] += n_neg * eps_neg[i]
    return emb


def default_epochs(n):
    return 500 if n <= 10000 else 200


class UMAPModel(EmbedderModel):
    method = "umap"

    def __init__(self, spec, x_fit, embedding, graph, rho, sigma, a, b, inverse_budget, train_fp):
        super().__init__(spec, x_fit.shape[1], train_fp, train_latent=embedding)
        self.x_fit = x_fit
        self.graph = graph
        self.rho = rho
        self.sigma = sigma
        self.a = a
        self.b = b
        self.inverse_budget = inverse_budget
        self.can_inverse = spec.latent_dim <= inverse_budget

    @property
    def embedding(self):
        return self.train_latent

    def _transform(self, x):
        k = self.spec.params["n_neighbors"]
        idx, dist = exact_knn(x, k, self.x_fit)
        rho = np.zeros(len(x))
        pos = np.where(dist > 0, dist, np.inf).min(axis=1)
        rho[np.isfinite(pos)] = pos[np.isfinite(pos)]
        # smooth_knn_dist skips column 0 as "self"; prepend a zero column for new points
        padded = np.hstack([np.zeros((len(x), 1)), dist])
        _, sigma = smooth_knn_dist(padded, k)
        w = np.exp(-np.maximum(dist - rho[:, None], 0.0) / sigma[:, None])
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("ij,ijk->ik", w, self.embedding[idx])

    def _inverse(self, z):
        # membership-weighted neighbourhood mean: the minimiser of
        # sum_j w_j |x - x_j|^2 over the latent-space neighbours
        k = self.spec.params["n_neighbors"]
        idx, dist = exact_knn(z, k, self.embedding)
        w = 1.0 / (1.0 + self.a * dist ** (2.0 * self.b))
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("ij,ijk->ik", w, self.x_fit[idx])

    def _inverse_reason(self):
        return (f"umap inverse disabled for latent_dim {self.latent_dim} "
                f"(budget {self.inverse_budget})")


def default_inverse_budget(n_voxels):
    return 4 if n_voxels <= 4096 else 2


def umap_fit(x_train, k=2, n_neighbors=30, min_dist=0.1, spread=1.0, n_epochs=None,
             negative_sample_rate=5, inverse_budget=None, seed=0):
    x = as_matrix(x_train, "x_train")
    n = x.shape[0]
    if n <= n_neighbors:
        raise InvalidInput(f"umap needs more than n_neighbors={n_neighbors} rows, got {n}")
    if n_epochs is None:
        n_epochs = default_epochs(n)
    if inverse_budget is None:
        inverse_budget = default_inverse_budget(n)
    knn_idx, knn_dists = exact_knn(x, n_neighbors)
    rho, sigma = smooth_knn_dist(knn_dists, n_neighbors)
    graph = fuzzy_union(directed_memberships(knn_idx, knn_dists, rho, sigma))
    a, b = find_ab_params(spread, min_dist)

    emb = spectral_init(graph, k, seed)
    coo = graph.tocoo()
    keep = coo.data >= coo.data.max() / n_epochs
    head = coo.row[keep].astype(np.int64)
    tail = coo.col[keep].astype(np.int64)
    eps = make_epochs_per_sample(coo.data[keep], n_epochs)
    lo, hi = emb.min(axis=0), emb.max(axis=0)
    emb = 10.0 * (emb - lo) / np.where(hi > lo, hi - lo, 1.0)
    emb = _sgd_layout(np.ascontiguousarray(emb), head, tail, eps, int(n_epochs), a, b, 1.0, 1.0,
                      float(negative_sample_rate), derive_seed(seed, "umap-sgd"))
    params = {"n_neighbors": n_neighbors, "min_dist": min_dist, "spread": spread,
              "n_epochs": n_epochs, "negative_sample_rate": negative_sample_rate,
              "inverse_budget": inverse_budget}
    spec = EmbedderSpec("umap", k, params, seed)
    return UMAPModel(spec, x, emb, graph, rho, sigma, a, b, inverse_budget, fingerprint(x))
