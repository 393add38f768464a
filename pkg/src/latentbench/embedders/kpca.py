"""RBF kernel PCA with a learned kernel-ridge pre-image map."""

import numpy as np

from ..errors import InvalidInput, NumericalFailure
from ..numerics import as_matrix, make_rng, pairwise_sq_dists, sym_eig
from .base import EmbedderModel, EmbedderSpec, check_dims, fingerprint

PSD_TOL = 1e-8


def rbf_kernel(x, y, gamma):
    return np.exp(-gamma * pairwise_sq_dists(x, y))


def center_gram(k):
    """Double-centre a square Gram matrix: K - 1K - K1 + 1K1."""
    col = k.mean(axis=0)
    row = k.mean(axis=1)
    return k - col[None, :] - row[:, None] + k.mean()


class KernelPCAModel(EmbedderModel):
    method = "kpca"

    def __init__(self, spec, x_fit, gamma, col_means, grand_mean, eigvals, eigvecs, latent, train_fp):
        super().__init__(spec, x_fit.shape[1], train_fp)
        self.x_fit = x_fit
        self.gamma = gamma
        self.col_means = col_means
        self.grand_mean = grand_mean
        self.eigvals = eigvals
        self.eigvecs = eigvecs
        self.fit_latent = latent
        with np.errstate(divide="ignore"):
            scale = np.where(eigvals > 0, 1.0 / np.sqrt(np.maximum(eigvals, 1e-300)), 0.0)
        self._proj = eigvecs * scale
        self.preimage_gamma = None
        self.preimage_coef = None

    def centered_cross_kernel(self, x):
        kx = rbf_kernel(x, self.x_fit, self.gamma)
        return kx - kx.mean(axis=1, keepdims=True) - self.col_means[None, :] + self.grand_mean

    def _transform(self, x):
        return self.centered_cross_kernel(x) @ self._proj

    def fit_preimage(self, x_targets, alpha, gamma=None):
        """Kernel ridge regression from latent rows back to input rows."""
        z = self.fit_latent
        if gamma is None:
            var = float(np.mean(np.var(z, axis=0)))
            gamma = 1.0 / (z.shape[1] * var) if var > 0 else 1.0
        kz = rbf_kernel(z, z, gamma)
        kz[np.diag_indices_from(kz)] += alpha
        self.preimage_gamma = gamma
        self.preimage_coef = np.linalg.solve(kz, x_targets)

    def _inverse(self, z):
        return rbf_kernel(z, self.fit_latent, self.preimage_gamma) @ self.preimage_coef


def kpca_fit(x_train, k, gamma=None, alpha=1.0, preimage_gamma=None, max_train=None,
             eig_method="auto", seed=0):
    """Fit RBF kernel PCA on (a seeded subset of) the training rows.

    Parameters
    ----------
    gamma : float, optional
        Kernel width in ``exp(-gamma * |x - y|^2)``; defaults to ``1 / n_genes``.
    alpha : float
        Ridge penalty of the pre-image regressor.
    max_train : int, optional
        Cap on the rows used to build the Gram matrix.
    """
    x = as_matrix(x_train, "x_train")
    fp = fingerprint(x)
    n, g = x.shape
    gamma = 1.0 / g if gamma is None else float(gamma)
    if gamma <= 0:
        raise InvalidInput("gamma must be positive")
    if max_train is not None and n > max_train:
        rows = np.sort(make_rng(seed, "kpca-subset").choice(n, size=int(max_train), replace=False))
        x = x[rows]
        n = x.shape[0]
    check_dims(x, k, n - 1, "kpca")
    gram = rbf_kernel(x, x, gamma)
    kc = center_gram(gram)
    w, v = sym_eig(kc, method=eig_method)
    if w[-1] < -PSD_TOL * max(1.0, w[0]):
        raise NumericalFailure(f"centred Gram matrix not PSD: min eigenvalue {w[-1]:.3e}")
    lam = np.maximum(w[:k], 0.0)
    vecs = np.ascontiguousarray(v[:, :k])
    latent = vecs * np.sqrt(lam)
    spec = EmbedderSpec("kpca", k, {"gamma": gamma, "alpha": alpha, "max_train": max_train}, seed)
    model = KernelPCAModel(spec, x, gamma, gram.mean(axis=0), gram.mean(), lam, vecs, latent, fp)
    model.fit_preimage(x, alpha, preimage_gamma)
    return model
