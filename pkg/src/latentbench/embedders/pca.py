import numpy as np

from ..numerics import as_matrix, svd
from .base import EmbedderModel, EmbedderSpec, check_dims, fingerprint


class PCAModel(EmbedderModel):
    method = "pca"

    def __init__(self, spec, mean, components, explained_variance, train_fp):
        super().__init__(spec, len(mean), train_fp)
        self.mean = mean
        self.components = components
        self.explained_variance = explained_variance

    def _transform(self, x):
        return (x - self.mean) @ self.components

    def _inverse(self, z):
        return z @ self.components.T + self.mean


def pca_fit(x_train, k, svd_method="auto", seed=0):
    """Principal components of the centred training matrix.

    ``components`` holds the top-``k`` right singular vectors as columns;
    ``explained_variance`` the matching sample-covariance eigenvalues.
    """
    x = as_matrix(x_train, "x_train")
    n, g = x.shape
    check_dims(x, k, min(n - 1, g), "pca")
    mean = x.mean(axis=0)
    _, s, v = svd(x - mean, method=svd_method)
    spec = EmbedderSpec("pca", k, {"svd_method": svd_method}, seed)
    return PCAModel(spec, mean, np.ascontiguousarray(v[:, :k]), s[:k] ** 2 / (n - 1), fingerprint(x))
