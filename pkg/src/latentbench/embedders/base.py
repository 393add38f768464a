"""Shared fit/transform/inverse contract for the representation learners."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, UnsupportedOperation
from ..numerics import as_matrix

METHODS = ("pca", "kpca", "nmf", "tsne", "umap")
LATENT_DIMS = (2, 4, 8, 16, 32, 64, 128)


@dataclass
class EmbedderSpec:
    method: str
    latent_dim: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInput(f"unknown method {self.method!r}; expected one of {METHODS}")
        if int(self.latent_dim) < 1:
            raise InvalidInput("latent_dim must be >= 1")
        self.latent_dim = int(self.latent_dim)


def fingerprint(x):
    """Shape plus SHA-1 of the raw bytes; identifies the fitted training set."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.shape, hashlib.sha1(x.tobytes()).hexdigest()


class EmbedderModel:
    """A fitted representation.

    Subclasses implement ``_transform`` and, where possible, ``_inverse``.
    Calling through :meth:`transform` / :meth:`inverse` enforces the
    capability flags.
    """

    method = None
    can_transform_new = True
    can_inverse = True

    def __init__(self, spec, n_features, train_fp, train_latent=None):
        self.spec = spec
        self.n_features = n_features
        self._train_fp = train_fp
        self.train_latent = train_latent

    @property
    def latent_dim(self):
        return self.spec.latent_dim

    def is_training_set(self, x):
        return fingerprint(x) == self._train_fp

    def transform(self, x):
        x = as_matrix(x, "x")
        if x.shape[1] != self.n_features:
            raise InvalidInput(f"expected {self.n_features} columns, got {x.shape[1]}")
        if self.train_latent is not None and self.is_training_set(x):
            return self.train_latent.copy()
        if not self.can_transform_new:
            raise UnsupportedOperation(f"{self.method} cannot embed unseen points")
        return self._transform(x)

    def inverse(self, z, clip=True):
        if not self.can_inverse:
            raise UnsupportedOperation(self._inverse_reason())
        z = as_matrix(z, "z")
        if z.shape[1] != self.latent_dim:
            raise InvalidInput(f"expected latent width {self.latent_dim}, got {z.shape[1]}")
        out = self._inverse(z)
        return np.clip(out, 0.0, 1.0) if clip else out

    def _inverse_reason(self):
        return f"{self.method} has no inverse transform"

    def _transform(self, x):
        raise NotImplementedError

    def _inverse(self, z):
        raise NotImplementedError


def check_dims(x, k, max_k, method):
    if not 1 <= k <= max_k:
        raise InvalidInput(f"{method}: latent_dim {k} outside [1, {max_k}] for data of shape {x.shape}")
