"""Non-neural representation learners behind one fit/transform/inverse contract."""

from ..errors import InvalidInput
from ..numerics import as_matrix
from .base import METHODS, LATENT_DIMS, EmbedderModel, EmbedderSpec
from .kpca import kpca_fit
from .nmf import nmf_fit
from .pca import pca_fit
from .tsne import tsne_fit
from .umap import umap_fit

_FITTERS = {
    "pca": pca_fit,
    "kpca": kpca_fit,
    "nmf": nmf_fit,
    "tsne": tsne_fit,
    "umap": umap_fit,
}


def fit_embedder(spec, x_train):
    """Fit the method named by ``spec`` on ``x_train``."""
    x = as_matrix(x_train, "x_train")
    if spec.latent_dim >= x.shape[1]:
        raise InvalidInput(f"latent_dim {spec.latent_dim} must be below n_genes {x.shape[1]}")
    return _FITTERS[spec.method](x, spec.latent_dim, seed=spec.seed, **spec.params)


def transform(model, x):
    return model.transform(x)


def inverse(model, z, clip=True):
    return model.inverse(z, clip=clip)


__all__ = [
    "METHODS", "LATENT_DIMS", "EmbedderModel", "EmbedderSpec", "fit_embedder", "transform",
    "inverse", "pca_fit", "kpca_fit", "nmf_fit", "tsne_fit", "umap_fit",
]
