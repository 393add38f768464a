"""Fully connected auto-encoder: layer layout, forward and backward passes.

The encoder is ``input -> hidden... -> latent`` and the decoder mirrors it.
Every hidden linear layer is followed by batch normalisation and ELU; the
latent layer is linear and the output layer is a sigmoid. Weights are
stored as ``(fan_in, fan_out)`` so a layer computes ``h @ W + b``.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput
from ..numerics import make_rng

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ELU_ALPHA = 1.0
REFERENCE_INPUT_DIM = 15633
REFERENCE_HIDDEN = (500, 250, 125)

_OUT_LO = np.finfo(np.float64).tiny
_OUT_HI = 1.0 - np.finfo(np.float64).epsneg


@dataclass(frozen=True)
class AeArchitecture:
    input_dim: int
    hidden: tuple = REFERENCE_HIDDEN
    latent_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.latent_dim < 1 or any(h < 1 for h in self.hidden):
            raise InvalidInput("all layer widths must be >= 1")

    def layers(self):
        """``(name, fan_in, fan_out, batchnorm, activation)`` for every linear layer."""
        enc = (self.input_dim,) + self.hidden
        out = []
        for i in range(len(self.hidden)):
            out.append((f"enc{i}", enc[i], enc[i + 1], True, "elu"))
        out.append((f"enc{len(self.hidden)}", enc[-1], self.latent_dim, False, "linear"))
        dec = (self.latent_dim,) + self.hidden[::-1]
        for i in range(len(self.hidden)):
            out.append((f"dec{i}", dec[i], dec[i + 1], True, "elu"))
        out.append((f"dec{len(self.hidden)}", dec[-1], self.input_dim, False, "sigmoid"))
        return out

    @property
    def latent_layer(self):
        return len(self.hidden)


def ae_param_count(arch):
    """Trainable scalars: ``in*out + out`` per linear layer, ``2*width`` per BN layer."""
    total = 0
    for _, fan_in, fan_out, bn, _ in arch.layers():
        total += fan_in * fan_out + fan_out
        if bn:
            total += 2 * fan_out
    return total


class AeModel:
    """Parameters, running statistics and mode of one auto-encoder.

    Implements the same ``transform`` / ``inverse`` contract as the other
    embedders so it can take part in a benchmark as method ``"ae"``.
    """

    method = "ae"
    can_transform_new = True
    can_inverse = True

    def __init__(self, arch, params, running, seed=0):
        self.arch = arch
        self.params = params
        self.running = running
        self.seed = seed
        self.mode = "eval"

    @property
    def latent_dim(self):
        return self.arch.latent_dim

    @property
    def n_features(self):
        return self.arch.input_dim

    def copy(self):
        m = AeModel(self.arch, {k: v.copy() for k, v in self.params.items()},
                    {k: v.copy() for k, v in self.running.items()}, self.seed)
        m.mode = self.mode
        return m

    def weight_names(self):
        return [f"{name}.W" for name, *_ in self.arch.layers()]

    def transform(self, x):
        from .training import ae_embed
        return ae_embed(self, x)

    def inverse(self, z, clip=True):
        from .training import ae_decode
        return ae_decode(self, z)


def init_model(arch, seed):
    """Uniform fan-in init: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); BN gamma=1, beta=0."""
    rng = make_rng(seed, "ae-init")
    params, running = {}, {}
    for name, fan_in, fan_out, bn, _ in arch.layers():
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{name}.W"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{name}.b"] = rng.uniform(-bound, bound, size=fan_out)
        if bn:
            params[f"{name}.gamma"] = np.ones(fan_out)
            params[f"{name}.beta"] = np.zeros(fan_out)
            running[f"{name}.mean"] = np.zeros(fan_out)
            running[f"{name}.var"] = np.ones(fan_out)
    return AeModel(arch, params, running, seed)


def elu(a):
    return np.where(a > 0, a, ELU_ALPHA * np.expm1(np.minimum(a, 0.0)))


def sigmoid(a):
    s = 0.5 * (1.0 + np.tanh(0.5 * a))
    return np.clip(s, _OUT_LO, _OUT_HI)


def _check_input(model, x, width):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise InvalidInput(f"expected a 2-D array with {width} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("input contains non-finite values")
    return x


def _run_layers(model, h, layers, mode, update_running, caches):
    p, run = model.params, model.running
    for name, _, _, bn, act in layers:
        a = h @ p[f"{name}.W"] + p[f"{name}.b"]
        cache = {"h_in": h}
        if bn:
            if mode == "train":
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                if update_running:
                    m = a.shape[0]
                    run[f"{name}.mean"] = (1 - BN_MOMENTUM) * run[f"{name}.mean"] + BN_MOMENTUM * mu
                    run[f"{name}.var"] = ((1 - BN_MOMENTUM) * run[f"{name}.var"]
                                          + BN_MOMENTUM * var * m / (m - 1))
            else:
                mu, var = run[f"{name}.mean"], run[f"{name}.var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv_std
            cache["xhat"], cache["inv_std"] = xhat, inv_std
            a = p[f"{name}.gamma"] * xhat + p[f"{name}.beta"]
        cache["pre"] = a
        if act == "elu":
            h = elu(a)
        elif act == "sigmoid":
            h = sigmoid(a)
        else:
            h = a
        cache["out"] = h
        if caches is not None:
            caches.append(cache)
    return h


def ae_forward(model, x, mode="eval", update_running=True, return_cache=False):
    """Reconstruction and latent code of a batch.

    Train mode normalises with batch statistics (biased variance) and, when
    ``update_running``, folds them into the running estimates with momentum
    0.1 using the unbiased variance. Eval mode uses the running estimates.
    """
    if mode not in ("train", "eval"):
        raise InvalidInput(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _check_input(model, x, model.arch.input_dim)
    if mode == "train" and x.shape[0] < 2:
        raise InvalidInput("train-mode batch normalisation needs a batch of at least 2 rows")
    layers = model.arch.layers()
    cut = model.arch.latent_layer + 1
    caches = [] if return_cache else None
    z = _run_layers(model, x, layers[:cut], mode, update_running, caches)
    r = _run_layers(model, z, layers[cut:], mode, update_running, caches)
    if return_cache:
        return r, z, caches
    return r, z


def decode_layers(model, z):
    """Eval-mode pass through the decoder half only."""
    layers = model.arch.layers()
    z = _check_input(model, z, model.arch.latent_dim)
    return _run_layers(model, z, layers[model.arch.latent_layer + 1:], "eval", False, None)


def l2_penalty(model, lam):
    return lam * sum(float(np.einsum("ij,ij->", model.params[w], model.params[w]))
                     for w in model.weight_names())


def mse(r, x):
    d = r - x
    return float(np.einsum("ij,ij->", d, d)) / d.size


def ae_loss(model, x, l2_lambda=0.0, mode="train", update_running=False):
    r, _ = ae_forward(model, x, mode, update_running=update_running)
    return mse(r, x) + l2_penalty(model, l2_lambda)


def ae_backward(model, x, l2_lambda=0.0, update_running=False):
    """Loss and gradients of ``mean((r - x)^2) + l2 * sum ||W||^2`` in train mode.

    Gradients flow through the batch statistics of every BN layer.

    Returns
    -------
    loss : float
    grads : dict
        Same keys as ``model.params``.
    """
    r, _, caches = ae_forward(model, x, "train", update_running=update_running, return_cache=True)
    loss = mse(r, x) + l2_penalty(model, l2_lambda)
    p = model.params
    grads = {}
    d_out = 2.0 * (r - x) / r.size
    for (name, _, _, bn, act), cache in zip(reversed(model.arch.layers()), reversed(caches)):
        if act == "sigmoid":
            s = cache["out"]
            da = d_out * s * (1.0 - s)
        elif act == "elu":
            pre = cache["pre"]
            da = d_out * np.where(pre > 0, 1.0, cache["out"] + ELU_ALPHA)
        else:
            da = d_out
        if bn:
            xhat = cache["xhat"]
            grads[f"{name}.gamma"] = np.einsum("ij,ij->j", da, xhat)
            grads[f"{name}.beta"] = da.sum(axis=0)
            dxhat = da * p[f"{name}.gamma"]
            m = dxhat.shape[0]
            da = (cache["inv_std"] / m) * (m * dxhat - dxhat.sum(axis=0)
                                          - xhat * np.einsum("ij,ij->j", dxhat, xhat))
        w = p[f"{name}.W"]
        grads[f"{name}.W"] = cache["h_in"].T @ da + 2.0 * l2_lambda * w
        grads[f"{name}.b"] = da.sum(axis=0)
        d_out = da @ w.T
    return loss, grads
