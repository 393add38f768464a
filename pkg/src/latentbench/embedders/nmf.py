"""Nonnegative matrix factorisation by Lee-Seung multiplicative updates."""

import numpy as np

from ..errors import InvalidInput
from ..numerics import as_matrix, svd
from .base import EmbedderModel, EmbedderSpec, check_dims, fingerprint

INIT_FLOOR = 1e-9
_TINY = 1e-300


def nndsvd(x, k, floor=INIT_FLOOR):
    """Nonnegative double SVD initialisation (Boutsidis & Gallopoulos)."""
    u, s, v = svd(x)
    n, g = x.shape
    w = np.zeros((n, k))
    h = np.zeros((k, g))
    w[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    h[0] = np.sqrt(s[0]) * np.abs(v[:, 0])
    for j in range(1, k):
        xu, yv = u[:, j], v[:, j]
        xp, xn = np.maximum(xu, 0), np.maximum(-xu, 0)
        yp, yn = np.maximum(yv, 0), np.maximum(-yv, 0)
        nxp, nyp = np.linalg.norm(xp), np.linalg.norm(yp)
        nxn, nyn = np.linalg.norm(xn), np.linalg.norm(yn)
        if nxp * nyp >= nxn * nyn:
            a, b, sigma = xp / max(nxp, _TINY), yp / max(nyp, _TINY), nxp * nyp
        else:
            a, b, sigma = xn / max(nxn, _TINY), yn / max(nyn, _TINY), nxn * nyn
        scale = np.sqrt(s[j] * sigma)
        w[:, j] = scale * a
        h[j] = scale * b
    return np.maximum(w, floor), np.maximum(h, floor)


def frobenius_sq(x, w, h):
    r = x - w @ h
    return float(np.einsum("ij,ij->", r, r))


def _update_h(x, w, h):
    h *= (w.T @ x) / np.maximum((w.T @ w) @ h, _TINY)


def _update_w(x, w, h):
    w *= (x @ h.T) / np.maximum(w @ (h @ h.T), _TINY)


def solve_w(x, h, max_iters, tol, floor=INIT_FLOOR):
    """Codes for rows of ``x`` with ``h`` held fixed, by the same W-update."""
    w0, *_ = np.linalg.lstsq(h.T, x.T, rcond=None)
    w = np.maximum(w0.T, floor)
    prev = frobenius_sq(x, w, h)
    for _ in range(max_iters):
        _update_w(x, w, h)
        obj = frobenius_sq(x, w, h)
        if prev > 0 and (prev - obj) / prev < tol:
            break
        prev = obj
    return w


class NMFModel(EmbedderModel):
    method = "nmf"

    def __init__(self, spec, w, h, objective_trace, train_fp):
        super().__init__(spec, h.shape[1], train_fp, train_latent=w)
        self.h = h
        self.objective_trace = objective_trace

    @property
    def w(self):
        return self.train_latent

    def _transform(self, x):
        p = self.spec.params
        return solve_w(x, self.h, p["max_iters"], p["tol"])

    def _inverse(self, z):
        return z @ self.h


def nmf_fit(x_train, k, max_iters=200, tol=1e-4, seed=0):
    """Factorise ``x ~ W H`` with ``W, H >= 0``.

    Stops after ``max_iters`` alternating updates or once the relative
    decrease of ``|x - WH|_F^2`` falls below ``tol``. The full objective
    sequence (starting at the initialisation) is kept on the model.
    """
    x = as_matrix(x_train, "x_train")
    if x.min() < 0:
        raise InvalidInput("nmf needs nonnegative input")
    n, g = x.shape
    check_dims(x, k, min(n, g), "nmf")
    w, h = nndsvd(x, k)
    trace = [frobenius_sq(x, w, h)]
    for _ in range(max_iters):
        _update_h(x, w, h)
        _update_w(x, w, h)
        trace.append(frobenius_sq(x, w, h))
        prev = trace[-2]
        if prev > 0 and (prev - trace[-1]) / prev < tol:
            break
        if trace[-1] == 0.0:
            break
    spec = EmbedderSpec("nmf", k, {"max_iters": max_iters, "tol": tol}, seed)
    return NMFModel(spec, w, h, np.array(trace), fingerprint(x))
