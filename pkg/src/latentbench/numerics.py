"""Dense linear algebra, distance kernels and seeded randomness.

The decompositions are cyclic Jacobi methods compiled with numba. Above the
``JACOBI_*_MAX_DIM`` sizes the LAPACK drivers are used instead; both paths
honour the same contracts and sign convention.
"""

import zlib

import numba
import numpy as np

from .errors import InvalidInput

__all__ = [
    "as_matrix",
    "make_rng",
    "derive_seed",
    "svd",
    "sym_eig",
    "jacobi_svd",
    "jacobi_eigh",
    "pairwise_sq_dists",
]

JACOBI_SVD_MAX_DIM = 640
JACOBI_EIG_MAX_DIM = 512
_EPS = np.finfo(np.float64).eps
_SEED_MASK = (1 << 64) - 1


def as_matrix(a, name="matrix", allow_empty=False):
    """Return ``a`` as a C-contiguous float64 2-D array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and (arr.shape[0] < 1 or arr.shape[1] < 1):
        raise InvalidInput(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(seed, *keys):
    """Stable 63-bit seed derived from a base seed and hashable labels.

    Labels are hashed with CRC32 rather than ``hash()`` so results do not
    depend on ``PYTHONHASHSEED``.
    """
    ss = np.random.SeedSequence([int(seed) & _SEED_MASK] + [_key_to_int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed, *keys):
    """PCG64 generator for ``seed``, optionally branched by ``keys``."""
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


def _fix_signs(vectors, partner=None):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    if partner is not None:
        partner *= signs
    return signs


def _complete_basis(u, good):
    """Replace columns of ``u`` not flagged ``good`` by an orthonormal completion."""
    m, r = u.shape
    basis = [u[:, j] for j in range(r) if good[j]]
    out = u.copy()
    candidates = iter(np.eye(m))
    for j in range(r):
        if good[j]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 0.5:
                v /= nv
                basis.append(v)
                out[:, j] = v
                break
    return out


@numba.njit(cache=True)
def _hestenes_sweeps(gt, vt, tol, max_sweeps):
    n, m = gt.shape
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += gt[p, i] * gt[p, i]
                    beta += gt[q, i] * gt[q, i]
                    gamma += gt[p, i] * gt[q, i]
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    gp = gt[p, i]
                    gq = gt[q, i]
                    gt[p, i] = c * gp - s * gq
                    gt[q, i] = s * gp + c * gq
                for i in range(n):
                    vp = vt[p, i]
                    vq = vt[q, i]
                    vt[p, i] = c * vp - s * vq
                    vt[q, i] = s * vp + c * vq
        if not rotated:
            break


@numba.njit(cache=True)
def _cyclic_jacobi(a, v, max_sweeps):
    n = a.shape[0]
    eps = 2.220446049250313e-16
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    fro = np.sqrt(fro)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if np.sqrt(off) <= n * eps * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= eps * np.sqrt(abs(a[p, p] * a[q, q])):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = sgn / (abs(theta) + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                tau = s / (1.0 + c)
                a[p, p] -= t * apq
                a[q, q] += t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for r in range(n):
                    if r != p and r != q:
                        arp = a[r, p]
                        arq = a[r, q]
                        a[r, p] = arp - s * (arq + tau * arp)
                        a[r, q] = arq + s * (arp - tau * arq)
                        a[p, r] = a[r, p]
                        a[q, r] = a[r, q]
                for r in range(n):
                    vp = v[p, r]
                    vq = v[q, r]
                    v[p, r] = vp - s * (vq + tau * vp)
                    v[q, r] = vq + s * (vp - tau * vq)


def jacobi_svd(a, tol=1e-15, max_sweeps=80):
    """Thin SVD by one-sided (Hestenes) Jacobi.

    Returns ``U`` (m x r), ``s`` (r,), ``V`` (n x r) with ``r = min(m, n)`` and
    ``a = U @ diag(s) @ V.T``.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if m < n:
        u, s, v = jacobi_svd(a.T, tol=tol, max_sweeps=max_sweeps)
        return v, s, u
    # rows of gt / vt are the columns being orthogonalised
    gt = a.T.copy()
    vt = np.eye(n)
    _hestenes_sweeps(gt, vt, tol, max_sweeps)
    sv = np.sqrt(np.einsum("ij,ij->i", gt, gt))
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    g = np.ascontiguousarray(gt[order].T)
    v = np.ascontiguousarray(vt[order].T)
    smax = sv[0] if sv.size else 0.0
    good = sv > max(m, n) * _EPS * smax if smax > 0 else np.zeros(n, dtype=bool)
    u = np.zeros_like(g)
    u[:, good] = g[:, good] / sv[good]
    if not good.all():
        u = _complete_basis(u, good)
    _fix_signs(v, u)
    return u, sv, v


def jacobi_eigh(a, max_sweeps=80):
    """Eigen-decomposition of a symmetric matrix by cyclic-by-row Jacobi.

    Returns unsorted eigenvalues and the matching eigenvector columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    vt = np.eye(n)
    if n > 1:
        _cyclic_jacobi(a, vt, max_sweeps)
    return a.diagonal().copy(), np.ascontiguousarray(vt.T)


def svd(a, method="auto"):
    """Thin singular value decomposition ``a = U diag(s) V^T``.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Finite input matrix.
    method : {"auto", "jacobi", "lapack"}
        ``auto`` uses Jacobi when ``min(m, n) <= JACOBI_SVD_MAX_DIM``.

    Returns
    -------
    U : ndarray (m, r)
    s : ndarray (r,)
        Nonnegative, nonincreasing.
    V : ndarray (n, r)
        Each column has its largest-magnitude entry positive.
    """
    a = as_matrix(a, "a")
    if method == "auto":
        method = "jacobi" if min(a.shape) <= JACOBI_SVD_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_svd(a)
    if method != "lapack":
        raise InvalidInput(f"unknown svd method {method!r}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    v = vt.T.copy()
    u = u.copy()
    _fix_signs(v, u)
    return u, s, v


def sym_eig(a, method="auto", sym_tol=1e-9):
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric ``a``."""
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise InvalidInput(f"sym_eig needs a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise InvalidInput("sym_eig input is not symmetric")
    a = 0.5 * (a + a.T)
    if method == "auto":
        method = "jacobi" if n <= JACOBI_EIG_MAX_DIM else "lapack"
    if method == "jacobi":
        w, v = jacobi_eigh(a)
    elif method == "lapack":
        w, v = np.linalg.eigh(a)
    else:
        raise InvalidInput(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = np.ascontiguousarray(v[:, order])
    _fix_signs(v)
    return w, v


def pairwise_sq_dists(x, y=None, chunk_elems=1 << 22):
    """Squared Euclidean distances between rows of ``x`` (and ``y``).

    Computed from explicit coordinate differences, so the result is exactly
    symmetric with an exactly zero diagonal when ``y`` is omitted.
    """
    x = as_matrix(x, "x")
    same = y is None
    y = x if same else as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise InvalidInput(f"column mismatch: {x.shape[1]} vs {y.shape[1]}")
    n, d = x.shape
    out = np.empty((n, y.shape[0]))
    step = max(1, chunk_elems // max(1, y.shape[0] * d))
    for start in range(0, n, step):
        diff = x[start:start + step, None, :] - y[None, :, :]
        out[start:start + step] = np.einsum("ijk,ijk->ij", diff, diff) if d > 8 else np.sum(diff * diff, axis=-1)
    if same:
        np.fill_diagonal(out, 0.0)
    return out
