"""Independent reference computations used by the tests.

Each oracle takes a deliberately different route from the library code:
plain loops, characteristic polynomials, exhaustive enumeration, finite
differences.
"""

import itertools
import math

import numpy as np


def naive_sq_dists(x, y=None):
    y = x if y is None else y
    out = np.zeros((len(x), len(y)))
    for i in range(len(x)):
        for j in range(len(y)):
            s = 0.0
            for k in range(x.shape[1]):
                d = x[i, k] - y[j, k]
                s += d * d
            out[i, j] = s
    return out


def charpoly_eigvals(a):
    """Eigenvalues of a small symmetric matrix as roots of det(a - t I)."""
    roots = np.roots(np.poly(a))
    return np.sort(roots.real)[::-1]


def sort_percentile(flat, pct):
    """Linear interpolation between order statistics at rank pct/100 * (n-1)."""
    s = sorted(float(v) for v in flat)
    pos = pct / 100.0 * (len(s) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def naive_histogram(flat, n_bins):
    lo, hi = min(flat), max(flat)
    width = (hi - lo) / n_bins
    counts = [0] * n_bins
    for v in flat:
        b = int((v - lo) / width)
        counts[min(b, n_bins - 1)] += 1
    return counts


def central_diff_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def exhaustive_best_split(x, g, h, lam, min_child=0.0):
    """Best (gain, feature, left-set) over every feature and every threshold."""
    gt, ht = g.sum(), h.sum()
    parent = gt * gt / (ht + lam)
    best = (0.0, None, None)
    for f in range(x.shape[1]):
        for v in sorted(set(x[:, f])):
            left = x[:, f] < v
            if left.all() or not left.any():
                continue
            hl, hr = h[left].sum(), h[~left].sum()
            if hl < min_child or hr < min_child:
                continue
            gl, gr = g[left].sum(), g[~left].sum()
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > best[0]:
                best = (gain, f, frozenset(np.flatnonzero(left)))
    return best


def two_pass_rmse(a, b):
    n = len(a)
    s = 0.0
    for u, v in zip(a, b):
        s += (u - v) ** 2
    return math.sqrt(s / n)


def pooled_t(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    na, nb = len(a), len(b)
    sp2 = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    return (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / na + 1 / nb)), na + nb - 2


def layer_param_sum(input_dim, hidden, latent):
    """Count parameters by walking encoder then decoder widths."""
    total = 0
    widths = [input_dim] + list(hidden) + [latent] + list(reversed(hidden)) + [input_dim]
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        total += a * b + b
        is_last_encoder = i == len(hidden)
        is_output = i == len(widths) - 2
        if not (is_last_encoder or is_output):
            total += 2 * b
    return total


def all_pairs(n):
    return list(itertools.combinations(range(n), 2))
