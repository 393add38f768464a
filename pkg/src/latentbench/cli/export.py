"""Plot-ready data files: density grids, annotated scatters, volumes, histograms."""

import csv
from pathlib import Path

import numpy as np

from .. import dataio
from ..errors import InvalidInput


def _require_2d(latent, what):
    if latent.ndim != 2 or latent.shape[1] != 2:
        raise InvalidInput(f"{what} needs a 2-column latent, got shape {latent.shape}")


def density_grid(latent, n_bins=50):
    """Counts of latent points on an ``n_bins x n_bins`` grid over their bounding box."""
    latent = np.asarray(latent, dtype=np.float64)
    _require_2d(latent, "density")
    if n_bins < 1:
        raise InvalidInput("n_bins must be >= 1")
    ranges = []
    for c in range(2):
        lo, hi = float(latent[:, c].min()), float(latent[:, c].max())
        ranges.append((lo - 0.5, hi + 0.5) if lo == hi else (lo, hi))
    counts, xe, ye = np.histogram2d(latent[:, 0], latent[:, 1], bins=n_bins, range=ranges)
    return counts.astype(np.int64), xe, ye


def write_density(latent, path, n_bins=50):
    counts, xe, ye = density_grid(latent, n_bins)
    xc, yc = 0.5 * (xe[:-1] + xe[1:]), 0.5 * (ye[:-1] + ye[1:])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_bin", "y_bin", "x_center", "y_center", "count"])
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                w.writerow([i, j, repr(float(xc[i])), repr(float(yc[j])), int(counts[i, j])])
    return Path(path)


def write_annotate(latent, values, path):
    latent = np.asarray(latent, dtype=np.float64)
    _require_2d(latent, "annotate")
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) != latent.shape[0]:
        raise InvalidInput(f"{len(values)} values for {latent.shape[0]} latent rows")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim1", "dim2", "value"])
        for (a, b), v in zip(latent, values):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
    return Path(path)


def write_volumes(latent, coords, out_dir, components=None):
    """One LBVOL file per latent component (1-based file names)."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape[0] != len(coords):
        raise InvalidInput(f"{latent.shape[0]} latent rows for {len(coords)} voxels")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comps = range(1, latent.shape[1] + 1) if components is None else components
    paths = []
    for c in comps:
        if not 1 <= c <= latent.shape[1]:
            raise InvalidInput(f"component {c} outside 1..{latent.shape[1]}")
        paths.append(dataio.export_volume(coords, latent[:, c - 1], out / f"component_{c}.lbvol"))
    return paths


def write_histogram(x, path, n_bins=100):
    edges, counts = dataio.histogram(x, n_bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    return Path(path)
