"""Dataset ingestion, preprocessing, synthetic generation and export formats."""

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, MalformedFile, NonFiniteValue
from .numerics import as_matrix, make_rng

logger = logging.getLogger(__name__)

LBM_MAGIC = b"LBMX"
LBM_VERSION = 1
VOLUME_FILL = -1.0
TRAIN_FRACTION = 0.8


@dataclass
class ExpressionDataset:
    """Voxel x gene matrix with integer voxel coordinates.

    ``latent`` is only populated for synthetic data, where the generative
    coordinates are known.
    """

    values: np.ndarray
    coords: np.ndarray
    resolution: str = "synthetic"
    gene_ids: list = field(default_factory=list)
    latent: np.ndarray = None

    def __post_init__(self):
        self.values = as_matrix(self.values, "values")
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        n, g = self.values.shape
        if self.coords.shape[0] != n:
            raise InvalidInput(f"{self.coords.shape[0]} coordinates for {n} voxels")
        if len(np.unique(self.coords, axis=0)) != n:
            raise InvalidInput("voxel coordinates must be distinct")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise InvalidInput("expression values must lie in [0, 1]")
        if not self.gene_ids:
            self.gene_ids = [f"g{j:05d}" for j in range(g)]
        if len(self.gene_ids) != g:
            raise InvalidInput(f"{len(self.gene_ids)} gene ids for {g} columns")
        self.resolution = str(self.resolution)

    @property
    def n_voxels(self):
        return self.values.shape[0]

    @property
    def n_genes(self):
        return self.values.shape[1]


@dataclass
class TargetMap:
    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput(f"target {self.name!r} has non-finite values")


@dataclass(frozen=True)
class SplitIndex:
    train_rows: np.ndarray
    test_rows: np.ndarray
    seed: int


# -- matrix files ---------------------------------------------------------

def _format_for(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "lbm-binary"):
            raise InvalidInput(f"unknown matrix format {fmt!r}")
        return fmt
    return "csv" if Path(path).suffix.lower() in (".csv", ".txt") else "lbm-binary"


def save_matrix(path, a, fmt=None):
    """Write ``a`` as CSV or lbm-binary (chosen from the suffix by default)."""
    a = as_matrix(a, "matrix", allow_empty=True)
    path = Path(path)
    if _format_for(path, fmt) == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in a:
                w.writerow([repr(float(v)) for v in row])
        return path
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(LBM_MAGIC + bytes([LBM_VERSION]))
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(a.astype("<f8", copy=False).tobytes(order="C"))
    return path


def _check_finite(a, path):
    bad = ~np.isfinite(a)
    if bad.any():
        r, c = (int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteValue(f"{path}: non-finite value at row {r}, column {c}", row=r, col=c)


def _parse_float(tok):
    try:
        return float(tok)
    except ValueError:
        return None


def load_matrix(path, fmt=None):
    """Read a matrix written in CSV or lbm-binary format."""
    path = Path(path)
    if _format_for(path, fmt) == "lbm-binary":
        raw = path.read_bytes()
        header = len(LBM_MAGIC) + 1 + 16
        if len(raw) < header or raw[:4] != LBM_MAGIC:
            raise MalformedFile(f"{path}: missing LBMX magic")
        if raw[4] != LBM_VERSION:
            raise MalformedFile(f"{path}: unsupported version {raw[4]}")
        rows, cols = struct.unpack("<QQ", raw[5:header])
        payload = raw[header:]
        if len(payload) != 8 * rows * cols:
            raise MalformedFile(f"{path}: shape {rows}x{cols} needs {8 * rows * cols} bytes, found {len(payload)}")
        a = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
        _check_finite(a, path)
        return a

    with open(path, encoding="utf-8-sig", newline="") as fh:
        lines = [row for row in csv.reader(fh) if row and any(t.strip() for t in row)]
    if not lines:
        raise MalformedFile(f"{path}: empty CSV")
    if any(_parse_float(t) is None for t in lines[0]):
        lines = lines[1:]  # header row
    if not lines:
        raise MalformedFile(f"{path}: header without data")
    width = len(lines[0])
    for i, row in enumerate(lines):
        if len(row) != width:
            raise MalformedFile(f"{path}: row {i} has {len(row)} fields, expected {width}")
    try:
        data = np.array(lines, dtype=str).astype(np.float64)
    except ValueError:
        for i, row in enumerate(lines):
            for j, tok in enumerate(row):
                if _parse_float(tok) is None:
                    raise MalformedFile(f"{path}: unparseable value {tok!r} at row {i}, column {j}") from None
        raise
    _check_finite(data, path)
    return data


def save_coords(path, coords):
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "k"])
        w.writerows(coords.tolist())
    return Path(path)


def load_coords(path):
    a = load_matrix(path, "csv")
    if a.shape[1] != 3:
        raise MalformedFile(f"{path}: coordinates need 3 columns, found {a.shape[1]}")
    if not np.all(a == np.round(a)):
        raise MalformedFile(f"{path}: coordinates must be integers")
    return a.astype(np.int64)


def save_target_map(path, target):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{target.name}\n")
        for v in target.values:
            fh.write(f"{float(v)!r}\n")
    return Path(path)


def load_target_map(path, name=None):
    path = Path(path)
    with open(path, encoding="utf-8-sig") as fh:
        first = fh.readline().strip()
    a = load_matrix(path, "csv")
    if a.shape[1] != 1:
        raise MalformedFile(f"{path}: target map needs one column, found {a.shape[1]}")
    if name is None:
        name = first if _parse_float(first) is None else path.stem
    return TargetMap(name, a[:, 0])


def save_dataset(directory, dataset, targets=()):
    """Write a dataset as ``matrix.lbm``, ``coords.csv`` and ``genes.txt``.

    Synthetic latents and targets are written next to it when present.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "matrix": save_matrix(d / "matrix.lbm", dataset.values),
        "coords": save_coords(d / "coords.csv", dataset.coords),
    }
    (d / "genes.txt").write_text("\n".join(dataset.gene_ids) + "\n", encoding="utf-8")
    paths["genes"] = d / "genes.txt"
    if dataset.latent is not None:
        paths["latent"] = save_matrix(d / "latent.lbm", dataset.latent)
    for t in targets:
        paths[f"target:{t.name}"] = save_target_map(d / f"target_{t.name}.csv", t)
    return paths


def load_dataset(matrix_path, coords_path, resolution="unknown", genes_path=None):
    values = load_matrix(matrix_path)
    coords = load_coords(coords_path)
    genes = []
    if genes_path is not None and Path(genes_path).exists():
        genes = [g for g in Path(genes_path).read_text(encoding="utf-8").split("\n") if g]
    return ExpressionDataset(values, coords, resolution, genes)


# -- preprocessing ---------------------------------------------------------

def clamp_percentiles(x, lo_pct=0.01, hi_pct=99.9):
    """Clip every entry to the global [lo_pct, hi_pct] percentile range.

    Percentiles use linear interpolation between order statistics.
    """
    x = as_matrix(x, "x")
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise InvalidInput(f"need 0 <= lo_pct < hi_pct <= 100, got {lo_pct}, {hi_pct}")
    flat = x.ravel()
    if flat.min() == flat.max():
        return x.copy()
    q_lo, q_hi = np.percentile(flat, [lo_pct, hi_pct])
    return np.clip(x, q_lo, q_hi)


def split(n, seed):
    """Random 80/20 partition of ``range(n)``, shared by every method."""
    n = int(n)
    if n < 5:
        raise InvalidInput(f"need at least 5 rows to split, got {n}")
    n_train = int(math.floor(TRAIN_FRACTION * n + 0.5))
    perm = make_rng(seed, "split").permutation(n)
    return SplitIndex(np.sort(perm[:n_train]), np.sort(perm[n_train:]), int(seed))


# -- synthetic data -----------------------------------------------------------

def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _manifold_features(z, rng):
    # fixed smooth nonlinearity: random-frequency sines plus pairwise products
    n, r = z.shape
    n_sin = 5 * r
    freq = rng.normal(0.0, 1.2, size=(r, n_sin))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_sin)
    feats = [np.sin(z @ freq + phase)]
    pairs = [(a, b) for a in range(r) for b in range(a, r)]
    for a, b in pairs:
        feats.append((z[:, a] * z[:, b])[:, None])
    f = np.hstack(feats)
    return (f - f.mean(axis=0)) / f.std(axis=0)


def synth_generative(kind, n_voxels, n_genes, intrinsic_dim, seed, gain=1.5):
    """True latent and the pre-squash data matrix of a synthetic set."""
    if kind not in ("linear_rank_r", "nonlinear_manifold"):
        raise InvalidInput(f"unknown synthetic kind {kind!r}")
    if not 1 <= intrinsic_dim < n_genes:
        raise InvalidInput(f"intrinsic_dim must satisfy 1 <= r < n_genes, got r={intrinsic_dim}, genes={n_genes}")
    if n_voxels < 1:
        raise InvalidInput("n_voxels must be positive")
    rng = make_rng(seed, kind, "generative")
    z = rng.standard_normal((n_voxels, intrinsic_dim))
    feats = z if kind == "linear_rank_r" else _manifold_features(z, rng)
    loadings = rng.standard_normal((feats.shape[1], n_genes)) * (gain / np.sqrt(feats.shape[1]))
    return z, feats @ loadings


def blob_coords(n_voxels):
    """The ``n_voxels`` integer grid points closest to a cube centre."""
    side = int(math.ceil((6.0 * n_voxels / math.pi) ** (1.0 / 3.0))) + 3
    g = np.indices((side, side, side)).reshape(3, -1).T
    centre = (side - 1) / 2.0
    d2 = np.sum((g - centre) ** 2, axis=1)
    order = np.lexsort((g[:, 2], g[:, 1], g[:, 0], d2))
    pts = g[order[:n_voxels]]
    return pts - pts.min(axis=0)


def synth_dataset(kind, n_voxels, n_genes, intrinsic_dim, noise_sd=0.0, seed=0, resolution="synthetic"):
    """Generate an expression-like dataset with known low-dimensional structure.

    ``linear_rank_r`` squashes a rank-r linear image of a Gaussian latent
    through a sigmoid; ``nonlinear_manifold`` first passes the latent through
    sine and product features. Gaussian noise with ``noise_sd`` is added and
    the whole matrix is affinely rescaled into [0, 1].
    """
    if noise_sd < 0:
        raise InvalidInput("noise_sd must be nonnegative")
    z, pre = synth_generative(kind, n_voxels, n_genes, intrinsic_dim, seed)
    values = _sigmoid(pre)
    if noise_sd > 0:
        values = values + noise_sd * make_rng(seed, kind, "noise").standard_normal(values.shape)
    lo, hi = values.min(), values.max()
    values = (values - lo) / (hi - lo) if hi > lo else np.full_like(values, 0.5)
    return ExpressionDataset(values, blob_coords(n_voxels), resolution, latent=z)


def synth_targets(latent, n_targets, seed=0, noise_sd=0.0):
    """Smooth scalar maps of the generative latent, one per target."""
    z = np.asarray(latent, dtype=np.float64)
    r = z.shape[1]
    rng = make_rng(seed, "targets")
    out = []
    for t in range(n_targets):
        w = rng.normal(0.0, 1.0, size=r)
        u = rng.normal(0.0, 1.0, size=r)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        vals = np.sin(z @ w + phase) + 0.5 * np.tanh(z @ u)
        if noise_sd > 0:
            vals = vals + noise_sd * rng.standard_normal(len(vals))
        out.append(TargetMap(f"t{t:02d}", vals))
    return out


# -- exports ------------------------------------------------------------------

def export_volume(coords, values, path, fill=VOLUME_FILL):
    """Write per-voxel values onto the bounding grid in LBVOL text format.

    Cells with no voxel hold ``fill``. Values are written with ``repr`` so
    re-import is exact.
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) != len(coords):
        raise InvalidInput(f"{len(values)} values for {len(coords)} voxels")
    if len(coords) and coords.min() < 0:
        raise InvalidInput("volume export needs nonnegative coordinates")
    nx, ny, nz = (coords.max(axis=0) + 1) if len(coords) else (0, 0, 0)
    grid = np.full((nz, ny, nx), float(fill))
    grid[coords[:, 2], coords[:, 1], coords[:, 0]] = values
    fill_txt = f"{fill:g}"
    buf = io.StringIO()
    buf.write(f"LBVOL {nx} {ny} {nz} fill={fill_txt}\n")
    for row in grid.reshape(-1, nx):
        buf.write(" ".join(repr(float(v)) for v in row))
        buf.write("\n")
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write volume {path}: {exc}") from exc
    return Path(path)


def import_volume(path):
    """Read an LBVOL file; returns (grid indexed [i, j, k], fill value)."""
    text = Path(path).read_text(encoding="utf-8").split("\n", 1)
    head = text[0].split()
    if len(head) != 5 or head[0] != "LBVOL" or not head[4].startswith("fill="):
        raise MalformedFile(f"{path}: bad LBVOL header {text[0]!r}")
    nx, ny, nz = (int(v) for v in head[1:4])
    fill = float(head[4][5:])
    body = np.array(text[1].split(), dtype=np.float64) if len(text) > 1 else np.empty(0)
    if body.size != nx * ny * nz:
        raise MalformedFile(f"{path}: expected {nx * ny * nz} values, found {body.size}")
    return body.reshape(nz, ny, nx).transpose(2, 1, 0).copy(), fill


def histogram(x, n_bins):
    """Equal-width histogram over [min, max] of all entries."""
    if n_bins < 1:
        raise InvalidInput("n_bins must be >= 1")
    flat = np.asarray(x, dtype=np.float64).ravel()
    lo, hi = float(flat.min()), float(flat.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(flat, bins=int(n_bins), range=(lo, hi))
    return edges, counts
