"""INI benchmark configuration.

Example::

    [bench]
    synth_kind = nonlinear_manifold
    synth_voxels = 512
    synth_genes = 200
    synth_r = 2
    synth_noise = 0.02
    n_targets = 3
    methods = pca, kpca, nmf, tsne, umap, ae
    dims = 2, 4
    split_seed = 0
    seed = 0

    [ae]
    hidden = 500, 250, 125

    [gbm]
    depths = 2, 4, 6

Either ``dataset`` (a directory written by ``latentbench synth`` or with the
same file names) or the ``synth_*`` keys define the data. Every other
section holds per-method parameters passed straight to the fitter.
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..embedders.base import METHODS, LATENT_DIMS
from ..errors import InvalidInput

ALL_METHODS = METHODS + ("ae",)
SYNTH_KINDS = ("linear_rank_r", "nonlinear_manifold")


def parse_value(text):
    """'3' -> 3, '0.5' -> 0.5, 'true' -> True, 'none' -> None, 'a, b' -> list."""
    s = text.strip()
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def _as_list(v):
    if v is None:
        return []
    return v if isinstance(v, list) else [v]


@dataclass
class BenchConfig:
    methods: list
    dims: list
    dataset: str = None
    synth: dict = None
    target_paths: list = field(default_factory=list)
    n_targets: int = 0
    target_noise: float = 0.0
    split_seed: int = 0
    seed: int = 0
    resolution: str = "synthetic"
    downstream: bool = True
    downstream_dims: list = field(default_factory=lambda: [2])
    clamp: bool = False
    clamp_low: float = 0.01
    clamp_high: float = 99.9
    stats_metric: str = "auto"
    workers: int = None
    method_params: dict = field(default_factory=dict)
    gbm: dict = field(default_factory=dict)
    ae: dict = field(default_factory=dict)
    source_text: str = ""

    def validate(self):
        if not self.methods:
            raise InvalidInput("config: methods must be nonempty")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise InvalidInput(f"config: unknown methods {bad}; choose from {list(ALL_METHODS)}")
        if not self.dims:
            raise InvalidInput("config: dims must be nonempty")
        bad = [d for d in self.dims if d not in LATENT_DIMS]
        if bad:
            raise InvalidInput(f"config: dims {bad} not in {list(LATENT_DIMS)}")
        if (self.dataset is None) == (self.synth is None):
            raise InvalidInput("config: give exactly one of 'dataset' or the synth_* keys")
        if self.dataset is not None and not Path(self.dataset).is_dir():
            raise InvalidInput(f"config: dataset directory {self.dataset} does not exist")
        for p in self.target_paths:
            if not Path(p).is_file():
                raise InvalidInput(f"config: target map {p} does not exist")
        if self.synth is not None:
            s = self.synth
            if s["kind"] not in SYNTH_KINDS:
                raise InvalidInput(f"config: synth_kind must be one of {SYNTH_KINDS}")
            if not 1 <= s["r"] < s["genes"]:
                raise InvalidInput("config: need 1 <= synth_r < synth_genes")
        if self.stats_metric not in ("auto", "rmse", "r2"):
            raise InvalidInput("config: stats_metric must be auto, rmse or r2")
        if self.workers is not None and self.workers < 1:
            raise InvalidInput("config: workers must be >= 1")
        return self

    def n_workers(self):
        return self.workers or os.cpu_count() or 1


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidInput(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    return parse_config(text, base_dir=path.parent)


def parse_config(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidInput(f"config: {exc}") from exc
    if "bench" not in cp:
        raise InvalidInput("config: missing [bench] section")
    b = {k: parse_value(v) for k, v in cp["bench"].items()}
    base = Path(base_dir)

    def resolve(p):
        p = Path(str(p))
        return str(p if p.is_absolute() else base / p)

    synth = None
    if "synth_kind" in b:
        synth = {
            "kind": b.pop("synth_kind"),
            "voxels": int(b.pop("synth_voxels", 512)),
            "genes": int(b.pop("synth_genes", 200)),
            "r": int(b.pop("synth_r", 2)),
            "noise": float(b.pop("synth_noise", 0.0)),
            "seed": int(b.pop("synth_seed", 0)),
        }
    known = {"methods", "dims", "dataset", "targets", "n_targets", "target_noise", "split_seed", "seed",
             "resolution", "downstream", "downstream_dims", "clamp", "clamp_low", "clamp_high",
             "stats_metric", "workers"}
    extra = set(b) - known
    if extra:
        raise InvalidInput(f"config: unknown [bench] keys {sorted(extra)}")
    cfg = BenchConfig(
        methods=[str(m) for m in _as_list(b.get("methods"))],
        dims=[int(d) for d in _as_list(b.get("dims"))],
        dataset=resolve(b["dataset"]) if b.get("dataset") else None,
        synth=synth,
        target_paths=[resolve(p) for p in _as_list(b.get("targets"))],
        n_targets=int(b.get("n_targets", 0) or 0),
        target_noise=float(b.get("target_noise", 0.0) or 0.0),
        split_seed=int(b.get("split_seed", 0)),
        seed=int(b.get("seed", 0)),
        resolution=str(b.get("resolution", "synthetic")),
        downstream=bool(b.get("downstream", True)),
        downstream_dims=[int(d) for d in _as_list(b.get("downstream_dims", [2]))],
        clamp=bool(b.get("clamp", False)),
        clamp_low=float(b.get("clamp_low", 0.01)),
        clamp_high=float(b.get("clamp_high", 99.9)),
        stats_metric=str(b.get("stats_metric", "auto")),
        workers=b.get("workers"),
        source_text=text,
    )
    for section in cp.sections():
        params = {k: parse_value(v) for k, v in cp[section].items()}
        if section == "gbm":
            cfg.gbm = params
        elif section == "ae":
            cfg.ae = params
        elif section in METHODS:
            cfg.method_params[section] = params
        elif section != "bench":
            raise InvalidInput(f"config: unknown section [{section}]")
    return cfg.validate()
