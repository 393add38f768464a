"""Benchmark orchestration: one cell per (method, latent_dim)."""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import dataio
from ..autoencoder import AeArchitecture, AeTrainConfig, ae_train
from ..boosting import GbmConfig, default_grid, gbm_grid_search, gbm_predict
from ..embedders import EmbedderSpec, fit_embedder
from ..errors import InvalidInput, LatentBenchError, UnsupportedOperation
from ..evalstats import (BenchCell, aggregate, aggregate_csv, cell_observations, compare_groups, r2,
                         rmse)
from ..numerics import derive_seed

log = logging.getLogger("latentbench.bench")

_SHARED = {}


def build_grid(params):
    """GBM grid from ``[gbm]`` keys ``depths``, ``etas``, ``rounds``, ``lambdas``; default grid otherwise."""
    keys = ("depths", "etas", "rounds", "lambdas", "min_child_weight")
    if not any(k in params for k in keys):
        return default_grid()

    def lst(key, default):
        v = params.get(key, default)
        return v if isinstance(v, list) else [v]

    mcw = float(params.get("min_child_weight", 1.0))
    return [GbmConfig(int(r), int(d), float(eta), float(lam), mcw)
            for d in lst("depths", [2, 4, 6]) for eta in lst("etas", [0.05, 0.1, 0.3])
            for r in lst("rounds", [50, 200]) for lam in lst("lambdas", [1.0])]


def ae_settings(params, input_dim, latent_dim, seed):
    params = dict(params)
    hidden = params.pop("hidden", [500, 250, 125])
    hidden = tuple(int(h) for h in (hidden if isinstance(hidden, list) else [hidden]))
    fields = AeTrainConfig.__dataclass_fields__
    unknown = set(params) - set(fields)
    if unknown:
        raise InvalidInput(f"[ae] unknown keys {sorted(unknown)}")
    params["seed"] = seed
    return AeArchitecture(input_dim, hidden, latent_dim), AeTrainConfig(**params)


def load_bench_data(cfg):
    """Dataset and target maps described by ``cfg``."""
    if cfg.synth is not None:
        s = cfg.synth
        ds = dataio.synth_dataset(s["kind"], s["voxels"], s["genes"], s["r"], s["noise"], s["seed"],
                                  cfg.resolution)
        targets = dataio.synth_targets(ds.latent, cfg.n_targets, s["seed"], cfg.target_noise)
    else:
        d = Path(cfg.dataset)
        ds = dataio.load_dataset(d / "matrix.lbm", d / "coords.csv", cfg.resolution, d / "genes.txt")
        targets = [dataio.load_target_map(p) for p in sorted(d.glob("target_*.csv"))]
    targets = list(targets) + [dataio.load_target_map(p) for p in cfg.target_paths]
    for t in targets:
        if len(t.values) != ds.n_voxels:
            raise InvalidInput(f"target {t.name} has {len(t.values)} values for {ds.n_voxels} voxels")
    if cfg.clamp:
        ds.values = dataio.clamp_percentiles(ds.values, cfg.clamp_low, cfg.clamp_high)
    return ds, targets


def _init_worker(shared):
    _SHARED.clear()
    _SHARED.update(shared)


def _fit_method(method, dim, x_train, cfg_params, seed):
    if method == "ae":
        arch, tcfg = ae_settings(cfg_params.get("ae", {}), x_train.shape[1], dim, seed)
        model, trace = ae_train(x_train, arch, tcfg)
        return model, {"best_epoch": trace.best_epoch}
    spec = EmbedderSpec(method, dim, dict(cfg_params.get(method, {})), seed)
    return fit_embedder(spec, x_train), {}


def run_cell(method, dim):
    """Fit, score reconstruction, and run downstream prediction for one cell."""
    sh = _SHARED
    x, split, targets = sh["values"], sh["split"], sh["targets"]
    seed = derive_seed(sh["seed"], method, dim)
    x_train, x_test = x[split.train_rows], x[split.test_rows]
    t0 = time.perf_counter()
    cell = BenchCell(method, dim, sh["resolution"], seed=seed)
    try:
        model, notes = _fit_method(method, dim, x_train, sh["params"], seed)
        cell.notes.update(notes)
        z_train = model.transform(x_train)
        z_test = model.transform(x_test)
        if model.can_inverse:
            cell.test_rmse = rmse(x_test, model.inverse(z_test))
        else:
            try:
                model.inverse(z_test)
            except UnsupportedOperation as exc:
                cell.status = f"unsupported: {exc}"
        if sh["downstream"] and dim in sh["downstream_dims"]:
            for t in targets:
                y_tr, y_te = t.values[split.train_rows], t.values[split.test_rows]
                res = gbm_grid_search(z_train, y_tr, sh["grid"], folds=sh["gbm_folds"],
                                      seed=derive_seed(seed, "gbm", t.name))
                pred = gbm_predict(res.model, z_test)
                cell.per_target.append({"name": t.name, "rmse": rmse(y_te, pred), "r2": r2(y_te, pred),
                                        "config": res.best_config.to_dict()})
        latent = np.empty((x.shape[0], dim))
        latent[split.train_rows] = z_train
        latent[split.test_rows] = z_test
    except (LatentBenchError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        cell.status = f"failed: {type(exc).__name__}: {exc}"
        latent = None
    cell.wall_time_s = time.perf_counter() - t0
    return cell, latent


def _run_job(job):
    return run_cell(*job)


def choose_metric(cells, metric):
    if metric != "auto":
        return metric
    obs = cell_observations(cells, "rmse")
    if len(obs) >= 2 and all(len(v) >= 2 for v in obs.values()):
        return "rmse"
    return "r2"


def write_stats(cells, metric, out_dir):
    metric = choose_metric(cells, metric)
    obs = cell_observations(cells, metric)
    try:
        report = compare_groups(obs, metric)
    except InvalidInput as exc:
        (out_dir / "stats.json").write_text(json.dumps({"metric": metric, "error": str(exc)}, indent=2) + "\n")
        log.warning("stats skipped: %s", exc)
        return None
    (out_dir / "stats.json").write_text(report.to_json() + "\n")
    (out_dir / "stats.csv").write_text(report.to_csv())
    return report


def run_bench(cfg, out_dir, workers=None):
    """Run every cell of ``cfg`` and write reports under ``out_dir``.

    Returns the list of cells in (method, dim) config order.
    """
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    (out / "latents").mkdir(exist_ok=True)
    (out / "config.ini").write_text(cfg.source_text, encoding="utf-8")
    ds, targets = load_bench_data(cfg)
    split = dataio.split(ds.n_voxels, cfg.split_seed)
    params = dict(cfg.method_params)
    params["ae"] = cfg.ae
    shared = {
        "values": ds.values, "split": split, "targets": targets, "seed": cfg.seed,
        "resolution": cfg.resolution, "params": params, "downstream": cfg.downstream and bool(targets),
        "downstream_dims": cfg.downstream_dims, "grid": build_grid(cfg.gbm),
        "gbm_folds": int(cfg.gbm.get("folds", 5)),
    }
    np.savetxt(out / "split_test_rows.txt", split.test_rows, fmt="%d")
    jobs = [(m, d) for m in cfg.methods for d in cfg.dims]
    n_workers = min(workers or cfg.n_workers(), len(jobs))
    start = time.perf_counter()
    results = [None] * len(jobs)

    def record(i, res):
        results[i] = res
        cell = res[0]
        done = sum(r is not None for r in results)
        log.info("cell %s %s in %.1fs [%d/%d, elapsed %.1fs]", cell.key, cell.status, cell.wall_time_s,
                 done, len(jobs), time.perf_counter() - start)

    if n_workers <= 1:
        _init_worker(shared)
        for i, job in enumerate(jobs):
            record(i, run_cell(*job))
    else:
        with ProcessPoolExecutor(n_workers, initializer=_init_worker, initargs=(shared,)) as pool:
            for i, res in enumerate(pool.map(_run_job, jobs)):
                record(i, res)
    cells = []
    for cell, latent in results:
        (out / "cells" / f"{cell.key}.json").write_text(cell.to_json() + "\n")
        if latent is not None:
            dataio.save_matrix(out / "latents" / f"{cell.key}.lbm", latent)
        cells.append(cell)
    (out / "aggregate.csv").write_text(aggregate_csv(aggregate(cells)))
    write_stats(cells, cfg.stats_metric, out)
    return cells


def load_cells(cells_dir):
    paths = sorted(Path(cells_dir).glob("*.json"))
    if not paths:
        raise InvalidInput(f"no cell records in {cells_dir}")
    return [BenchCell.from_dict(json.loads(p.read_text())) for p in paths]
