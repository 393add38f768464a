import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from latentbench import dataio
from latentbench.cli.config import parse_config, parse_value
from latentbench.cli.main import main
from latentbench.errors import InvalidInput


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "ds"
    assert main(["synth", "--kind", "nonlinear_manifold", "--voxels", "512", "--genes", "200", "--r", "2",
                 "--noise", "0.02", "--seed", "0", "--targets", "2", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory, synth_dir):
    root = tmp_path_factory.mktemp("bench")
    ini = root / "bench.ini"
    ini.write_text(f"[bench]\ndataset = {synth_dir}\nmethods = pca, tsne\ndims = 2, 4\n"
                   "downstream_dims = 2\nworkers = 1\n"
                   "[gbm]\ndepths = 2\netas = 0.3\nrounds = 20\n[tsne]\nn_iters = 250\n")
    out = root / "out"
    assert main(["bench", str(ini), "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_files(self, synth_dir):
        for name in ("matrix.lbm", "coords.csv", "genes.txt", "latent.lbm", "target_t00.csv", "target_t01.csv",
                     "manifest.json"):
            assert (synth_dir / name).exists(), name
        assert dataio.load_matrix(synth_dir / "matrix.lbm").shape == (512, 200)
        assert json.loads((synth_dir / "manifest.json").read_text())["targets"] == ["t00", "t01"]

    def test_rerun_byte_identical(self, synth_dir, tmp_path):
        again = tmp_path / "again"
        main(["synth", "--kind", "nonlinear_manifold", "--voxels", "512", "--genes", "200", "--r", "2",
              "--noise", "0.02", "--seed", "0", "--targets", "2", "--out", str(again)])
        for name in ("matrix.lbm", "coords.csv", "latent.lbm", "target_t01.csv"):
            assert (again / name).read_bytes() == (synth_dir / name).read_bytes()

    def test_rejects_intrinsic_dim_above_genes(self, tmp_path, capsys):
        assert main(["synth", "--kind", "linear_rank_r", "--r", "300", "--genes", "200", "--out", str(tmp_path)]) == 2
        assert "--r 300" in capsys.readouterr().err

    def test_argparse_usage_exit(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--kind", "bogus", "--out", "x"])
        assert exc.value.code == 2


class TestBench:
    def test_outputs(self, bench_dir):
        for name in ("config.ini", "split_test_rows.txt", "aggregate.csv", "stats.json", "stats.csv"):
            assert (bench_dir / name).exists(), name
        assert sorted(p.name for p in (bench_dir / "cells").iterdir()) == [
            "pca_d2_synthetic.json", "pca_d4_synthetic.json", "tsne_d2_synthetic.json", "tsne_d4_synthetic.json"]

    def test_pca_error_falls_with_dim(self, bench_dir):
        d2 = json.loads((bench_dir / "cells" / "pca_d2_synthetic.json").read_text())
        d4 = json.loads((bench_dir / "cells" / "pca_d4_synthetic.json").read_text())
        assert d4["test_rmse"] < d2["test_rmse"]
        assert [t["name"] for t in d2["per_target"]] == ["t00", "t01"] and d4["per_target"] == []

    def test_tsne_unsupported(self, bench_dir):
        cell = json.loads((bench_dir / "cells" / "tsne_d2_synthetic.json").read_text())
        assert cell["status"].startswith("unsupported") and cell["test_rmse"] is None
        assert len(cell["per_target"]) == 2

    def test_latents_cover_all_voxels(self, bench_dir):
        assert dataio.load_matrix(bench_dir / "latents" / "pca_d4_synthetic.lbm").shape == (512, 4)

    def test_bad_config_is_usage_error(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[bench]\nmethods = pca\ndims = 3\nsynth_kind = linear_rank_r\n")
        assert main(["bench", str(ini), "--out", str(tmp_path / "o")]) == 2


class TestExport:
    def test_density_single_point(self, tmp_path):
        dataio.save_matrix(tmp_path / "z.lbm", np.array([[0.3, -1.2]]))
        assert main(["export", "density", "--latent", str(tmp_path / "z.lbm"), "--bins", "5",
                     "--out", str(tmp_path / "d.csv")]) == 0
        rows = list(csv.DictReader(open(tmp_path / "d.csv")))
        assert len(rows) == 25 and sum(int(r["count"]) > 0 for r in rows) == 1

    def test_annotate(self, bench_dir, synth_dir, tmp_path):
        out = tmp_path / "a.csv"
        assert main(["export", "annotate", "--latent", str(bench_dir / "latents" / "tsne_d2_synthetic.lbm"),
                     "--target", str(synth_dir / "target_t00.csv"), "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 512 and set(rows[0]) == {"dim1", "dim2", "value"}

    def test_volume(self, bench_dir, synth_dir, tmp_path):
        assert main(["export", "volume", "--latent", str(bench_dir / "latents" / "pca_d4_synthetic.lbm"),
                     "--coords", str(synth_dir / "coords.csv"), "--component", "2",
                     "--out", str(tmp_path / "vol")]) == 0
        grid, fill = dataio.import_volume(tmp_path / "vol" / "component_2.lbvol")
        occupied = grid != fill if not np.isnan(fill) else ~np.isnan(grid)
        assert occupied.sum() == 512

    def test_density_needs_two_dims(self, bench_dir, tmp_path):
        assert main(["export", "density", "--latent", str(bench_dir / "latents" / "pca_d4_synthetic.lbm"),
                     "--out", str(tmp_path / "d.csv")]) == 1

    def test_histogram(self, synth_dir, tmp_path):
        assert main(["export", "histogram", "--matrix", str(synth_dir / "matrix.lbm"), "--bins", "10",
                     "--out", str(tmp_path / "h.csv")]) == 0
        rows = list(csv.DictReader(open(tmp_path / "h.csv")))
        assert sum(int(r["count"]) for r in rows) == 512 * 200

    def test_missing_argument(self, tmp_path):
        assert main(["export", "annotate", "--latent", "x.lbm", "--out", str(tmp_path / "a.csv")]) == 2


def _write_cells(d, values):
    d.mkdir(parents=True, exist_ok=True)
    for method, vals in values.items():
        for dim, v in zip((2, 4, 8), vals):
            cell = {"method": method, "latent_dim": dim, "resolution": "synthetic", "test_rmse": v,
                    "per_target": [], "wall_time_s": 0.0, "seed": 0, "status": "ok", "notes": {}}
            (d / f"{method}_d{dim}_synthetic.json").write_text(json.dumps(cell))


class TestStats:
    def test_identical_groups(self, tmp_path):
        _write_cells(tmp_path / "cells", {"pca": [0.2, 0.2], "nmf": [0.2, 0.2]})
        assert main(["stats", "--cells", str(tmp_path / "cells"), "--out", str(tmp_path / "s")]) == 0
        rep = json.loads((tmp_path / "s" / "stats.json").read_text())
        assert rep["f_stat"] == 0.0 and rep["p_value"] == 1.0

    def test_separated_groups(self, tmp_path):
        _write_cells(tmp_path / "cells", {"pca": [0.20, 0.21, 0.19], "nmf": [0.30, 0.31, 0.29]})
        main(["stats", "--cells", str(tmp_path / "cells"), "--out", str(tmp_path / "s")])
        rep = json.loads((tmp_path / "s" / "stats.json").read_text())
        assert rep["p_value"] < 1e-3 and rep["pairwise"][0]["group_a"] == "nmf"

    def test_one_group(self, tmp_path, capsys):
        _write_cells(tmp_path / "cells", {"pca": [0.2, 0.3]})
        assert main(["stats", "--cells", str(tmp_path / "cells"), "--out", str(tmp_path / "s")]) == 1
        assert "need >= 2 groups" in capsys.readouterr().err

    def test_bench_stats_agree(self, bench_dir, tmp_path):
        assert main(["stats", "--cells", str(bench_dir / "cells"), "--metric", "r2", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "stats.json").read_text() == (bench_dir / "stats.json").read_text()


class TestConfig:
    def test_parse_value(self):
        assert parse_value("3") == 3 and parse_value("0.5") == 0.5 and parse_value("on") is True
        assert parse_value("a, 2") == ["a", 2] and parse_value("none") is None

    def test_exactly_one_data_source(self):
        with pytest.raises(InvalidInput):
            parse_config("[bench]\nmethods = pca\ndims = 2\n")
        with pytest.raises(InvalidInput):
            parse_config("[bench]\nmethods = pca\ndims = 2\ndataset = d\nsynth_kind = linear_rank_r\n")

    def test_unknown_method(self):
        with pytest.raises(InvalidInput):
            parse_config("[bench]\nmethods = lda\ndims = 2\nsynth_kind = linear_rank_r\n")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "latentbench", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "synth" in res.stdout
