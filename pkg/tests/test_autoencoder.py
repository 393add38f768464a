import json
import math
from pathlib import Path

import numpy as np
import pytest

from latentbench.autoencoder import (Adam, AeArchitecture, AeTrainConfig, ae_backward, ae_decode, ae_embed,
                                     ae_forward, ae_loss, ae_param_count, ae_train, init_model,
                                     load_checkpoint, save_checkpoint)
from latentbench.autoencoder.network import BN_EPS, l2_penalty
from latentbench.autoencoder.training import fold_indices, minibatches
from latentbench.embedders import pca_fit
from latentbench.errors import InvalidInput, TrainingFailure
from latentbench.numerics import make_rng

from oracles import central_diff_grad, layer_param_sum, max_rel_err

FIXTURES = Path(__file__).parent / "fixtures"
TINY = AeArchitecture(4, (3,), 2)


def _tiny_model(seed=0):
    m = init_model(TINY, seed)
    rng = make_rng(seed, "tiny-bn")
    for k in m.params:
        if k.endswith("gamma"):
            m.params[k] = rng.uniform(0.5, 1.5, m.params[k].shape)
        elif k.endswith("beta"):
            m.params[k] = rng.uniform(-0.5, 0.5, m.params[k].shape)
    return m


class TestParamCount:
    def test_reference(self):
        assert ae_param_count(AeArchitecture(15633, (500, 250, 125), 2)) == 15_966_885

    def test_degenerate(self):
        assert ae_param_count(AeArchitecture(4, (), 2)) == 22

    @pytest.mark.parametrize("latent", [2, 8, 128])
    def test_summation_oracle(self, latent):
        assert ae_param_count(AeArchitecture(200, (500, 250, 125), latent)) == layer_param_sum(200, (500, 250, 125), latent)

    def test_matches_stored_parameters(self):
        m = init_model(AeArchitecture(30, (8, 4), 3), 0)
        assert sum(v.size for v in m.params.values()) == ae_param_count(m.arch)


def _manual_forward(m, x, mode):
    """Element-by-element evaluation of linear -> BN -> ELU ... -> sigmoid."""
    p, run = m.params, m.running
    h = [list(row) for row in x]
    for name, fan_in, fan_out, bn, act in TINY.layers():
        w, b = p[f"{name}.W"], p[f"{name}.b"]
        a = [[b[j] + sum(h[i][q] * w[q, j] for q in range(fan_in)) for j in range(fan_out)] for i in range(len(h))]
        if bn:
            for j in range(fan_out):
                col = [a[i][j] for i in range(len(a))]
                if mode == "train":
                    mu = sum(col) / len(col)
                    var = sum((c - mu) ** 2 for c in col) / len(col)
                else:
                    mu, var = run[f"{name}.mean"][j], run[f"{name}.var"][j]
                for i in range(len(a)):
                    a[i][j] = p[f"{name}.gamma"][j] * (a[i][j] - mu) / math.sqrt(var + BN_EPS) + p[f"{name}.beta"][j]
        if act == "elu":
            a = [[v if v > 0 else math.exp(v) - 1 for v in row] for row in a]
        elif act == "sigmoid":
            a = [[1 / (1 + math.exp(-v)) for v in row] for row in a]
        h = a
        if name == f"enc{len(TINY.hidden)}":
            z = [row[:] for row in h]
    return np.array(h), np.array(z)


class TestForward:
    def test_matches_manual_oracle_train(self):
        m = _tiny_model(1)
        x = make_rng(2, "fx").uniform(size=(5, 4))
        r, z = ae_forward(m, x, "train", update_running=False)
        r0, z0 = _manual_forward(m, x, "train")
        assert np.abs(r - r0).max() < 1e-12 and np.abs(z - z0).max() < 1e-12

    def test_matches_manual_oracle_eval(self):
        m = _tiny_model(3)
        rng = make_rng(3, "stats")
        for k in m.running:
            m.running[k] = rng.uniform(0.2, 1.0, m.running[k].shape)
        x = make_rng(4, "fx").uniform(size=(3, 4))
        r, z = ae_forward(m, x, "eval")
        r0, z0 = _manual_forward(m, x, "eval")
        assert np.abs(r - r0).max() < 1e-12 and np.abs(z - z0).max() < 1e-12

    def test_eval_deterministic_and_batch_independent(self):
        m = _tiny_model(5)
        x = make_rng(5, "fx").uniform(size=(7, 4))
        a, za = ae_forward(m, x, "eval")
        b, _ = ae_forward(m, x, "eval")
        assert a.tobytes() == b.tobytes()
        for i in range(7):
            _, zi = ae_forward(m, x[i:i + 1], "eval")
            assert np.abs(zi[0] - za[i]).max() < 1e-12

    def test_output_strictly_inside_unit_interval(self):
        m = _tiny_model(6)
        m.params["dec1.W"] *= 1e4
        r, _ = ae_forward(m, make_rng(6, "fx").uniform(-50, 50, size=(6, 4)), "eval")
        assert r.min() > 0 and r.max() < 1

    def test_batch_of_one_rejected_in_train_mode(self):
        with pytest.raises(InvalidInput):
            ae_forward(_tiny_model(), np.ones((1, 4)), "train")

    def test_running_stats_update(self):
        m = _tiny_model(7)
        x = make_rng(7, "fx").uniform(size=(6, 4))
        a = x @ m.params["enc0.W"] + m.params["enc0.b"]
        ae_forward(m, x, "train", update_running=True)
        assert np.allclose(m.running["enc0.mean"], 0.1 * a.mean(axis=0))
        assert np.allclose(m.running["enc0.var"], 0.9 + 0.1 * a.var(axis=0, ddof=1))

    def test_width_checked(self):
        with pytest.raises(InvalidInput):
            ae_forward(_tiny_model(), np.ones((3, 5)), "eval")


def _cancelled_by_bn(m, key):
    # a bias feeding batch norm (directly, or through a linear activation) is removed by
    # the mean subtraction; its true gradient is 0
    name, kind = key.split(".")
    layers = m.arch.layers()
    for i, (lname, _, _, bn, act) in enumerate(layers):
        if lname == name:
            nxt_bn = i + 1 < len(layers) and layers[i + 1][3]
            return kind == "b" and (bn or (act == "linear" and nxt_bn))
    return False


class TestBackward:
    @pytest.mark.parametrize("lam", [0.0, 1e-2])
    def test_finite_differences_all_parameters(self, lam):
        m = _tiny_model(8)
        x = make_rng(8, "gx").uniform(size=(4, 4))
        _, grads = ae_backward(m, x, lam)
        worst = 0.0
        for k, p in m.params.items():
            num = central_diff_grad(lambda _: ae_loss(m, x, lam), p, h=1e-5)
            if _cancelled_by_bn(m, k):
                assert np.abs(grads[k]).max() < 1e-15 and np.abs(num).max() < 1e-10
            else:
                worst = max(worst, max_rel_err(grads[k], num))
        assert worst < 1e-5

    def test_composed_with_deeper_net(self):
        m = init_model(AeArchitecture(6, (5, 4), 3), 1)
        x = make_rng(9, "gx").uniform(size=(5, 6))
        _, grads = ae_backward(m, x, 1e-3)
        for k, p in m.params.items():
            num = central_diff_grad(lambda _: ae_loss(m, x, 1e-3), p, h=1e-5)
            if _cancelled_by_bn(m, k):
                assert np.abs(num).max() < 1e-10, k
            else:
                assert max_rel_err(grads[k], num) < 1e-5, k

    def test_l2_term_alone(self):
        m = _tiny_model(10)
        x = make_rng(10, "gx").uniform(size=(4, 4))
        _, g0 = ae_backward(m, x, 0.0)
        _, g1 = ae_backward(m, x, 0.3)
        for name in m.weight_names():
            assert np.allclose(g1[name] - g0[name], 2 * 0.3 * m.params[name], atol=1e-15)
        assert abs(l2_penalty(m, 0.3) - 0.3 * sum((m.params[w] ** 2).sum() for w in m.weight_names())) < 1e-12

    def test_zero_residual_gives_zero_output_weight_gradient(self):
        # decoder output bias chosen so the output equals x exactly; all weights into it zero
        m = init_model(AeArchitecture(3, (), 2), 0)
        x = np.array([[0.2, 0.5, 0.7], [0.2, 0.5, 0.7]])
        m.params["dec0.W"][:] = 0.0
        m.params["dec0.b"][:] = np.log(x[0] / (1 - x[0]))
        _, grads = ae_backward(m, x, 0.0)
        assert np.abs(grads["dec0.W"]).max() < 1e-15


class TestAdam:
    @pytest.mark.parametrize("g", [1e-4, 0.3, -7.0, 1e4])
    def test_first_step_is_lr(self, g):
        p = {"w": np.array([1.0])}
        opt = Adam(p, lr=1e-3)
        opt.step(p, {"w": np.array([g])})
        assert abs(abs(1.0 - p["w"][0]) - 1e-3) < 1e-3 * 1e-3 + 1e-12
        assert np.sign(1.0 - p["w"][0]) == np.sign(g)

    def test_matches_reference_recursion(self):
        p = {"w": np.array([0.5, -0.2])}
        opt = Adam(p, lr=0.01)
        m = v = np.zeros(2)
        w = p["w"].copy()
        for t in range(1, 6):
            g = np.array([0.1 * t, -0.3])
            opt.step(p, {"w": g})
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert np.allclose(p["w"], w, rtol=0, atol=1e-15)


class TestTrainingPlumbing:
    def test_minibatches_cover_rows_without_singletons(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 127, 128, 129, 257, 300):
            batches = minibatches(n, 128, rng)
            assert sorted(np.concatenate(batches).tolist()) == list(range(n))
            if n > 1:
                assert all(len(b) >= 2 for b in batches)

    def test_folds_partition(self):
        f = fold_indices(23, 5, 1)
        assert sorted(np.concatenate(f).tolist()) == list(range(23))

    def test_config_validation(self):
        with pytest.raises(InvalidInput):
            AeTrainConfig(learning_rate=0)
        with pytest.raises(InvalidInput):
            AeTrainConfig(folds=1)
        with pytest.raises(InvalidInput):
            AeTrainConfig(batch_size=0)

    def test_too_few_rows(self):
        with pytest.raises(InvalidInput):
            ae_train(np.full((9, 4), 0.5), TINY, AeTrainConfig(folds=5))

    def test_divergence_reports_epoch_and_fold(self):
        cfg = AeTrainConfig(learning_rate=1e300, max_epochs=5, early_stop_min_epoch=0, patience=2, folds=2)
        x = make_rng(0, "div").uniform(size=(20, 4))
        with pytest.raises(TrainingFailure) as exc:
            with np.errstate(all="ignore"):
                ae_train(x, TINY, cfg)
        assert exc.value.epoch is not None and exc.value.fold == 0

    def test_early_stop_respects_min_epoch(self):
        x = make_rng(1, "es").uniform(size=(40, 4))
        cfg = AeTrainConfig(max_epochs=400, early_stop_min_epoch=60, patience=1, folds=2, batch_size=8)
        _, trace = ae_train(x, TINY, cfg)
        lengths = [len(t) for t in trace.fold_val_loss]
        assert min(lengths) >= 60
        assert 1 <= trace.best_epoch <= min(lengths)
        assert len(trace.final_train_loss) == trace.best_epoch

    def test_best_epoch_is_argmin_of_mean(self):
        x = make_rng(2, "es").uniform(size=(30, 4))
        cfg = AeTrainConfig(max_epochs=40, early_stop_min_epoch=40, patience=5, folds=3, batch_size=8)
        _, trace = ae_train(x, TINY, cfg)
        common = min(len(t) for t in trace.fold_val_loss)
        mean = np.mean([t[:common] for t in trace.fold_val_loss], axis=0)
        assert trace.best_epoch == int(np.argmin(mean)) + 1

    def test_deterministic(self):
        x = make_rng(3, "det").uniform(size=(40, 4))
        cfg = AeTrainConfig(max_epochs=30, early_stop_min_epoch=30, folds=2, batch_size=16, seed=4)
        m1, t1 = ae_train(x, TINY, cfg)
        m2, t2 = ae_train(x, TINY, cfg)
        assert abs(t1.mean_val_loss[-1] - t2.mean_val_loss[-1]) <= 1e-12
        assert all(a.tobytes() == b.tobytes() for a, b in zip(m1.params.values(), m2.params.values()))
        assert all(np.isfinite(v).all() for v in t1.fold_train_loss)

    def test_embed_decode_contract(self):
        x = make_rng(5, "ed").uniform(size=(30, 4))
        m, _ = ae_train(x, TINY, AeTrainConfig(max_epochs=5, early_stop_min_epoch=5, folds=2))
        r = ae_decode(m, ae_embed(m, x))
        assert r.shape == x.shape and r.min() > 0 and r.max() < 1
        assert np.array_equal(m.transform(x), ae_embed(m, x))
        with pytest.raises(InvalidInput):
            ae_decode(m, np.ones((2, 3)))
        m.mode = "train"
        with pytest.raises(InvalidInput):
            ae_embed(m, x)

    def test_checkpoint_round_trip(self, tmp_path):
        m = _tiny_model(11)
        m.running["enc0.var"] = np.array([0.5, 2.0, 1.5])
        man = save_checkpoint(m, tmp_path / "ck", config=AeTrainConfig().to_dict())
        assert json.loads(man.read_text())["layers"][0][:3] == ["enc0", 4, 3]
        back = load_checkpoint(tmp_path / "ck")
        x = make_rng(11, "ck").uniform(size=(3, 4))
        assert ae_forward(back, x, "eval")[0].tobytes() == ae_forward(m, x, "eval")[0].tobytes()


@pytest.mark.slow
def test_linear_fixture_near_lossless(linear_set):
    pilot = json.loads((FIXTURES / "ae_linear_pilot.json").read_text())
    sel = pilot["selected"]
    ds, sp = linear_set
    tr, te = ds.values[sp.train_rows], ds.values[sp.test_rows]
    m, trace = ae_train(tr, AeArchitecture(200, tuple(sel["hidden"]), 2),
                        AeTrainConfig(early_stop_min_epoch=sel["early_stop_min_epoch"], patience=sel["patience"]))
    ae_rmse = float(np.sqrt(np.mean((ae_decode(m, ae_embed(m, te)) - te) ** 2)))
    p = pca_fit(tr, 2)
    pca_rmse = float(np.sqrt(np.mean((p.inverse(p.transform(te)) - te) ** 2)))
    assert all(np.isfinite(t).all() for t in trace.fold_train_loss)
    assert ae_rmse < pilot["threshold"]
    assert ae_rmse < pca_rmse + 0.005
