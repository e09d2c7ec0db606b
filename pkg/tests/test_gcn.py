import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from floorplan_fpv import autodiff as ad
from floorplan_fpv.autodiff import Tensor
from floorplan_fpv.dataset import Dataset, encode_matrix, ols_tabular
from floorplan_fpv.gcn import (
    Adam,
    Checkpoint,
    GcnModel,
    GraphBatch,
    TrainConfig,
    TrainingData,
    _loss_and_grads,
    fpv_deviation,
    fpv_scores,
    gcn_conv,
    init_model,
    orient,
    readout,
    res_gated_conv,
    train,
    training_rmse,
)
from floorplan_fpv.stats import add_constant, fit_ols
from floorplan_fpv.synth import SynthConfig, generate_corpus, random_plan

from oracles import dense_gcn, loop_res_gated
from test_autodiff import numeric_grad

SMALL = dict(hidden_dim=8, num_layers=2, batch_size=64, checkpoint_interval=10)


def rand_params(rng, d, scale=0.5):
    p = {f"w{m}": rng.normal(scale=scale, size=(d, d)) for m in (1, 2, 3, 4)}
    p.update({f"b{m}": rng.normal(scale=scale, size=d) for m in (1, 2, 3, 4)})
    return p


def tensors(p):
    return {k: Tensor(v) for k, v in p.items()}


def directed(edges):
    return np.array([e for i, j in edges for e in ((i, j), (j, i))], dtype=np.int64)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(SynthConfig(n_records=300, n_templates=30, seed=1))


class TestGcnConv:
    def test_single_node(self, rng):
        x, w, b = rng.normal(size=(1, 10)), rng.normal(size=(10, 4)), rng.normal(size=4)
        e = np.zeros(0, dtype=np.int64)
        out = gcn_conv(Tensor(x), e, e, Tensor(np.zeros(0)), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, x @ w + b, atol=1e-14)

    def test_zero_weights_equal_no_edges(self, rng):
        x, w, b = rng.normal(size=(4, 10)), rng.normal(size=(10, 3)), rng.normal(size=3)
        e = directed([(0, 1), (1, 2), (2, 3)])
        masked = gcn_conv(Tensor(x), e[:, 0], e[:, 1], Tensor(np.zeros(len(e))), Tensor(w), Tensor(b)).data
        none = np.zeros(0, dtype=np.int64)
        bare = gcn_conv(Tensor(x), none, none, Tensor(np.zeros(0)), Tensor(w), Tensor(b)).data
        np.testing.assert_array_equal(masked, bare)

    def test_dense_oracle_path(self, rng):
        x, w, b = rng.normal(size=(4, 10)), rng.normal(size=(10, 5)), rng.normal(size=5)
        und = [(0, 1), (1, 2), (2, 3)]
        e = directed(und)
        wt = np.repeat(rng.uniform(0, 1, len(und)), 2)
        out = gcn_conv(Tensor(x), e[:, 0], e[:, 1], Tensor(wt), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, dense_gcn(x, e, wt, w, b), atol=1e-12)


class TestResGated:
    def test_isolated_node(self, rng):
        d = 4
        p = rand_params(rng, d)
        h = rng.normal(size=(1, d))
        e = np.zeros(0, dtype=np.int64)
        out = res_gated_conv(Tensor(h), e, e, tensors(p)).data
        np.testing.assert_allclose(out, np.maximum(h @ p["w1"] + p["b1"] + h, 0), atol=1e-14)

    def test_pure_residual(self, rng):
        d = 3
        p = {k: np.zeros_like(v) for k, v in rand_params(rng, d).items()}
        h = rng.normal(size=(5, d))
        e = directed([(0, 1), (1, 2), (3, 4)])
        out = res_gated_conv(Tensor(h), e[:, 0], e[:, 1], tensors(p)).data
        np.testing.assert_array_equal(out, np.maximum(h, 0))

    def test_loop_oracle(self, rng):
        d = 3
        p = rand_params(rng, d)
        h = rng.normal(size=(5, d))
        e = directed([(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
        out = res_gated_conv(Tensor(h), e[:, 0], e[:, 1], tensors(p)).data
        np.testing.assert_allclose(out, loop_res_gated(h, e, p), atol=1e-12)


class TestReadout:
    def test_single_and_duplicates(self, rng):
        h = rng.normal(size=(1, 4))
        np.testing.assert_array_equal(readout(Tensor(h), np.zeros(1, dtype=np.int64), 1).data, h)
        two = np.vstack([h, h])
        np.testing.assert_allclose(readout(Tensor(two), np.zeros(2, dtype=np.int64), 1).data, h, atol=1e-15)

    def test_sum_pool(self, rng):
        h = rng.normal(size=(3, 2))
        out = readout(Tensor(h), np.zeros(3, dtype=np.int64), 1, "sum").data
        np.testing.assert_allclose(out, h.sum(axis=0, keepdims=True))

    def test_errors(self):
        with pytest.raises(ValueError):
            readout(Tensor(np.zeros((0, 2))), np.zeros(0, dtype=np.int64), 1)
        with pytest.raises(ValueError):
            readout(Tensor(np.zeros((1, 2))), np.zeros(1, dtype=np.int64), 1, "max")


class TestModelGradient:
    @pytest.mark.parametrize("seed", range(3))
    def test_all_parameters(self, seed, corpus):
        ds, _ = corpus
        sub = ds.subset(range(12))
        model = init_model(sub, TrainConfig(hidden_dim=4, num_layers=2, seed=seed))
        data = TrainingData.build(sub, model.scaler)
        rows = np.arange(len(sub))
        _, grads = _loss_and_grads(model, data, rows)
        for name in ("gcn.w", "res0.w2", "res1.w3", "res1.b4", "fpv.w", "reg.w_tab", "reg.b"):
            base = model.params[name]

            def f(v, name=name):
                model.params[name] = v
                t = model.tensors()
                fpv = ad.gather(model.fpv_tensor(data.batch, t), data.record_graph)
                pred = model.rent_tensor(fpv, data.tabular, t)
                return float(ad.mean_squared_error(pred, data.rent).data)

            num = numeric_grad(f, base.copy(), h=1e-5)
            model.params[name] = base
            np.testing.assert_allclose(grads[name], num, rtol=1e-3, atol=1e-6 * np.abs(num).max())


class TestJointForward:
    def test_zero_reg_head(self, plan, path3, corpus):
        ds, _ = corpus
        m = GcnModel(hidden_dim=8, num_layers=2)
        m.params["reg.w_fpv"][:] = 0
        m.params["reg.w_tab"][:] = 0
        m.params["reg.b"][:] = 1234.5
        rent, _ = m.joint_forward([plan, path3], encode_matrix(ds.records[:2]))
        np.testing.assert_array_equal(rent, [1234.5, 1234.5])

    def test_fpv_ignores_tabular(self, plan, corpus):
        ds, _ = corpus
        m = GcnModel(hidden_dim=8, num_layers=2)
        _, f = m.joint_forward([plan, plan], encode_matrix(ds.records[:2]))
        assert f[0] == f[1]

    def test_composition(self, plan, star4, corpus, rng):
        ds, _ = corpus
        m = init_model(ds, TrainConfig(hidden_dim=6, num_layers=2, seed=4))
        tab = encode_matrix(ds.records[:2])
        rent, f = m.joint_forward([plan, star4], tab)
        expected_f = []
        for g in (plan, star4):
            e = g.directed_edges()
            p = m.params
            h = np.maximum(dense_gcn(g.one_hot(), e, np.ones(len(e)), p["gcn.w"], p["gcn.b"]), 0)
            for k in range(2):
                h = loop_res_gated(h, e, {n: p[f"res{k}.{n}"] for n in ("w1", "w2", "w3", "w4", "b1", "b2", "b3", "b4")})
            expected_f.append(float(h.mean(axis=0) @ p["fpv.w"][:, 0] + p["fpv.b"][0]))
        np.testing.assert_allclose(f, expected_f, atol=1e-10)
        z = m.scaler.transform(tab)
        lin = np.array(expected_f) * p["reg.w_fpv"][0] + z @ p["reg.w_tab"][:, 0] + p["reg.b"][0]
        np.testing.assert_allclose(rent, lin * m.target_scale + m.target_shift, rtol=1e-10)

    def test_batching_matches_single(self, rng):
        m = GcnModel(hidden_dim=8, num_layers=2, seed=3)
        gs = [random_plan(rng, f"p{i}") for i in range(6)]
        together = fpv_scores(m, gs)
        alone = [fpv_scores(m, [g])[0] for g in gs]
        np.testing.assert_allclose(together, alone, atol=1e-12)

    def test_repeated_batch(self, plan):
        m = GcnModel(hidden_dim=8, num_layers=2, seed=3)
        b = GraphBatch.from_graphs([plan])
        np.testing.assert_allclose(m.fpv(b.repeated(4)), np.repeat(m.fpv(b), 4), atol=1e-12)


class TestScores:
    def test_zero_head(self, plan, path3):
        m = GcnModel(hidden_dim=8, num_layers=2)
        m.params["fpv.w"][:] = 0
        np.testing.assert_array_equal(fpv_scores(m, [plan, path3]), [0.0, 0.0])

    def test_empty(self):
        assert fpv_scores(GcnModel(hidden_dim=4, num_layers=1), []).shape == (0,)

    @given(st.randoms(use_true_random=False), st.integers(0, 50))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, rnd, seed):
        g = random_plan(np.random.default_rng(seed), "p")
        m = GcnModel(hidden_dim=8, num_layers=2, seed=seed)
        perm = list(range(g.n_nodes))
        rnd.shuffle(perm)
        assert abs(fpv_scores(m, [g])[0] - fpv_scores(m, [g.permuted(perm)])[0]) <= 1e-6


class TestDeviation:
    def test_fixed_points(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        dev = fpv_deviation(x)
        assert dev.mean() == pytest.approx(50.0, abs=1e-12)
        assert dev.std() == pytest.approx(10.0, abs=1e-12)
        assert fpv_deviation([x.mean(), 0.0, 5.0])[0] == pytest.approx(50.0 + 10 * (2.5 - 7.5 / 3) / np.std([2.5, 0, 5]))

    def test_mean_plus_sd(self):
        x = np.array([-1.0, 1.0])
        np.testing.assert_allclose(fpv_deviation(x), [40.0, 60.0])

    def test_errors(self):
        with pytest.raises(ValueError):
            fpv_deviation([3.0, 3.0])
        with pytest.raises(ValueError):
            fpv_deviation([1.0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_moments(self, xs):
        x = np.array(xs)
        if not x.std() > 1e-6 * max(1.0, np.abs(x).max()):
            return
        dev = fpv_deviation(x)
        assert abs(dev.mean() - 50.0) <= 1e-9
        assert abs(dev.std() - 10.0) <= 1e-9


class TestOrientation:
    def test_flip_preserves_predictions(self, corpus, plan):
        ds, _ = corpus
        m = init_model(ds, TrainConfig(hidden_dim=8, num_layers=2, seed=0))
        m.params["reg.w_fpv"][:] = -0.7
        opt = Adam(m.params)
        opt.m["fpv.w"][:] = 1.0
        tab = encode_matrix(ds.records[:1])
        before, f_before = m.joint_forward([plan], tab)
        assert orient(m, opt)
        after, f_after = m.joint_forward([plan], tab)
        np.testing.assert_allclose(after, before, rtol=1e-14)
        np.testing.assert_allclose(f_after, -f_before, rtol=1e-14)
        assert m.params["reg.w_fpv"][0] == 0.7 and np.all(opt.m["fpv.w"] == -1.0)
        assert not orient(m, opt)

    def test_checkpoints_are_oriented(self, corpus):
        ds, _ = corpus
        for ck in train(ds.subset(range(60)), TrainConfig(epochs=20, **SMALL)):
            assert ck.model.params["reg.w_fpv"][0] >= 0


class TestTraining:
    def test_memorize_one(self, corpus):
        ds, _ = corpus
        one = ds.subset([0])
        cks = train(one, TrainConfig(epochs=300, lr=0.01, hidden_dim=8, num_layers=1, checkpoint_interval=300))
        assert training_rmse(cks[-1].model, one) < 1.0

    def test_checkpoint_epochs(self, corpus):
        ds, _ = corpus
        cks = train(ds.subset(range(40)), TrainConfig(epochs=30, **SMALL))
        assert [c.epoch for c in cks] == [10, 20, 30]
        assert len(cks[-1].history) == 30

    def test_identical_bytes(self, corpus, tmp_path):
        ds, _ = corpus
        sub = ds.subset(range(80))
        cfg = TrainConfig(epochs=20, **SMALL)
        train(sub, cfg, checkpoint_dir=tmp_path / "a")
        train(sub, cfg, checkpoint_dir=tmp_path / "b")
        for name in ("epoch_00010.json", "epoch_00020.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_resume_matches_uninterrupted(self, corpus, tmp_path):
        ds, _ = corpus
        sub = ds.subset(range(80))
        cfg = TrainConfig(epochs=30, **SMALL)
        full = train(sub, cfg)
        first = train(sub, TrainConfig(epochs=10, **SMALL), checkpoint_dir=tmp_path)
        resumed = train(sub, cfg, resume=Checkpoint.load(tmp_path / "epoch_00010.json"))
        assert [c.epoch for c in resumed] == [20, 30]
        # the saved config differs in ``epochs`` only
        assert first[0].model.state() == full[0].model.state()
        assert first[0].optimizer == full[0].optimizer and first[0].rng_state == full[0].rng_state
        assert resumed[-1].to_json() == full[-1].to_json()

    def test_checkpoint_roundtrip_bit_identical(self, corpus, tmp_path, plan):
        ds, _ = corpus
        ck = train(ds.subset(range(40)), TrainConfig(epochs=10, **SMALL))[-1]
        ck.save(tmp_path / "c.json")
        back = Checkpoint.load(tmp_path / "c.json")
        tab = encode_matrix(ds.records[:1])
        a = ck.model.joint_forward([plan], tab)
        b = back.model.joint_forward([plan], tab)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
        assert back.to_json() == ck.to_json()

    def test_bad_checkpoint(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            Checkpoint.load(tmp_path / "x.json")

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train(Dataset([], []), TrainConfig(epochs=1))

    def test_config_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"learning_rate": 0.1})

    def test_learns_planted_signal(self, corpus):
        ds, gt = corpus
        cks = train(ds, TrainConfig(epochs=200, hidden_dim=16, num_layers=2, batch_size=64, checkpoint_interval=50))
        hist = np.array(cks[-1].history)
        # trailing-100 mean at least 50% below the first epoch
        assert hist[-100:].mean() <= 0.5 * hist[0]
        ols = fit_ols(add_constant(ols_tabular(ds.records)), ds.rent, compute_vif=False)
        assert training_rmse(cks[-1].model, ds) < ols.rmse_insample
        rho = sps.spearmanr(fpv_scores(cks[-1].model, ds.graphs), gt.graph_utility).statistic
        assert rho > 0.5
