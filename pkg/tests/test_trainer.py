import numpy as np
import pytest

from hoicomp import rng as rngmod
from hoicomp.composer import ComposeConfig, compose_batch
from hoicomp.errors import DivergedTraining, InvalidConfig
from hoicomp.network import LossWeights, NetworkConfig, init_params
from hoicomp.synthdata import DatasetConfig, generate, random_hoi_defs
from hoicomp.trainer import (
    TrainConfig,
    format_metrics_log,
    group_by_image,
    init_momentum,
    make_minibatch,
    read_metrics_log,
    sgd_step,
    train,
    write_metrics_log,
)

from conftest import make_instance

NET = NetworkConfig(num_hois=8, feature_dim=8, hidden=8, vo_hidden=8, sp_hidden=8)


def tiny_dataset(seed=5, n_train=160):
    cfg = DatasetConfig(
        num_verbs=4,
        num_objects=3,
        hoi_defs=random_hoi_defs(4, 3, 8, np.random.default_rng(2)),
        zipf_exponent=1.0,
        n_train=n_train,
        n_test=40,
        feature_dim=8,
        class_sep=4.0,
        noise_sigma=1.0,
        seed=seed,
    )
    return generate(cfg)


class TestMakeMinibatch:
    def test_single_interaction_has_no_partner(self, toy_space):
        insts = [make_instance(toy_space, [0], image_id=i) for i in range(4)]
        cfg = TrainConfig(interactions_per_minibatch=1)
        batch = make_minibatch(insts, cfg, np.random.default_rng(0))
        assert len(batch) == 1
        comps = compose_batch(batch, toy_space, ComposeConfig(mode="between"), np.random.default_rng(0))
        assert comps == []

    def test_batch_spans_two_images(self, toy_space):
        insts = [make_instance(toy_space, [i % 3], image_id=i % 5) for i in range(20)]
        cfg = TrainConfig(interactions_per_minibatch=5)
        rng = np.random.default_rng(1)
        for _ in range(20):
            batch = make_minibatch(insts, cfg, rng)
            assert len(batch) == 5
            assert len({b.image_id for b in batch}) >= 2

    def test_replay_identical(self, toy_space):
        insts = [make_instance(toy_space, [i % 3], image_id=i % 6) for i in range(30)]
        where = {id(inst): k for k, inst in enumerate(insts)}
        cfg = TrainConfig(interactions_per_minibatch=4)
        rng1 = rngmod.stream(3, "batch")
        rng2 = rngmod.stream(3, "batch")
        for _ in range(10):
            a = [where[id(x)] for x in make_minibatch(insts, cfg, rng1)]
            b = [where[id(x)] for x in make_minibatch(insts, cfg, rng2)]
            assert a == b

    def test_groups_cover_all(self, toy_space):
        insts = [make_instance(toy_space, [0], image_id=i % 3) for i in range(7)]
        groups = group_by_image(insts)
        assert sorted(int(i) for g in groups for i in g) == list(range(7))

    def test_empty_train(self, toy_space):
        with pytest.raises(InvalidConfig):
            make_minibatch([], TrainConfig(), np.random.default_rng(0))


class TestSgdStep:
    def _params(self):
        return init_params(NET, np.random.default_rng(0))

    def test_plain_gradient_descent(self):
        p = self._params()
        before = {k: v.copy() for k, v in p.blocks().items()}
        grads = {k: np.ones_like(v) for k, v in p.blocks().items()}
        cfg = TrainConfig(lr=0.1, momentum=0.0, weight_decay=0.0)
        sgd_step(p, grads, init_momentum(p), cfg)
        for name, arr in p.blocks().items():
            np.testing.assert_allclose(arr, before[name] - 0.1)

    def test_zero_grads_keep_params(self):
        p = self._params()
        before = {k: v.copy() for k, v in p.blocks().items()}
        grads = {k: np.zeros_like(v) for k, v in p.blocks().items()}
        cfg = TrainConfig(lr=0.1, momentum=0.9, weight_decay=0.0)
        sgd_step(p, grads, init_momentum(p), cfg)
        for name, arr in p.blocks().items():
            np.testing.assert_array_equal(arr, before[name])

    def test_two_steps_constant_grad_closed_form(self):
        # v1 = g, v2 = (1 + m) g  =>  total displacement -lr (2 + m) g
        p = self._params()
        before = {k: v.copy() for k, v in p.blocks().items()}
        grads = {k: np.full_like(v, 0.5) for k, v in p.blocks().items()}
        m = 0.9
        cfg = TrainConfig(lr=0.01, momentum=m, weight_decay=0.0)
        state = init_momentum(p)
        sgd_step(p, grads, state, cfg)
        sgd_step(p, grads, state, cfg)
        for name, arr in p.blocks().items():
            np.testing.assert_allclose(arr, before[name] - 0.01 * (2 + m) * 0.5, rtol=1e-12)

    def test_weight_decay_pulls_to_zero(self):
        p = self._params()
        before = {k: v.copy() for k, v in p.blocks().items()}
        grads = {k: np.zeros_like(v) for k, v in p.blocks().items()}
        cfg = TrainConfig(lr=0.1, momentum=0.0, weight_decay=0.5)
        sgd_step(p, grads, init_momentum(p), cfg)
        for name, arr in p.blocks().items():
            np.testing.assert_allclose(arr, before[name] * (1 - 0.1 * 0.5), rtol=1e-12)


class TestTrain:
    def test_zero_iterations_returns_init(self):
        train_set, _, space = tiny_dataset()
        cfg = TrainConfig(iterations=0, seed=7)
        params, log = train(train_set, space, cfg, net_cfg=NET)
        fresh = init_params(NET, rngmod.stream(7, "init"))
        assert log == []
        for name, arr in params.blocks().items():
            np.testing.assert_array_equal(arr, fresh.blocks()[name])

    def test_compose_off_matches_lambda2_zero(self):
        train_set, _, space = tiny_dataset()
        base = dict(iterations=40, interactions_per_minibatch=4, seed=11)
        cfg_off = TrainConfig(
            compose=ComposeConfig(mode="off"),
            loss_weights=LossWeights(lambda1=2.0, lambda2=0.5),
            **base,
        )
        cfg_zero = TrainConfig(
            compose=ComposeConfig(mode="both"),
            loss_weights=LossWeights(lambda1=2.0, lambda2=0.0),
            **base,
        )
        p_off, log_off = train(train_set, space, cfg_off, net_cfg=NET)
        p_zero, log_zero = train(train_set, space, cfg_zero, net_cfg=NET)
        assert format_metrics_log(log_off) == format_metrics_log(log_zero)
        for name in p_off.blocks():
            np.testing.assert_array_equal(p_off.blocks()[name], p_zero.blocks()[name])

    def test_descent_on_toy_data(self):
        train_set, _, space = tiny_dataset()
        cfg = TrainConfig(iterations=200, interactions_per_minibatch=4, seed=0)
        _, log = train(train_set, space, cfg, net_cfg=NET)
        lw = cfg.loss_weights

        def total(e):
            return e["L_sp"] + lw.lambda1 * e["L_vo"] + lw.lambda2 * e["L_comp"]

        assert total(log[-1]) < total(log[0])

    def test_log_shape_and_finiteness(self):
        train_set, _, space = tiny_dataset()
        cfg = TrainConfig(iterations=25, seed=1)
        _, log = train(train_set, space, cfg, net_cfg=NET)
        assert len(log) == 25
        assert [e["iter"] for e in log] == list(range(25))
        for e in log:
            for key in ("L_sp", "L_vo", "L_comp"):
                assert np.isfinite(e[key])

    def test_bitwise_reproducible(self):
        train_set, _, space = tiny_dataset()
        cfg = TrainConfig(iterations=30, seed=4)
        p1, log1 = train(train_set, space, cfg, net_cfg=NET)
        p2, log2 = train(train_set, space, cfg, net_cfg=NET)
        assert format_metrics_log(log1) == format_metrics_log(log2)
        for name in p1.blocks():
            np.testing.assert_array_equal(p1.blocks()[name], p2.blocks()[name])

    def test_diverged_training_reports_iteration(self):
        train_set, _, space = tiny_dataset()
        cfg = TrainConfig(iterations=50, lr=1e9, momentum=0.99, seed=2)
        with np.errstate(all="ignore"), pytest.raises(DivergedTraining) as err:
            train(train_set, space, cfg, net_cfg=NET)
        assert err.value.iteration >= 0

    def test_eval_hook_runs_on_schedule(self):
        train_set, test_set, space = tiny_dataset()
        calls = []

        def fake_eval(params):
            calls.append(1)
            return {"mAP_full": 12.5}

        cfg = TrainConfig(iterations=10, eval_every=4, seed=3)
        _, log = train(train_set, space, cfg, net_cfg=NET, test_set=test_set, eval_fn=fake_eval)
        assert len(calls) == 2
        assert "mAP_full" in log[3] and "mAP_full" in log[7]
        assert "mAP_full" not in log[0]

    def test_validate_rejects_bad_config(self):
        train_set, _, space = tiny_dataset()
        with pytest.raises(InvalidConfig):
            train(train_set, space, TrainConfig(lr=0.0), net_cfg=NET)
        with pytest.raises(InvalidConfig):
            train(train_set, space, TrainConfig(momentum=1.0), net_cfg=NET)


class TestMetricsLog:
    def test_roundtrip(self, tmp_path):
        log = [
            {"iter": 0, "L_sp": 1.5, "L_vo": 0.25, "L_comp": 0.0},
            {"iter": 1, "L_sp": 1.25, "L_vo": 0.2, "L_comp": 0.1, "mAP_full": 33.3},
        ]
        path = tmp_path / "metrics.log"
        write_metrics_log(log, path)
        back = read_metrics_log(path)
        assert back == log

    def test_format_full_precision(self):
        val = 0.1 + 0.2  # not representable prettily
        text = format_metrics_log([{"iter": 0, "L_sp": val, "L_vo": 0.0, "L_comp": 0.0}])
        assert repr(val) in text
