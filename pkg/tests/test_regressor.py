import numpy as np
import pytest

from evolift import regressor as rg


def tiny_config(**kw):
    defaults = dict(width=8, blocks=1, dropout_rate=0.0, input_dim=6, output_dim=4)
    defaults.update(kw)
    return rg.LearnerConfig(**defaults)


def fd_max_relative_error(net, x, y, h=1e-5, rng_seed=11):
    """Central finite differences against the analytic gradients with the
    dropout masks drawn once and frozen."""
    _, grads, masks = net.gradients(x, y, rng=np.random.default_rng(rng_seed))
    worst = 0.0
    for name, p in net.params.items():
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp, _, _ = net.gradients(x, y, masks=masks)
            p[idx] = orig - h
            lm, _, _ = net.gradients(x, y, masks=masks)
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            g = grads[name][idx]
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-8))
    return worst


class TestForward:
    def test_zero_weights_give_zero_output(self):
        net = rg.DeepLearner(tiny_config())
        for key in net.params:
            net.params[key][:] = 0.0
        out = net.forward(np.ones((3, 6)), mode="eval")
        assert np.array_equal(out, np.zeros((3, 4)))

    def test_eval_mode_is_deterministic(self, rng):
        net = rg.DeepLearner(tiny_config(dropout_rate=0.5), rng)
        x = rng.normal(size=(5, 6))
        assert np.array_equal(net.forward(x), net.forward(x))

    def test_r0_learner_matches_hand_composition(self):
        # width-4 learner with no blocks: dense -> bn(eval) -> relu -> dense
        rng = np.random.default_rng(0)
        cfg = tiny_config(width=4, blocks=0, input_dim=3, output_dim=2)
        net = rg.DeepLearner(cfg, rng)
        x = np.array([[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]])
        # independent oracle: fresh running stats are mean 0 / var 1
        h = x @ net.params["in.w"]
        h = h / np.sqrt(1.0 + rg.BN_EPS) * net.params["in.gamma"] + net.params["in.beta"]
        h = np.maximum(h, 0.0)
        expected = h @ net.params["out.w"] + net.params["out.b"]
        assert np.abs(net.forward(x, mode="eval") - expected).max() < 1e-12

    def test_train_mode_single_sample_rejected(self):
        net = rg.DeepLearner(tiny_config())
        with pytest.raises(rg.BatchTooSmall):
            net.forward(np.ones((1, 6)), mode="train", rng=np.random.default_rng(0))

    def test_nonfinite_input_rejected(self):
        net = rg.DeepLearner(tiny_config())
        x = np.ones((2, 6))
        x[0, 0] = np.inf
        with pytest.raises(rg.InvalidInput):
            net.forward(x)


class TestGradients:
    def test_zero_residual_means_zero_gradients(self, rng):
        net = rg.DeepLearner(tiny_config(dropout_rate=0.5), rng)
        x = rng.normal(size=(4, 6))
        masks = net.draw_masks(4, np.random.default_rng(2))
        targets = net.forward(x, mode="train", masks=masks)
        loss, grads, _ = net.gradients(x, targets, masks=masks)
        assert loss == 0.0
        for g in grads.values():
            assert np.abs(g).max() < 1e-12

    def test_quadratic_loss_scaling(self, rng):
        net = rg.DeepLearner(tiny_config(), rng)
        net.params["out.w"][:] = 0.0
        net.params["out.b"][:] = 0.0
        x = rng.normal(size=(4, 6))
        y = rng.normal(size=(4, 4))
        l1, _, m = net.gradients(x, y, rng=np.random.default_rng(0))
        l2, _, _ = net.gradients(x, 2 * y, masks=m)
        assert l2 == pytest.approx(4 * l1, rel=1e-12)

    def test_finite_difference_check_small(self, rng):
        net = rg.DeepLearner(tiny_config(dropout_rate=0.5), rng)
        x = rng.normal(size=(4, 6))
        y = rng.normal(size=(4, 4))
        assert fd_max_relative_error(net, x, y) < 1e-4

    def test_divergence_detected(self, rng):
        net = rg.DeepLearner(tiny_config(), rng)
        net.params["out.w"][:] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(rg.NumericalDivergence):
            net.gradients(np.ones((2, 6)), np.zeros((2, 4)), rng=np.random.default_rng(0))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        cfg = rg.TrainConfig()
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.zeros(2)}
        state = rg.adam_init(params)
        rg.adam_step(params, grads, state, cfg)
        assert np.array_equal(params["w"], [1.0, -2.0])
        assert state["t"] == 1

    def test_first_step_matches_scalar_oracle(self):
        cfg = rg.TrainConfig(learning_rate=0.01)
        params = {"w": np.array([1.0])}
        grads = {"w": np.array([0.5])}
        state = rg.adam_init(params)
        rg.adam_step(params, grads, state, cfg)
        # hand computation of one bias-corrected update
        m = (1 - cfg.beta1) * 0.5
        v = (1 - cfg.beta2) * 0.25
        m_hat = m / (1 - cfg.beta1)
        v_hat = v / (1 - cfg.beta2)
        expected = 1.0 - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        assert params["w"][0] == pytest.approx(expected, abs=0, rel=1e-15)

    def test_bitwise_deterministic(self, rng):
        def run():
            r = np.random.default_rng(5)
            params = {"w": np.ones((3, 3))}
            state = rg.adam_init(params)
            for _ in range(10):
                rg.adam_step(params, {"w": r.normal(size=(3, 3))}, state,
                             rg.TrainConfig())
            return params["w"].copy()

        assert np.array_equal(run(), run())


def synthetic_pairs(n, rng):
    kp = rng.normal(500.0, 80.0, (n, 17, 2))
    tg = rng.normal(0.0, 120.0, (n, 17, 3))
    tg[:, 0] = 0.0
    return kp, tg


class TestCascade:
    def test_constant_target_fit_under_1mm(self, rng):
        kp = rng.normal(500.0, 50.0, (64, 17, 2))
        tg = np.broadcast_to(rng.normal(0, 100, (1, 17, 3)), (64, 17, 3)).copy()
        cascade = rg.train_cascade(
            kp, tg, cascade_length=1,
            learner_config=rg.LearnerConfig(width=64, blocks=1, dropout_rate=0.0),
            train_config=rg.TrainConfig(epochs=200, batch_size=16, rng_seed=0))
        assert cascade.train_log[0] < 1.0

    def test_stagewise_training_error_non_increasing(self, rng):
        kp, tg = synthetic_pairs(120, rng)
        cascade = rg.train_cascade(
            kp, tg, cascade_length=3,
            learner_config=rg.LearnerConfig(width=32, blocks=1, dropout_rate=0.25),
            train_config=rg.TrainConfig(epochs=25, batch_size=32, rng_seed=0))
        log = cascade.train_log
        assert len(log) == 3
        assert all(b <= a + 1e-6 for a, b in zip(log, log[1:]))

    def test_zeroed_second_learner_is_additive_identity(self, rng):
        kp, tg = synthetic_pairs(40, rng)
        c1 = rg.train_cascade(kp, tg, cascade_length=1,
                              learner_config=rg.LearnerConfig(width=16, blocks=0,
                                                              dropout_rate=0.0),
                              train_config=rg.TrainConfig(epochs=5, rng_seed=7))
        extra = rg.DeepLearner(c1.learners[0].config)
        extra.zero_output()
        c2 = rg.Cascade(c1.learners + [extra], c1.input_mean, c1.input_std,
                        c1.output_mean, c1.output_std)
        assert np.array_equal(c1.predict(kp), c2.predict(kp))

    def test_cascade_additivity_exact(self, rng):
        kp, tg = synthetic_pairs(30, rng)
        cascade = rg.train_cascade(kp, tg, cascade_length=2,
                                   learner_config=rg.LearnerConfig(width=16, blocks=0,
                                                                   dropout_rate=0.0),
                                   train_config=rg.TrainConfig(epochs=3, rng_seed=2))
        x = (kp.reshape(30, -1) - cascade.input_mean) / cascade.input_std
        total = sum(l.forward(x, mode="eval") for l in cascade.learners)
        manual = (total * cascade.output_std + cascade.output_mean).reshape(30, 17, 3)
        assert np.array_equal(cascade.predict(kp), manual)

    def test_predict_on_training_sample_matches_log_bookkeeping(self, rng):
        kp, tg = synthetic_pairs(50, rng)
        cascade = rg.train_cascade(kp, tg, cascade_length=2,
                                   learner_config=rg.LearnerConfig(width=16, blocks=1,
                                                                   dropout_rate=0.0),
                                   train_config=rg.TrainConfig(epochs=10, rng_seed=3))
        from evolift.metrics import mpjpe
        assert mpjpe(cascade.predict(kp), tg) == pytest.approx(cascade.train_log[-1],
                                                               abs=1e-9)

    def test_training_deterministic(self, rng):
        kp, tg = synthetic_pairs(40, rng)

        def run():
            c = rg.train_cascade(kp, tg, cascade_length=2,
                                 learner_config=rg.LearnerConfig(width=16, blocks=1,
                                                                 dropout_rate=0.5),
                                 train_config=rg.TrainConfig(epochs=5, rng_seed=9))
            return c

        a, b = run(), run()
        assert a.train_log == b.train_log
        for la, lb in zip(a.learners, b.learners):
            for key in la.params:
                assert np.array_equal(la.params[key], lb.params[key])

    def test_prediction_shapes_and_determinism(self, rng):
        kp, tg = synthetic_pairs(20, rng)
        cascade = rg.train_cascade(kp, tg, cascade_length=1,
                                   learner_config=rg.LearnerConfig(width=16, blocks=0,
                                                                   dropout_rate=0.0),
                                   train_config=rg.TrainConfig(epochs=2, rng_seed=1))
        single = cascade.predict(kp[0])
        assert single.shape == (17, 3)
        # batched BLAS kernels may round differently than single-row ones
        assert np.abs(single - cascade.predict(kp)[0]).max() < 1e-9
        assert np.array_equal(cascade.predict(kp[0]), cascade.predict(kp[0]))
        assert np.array_equal(cascade.predict(kp), cascade.predict(kp))

    def test_concat_estimates_mode(self, rng):
        kp, tg = synthetic_pairs(30, rng)
        cascade = rg.train_cascade(kp, tg, cascade_length=2,
                                   learner_config=rg.LearnerConfig(width=16, blocks=0,
                                                                   dropout_rate=0.0),
                                   train_config=rg.TrainConfig(epochs=3, rng_seed=4,
                                                               concat_estimates=True))
        assert cascade.learners[0].config.input_dim == 34
        assert cascade.learners[1].config.input_dim == 34 + 51
        assert cascade.predict(kp).shape == (30, 17, 3)

    def test_invalid_inputs(self, rng):
        with pytest.raises(rg.RegressorError):
            rg.train_cascade(np.zeros((0, 17, 2)), np.zeros((0, 17, 3)))
        kp, tg = synthetic_pairs(4, rng)
        cascade = rg.train_cascade(kp, tg, cascade_length=1,
                                   learner_config=rg.LearnerConfig(width=8, blocks=0,
                                                                   dropout_rate=0.0),
                                   train_config=rg.TrainConfig(epochs=1, batch_size=4))
        bad = kp[0].copy()
        bad[0, 0] = np.nan
        with pytest.raises(rg.InvalidInput):
            cascade.predict(bad)
