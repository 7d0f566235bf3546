import numpy as np
import pytest

from ddpsim.gradsync import ClipMode
from ddpsim.toytrain import (
    AdamState,
    DivergenceError,
    ToyTask,
    adam_step,
    compare_modes,
    train,
)

MODES = list(ClipMode)


class TestAdamStep:
    def test_zero_gradient_fixed_point(self):
        state = AdamState.init(3, weight_decay=0.0)
        theta = np.array([1.0, -2.0, 0.5])
        new_state, new_theta = adam_step(state, theta, np.zeros(3))
        np.testing.assert_array_equal(new_theta, theta)
        assert new_state.t == 1

    def test_first_step_is_signed_lr(self):
        # from zero moments, bias correction gives m_hat/sqrt(v_hat) = sign(G)
        # up to eps, so the first update is about -lr per coordinate
        state = AdamState.init(4, lr=0.01, eps=1e-12)
        g = np.array([5.0, -3.0, 0.25, -0.125])
        _, theta = adam_step(state, np.zeros(4), g)
        np.testing.assert_allclose(theta, -0.01 * np.sign(g), rtol=1e-9)

    def test_degenerate_betas_give_normalized_gradient(self):
        # beta1 = beta2 = 0: update = -lr * G / (|G| + eps) elementwise
        state = AdamState.init(3, lr=0.5, beta1=0.0, beta2=0.0, eps=0.1)
        g = np.array([2.0, -0.4, 0.0])
        _, theta = adam_step(state, np.zeros(3), g)
        np.testing.assert_allclose(theta, -0.5 * g / (np.abs(g) + 0.1), rtol=1e-12)

    def test_decoupled_weight_decay(self):
        state = AdamState.init(2, lr=0.1, weight_decay=0.5)
        theta = np.array([1.0, -1.0])
        _, new_theta = adam_step(state, theta, np.zeros(2))
        np.testing.assert_allclose(new_theta, theta - 0.1 * 0.5 * theta)

    def test_step_counter_advances(self):
        state = AdamState.init(1)
        theta = np.zeros(1)
        for expected in (1, 2, 3):
            state, theta = adam_step(state, theta, np.ones(1))
            assert state.t == expected

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            adam_step(AdamState.init(2), np.zeros(3), np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            adam_step(AdamState.init(2), np.zeros(2), np.array([1.0, np.inf]))

    def test_hyperparameter_validation(self):
        with pytest.raises(ValueError):
            AdamState.init(2, lr=0.0)
        with pytest.raises(ValueError):
            AdamState.init(2, beta1=1.0)
        with pytest.raises(ValueError):
            AdamState.init(2, eps=0.0)


class TestTrain:
    def test_inactive_clipping_makes_modes_identical(self):
        # no outliers and a huge threshold: the three disciplines reduce to
        # the same averaged update stream
        task = ToyTask(dim=8, minibatch=8, outlier_rate=0.0, seed=5)
        runs = [
            train(task, mode, workers=4, buckets=4, steps=40, threshold=1e9)
            for mode in MODES
        ]
        np.testing.assert_array_equal(runs[0].losses, runs[1].losses)
        np.testing.assert_array_equal(runs[0].losses, runs[2].losses)

    def test_single_bucket_equals_before(self):
        task = ToyTask(dim=8, minibatch=8, outlier_rate=0.2, seed=6)
        a = train(task, "before_allreduce", workers=4, buckets=1, steps=60)
        b = train(task, "bucket_wise", workers=4, buckets=1, steps=60)
        np.testing.assert_array_equal(a.losses, b.losses)

    def test_noise_free_convergence_all_modes(self):
        task = ToyTask(dim=32, minibatch=32, noise_std=0.0, outlier_rate=0.0, seed=3)
        for mode in MODES:
            r = train(task, mode, workers=4, buckets=8, steps=2000)
            assert r.final_loss < 1e-6 * r.initial_loss

    def test_bitwise_deterministic(self):
        task = ToyTask(dim=8, minibatch=8, seed=9)
        a = train(task, "bucket_wise", workers=4, buckets=2, steps=30)
        b = train(task, "bucket_wise", workers=4, buckets=2, steps=30)
        assert a.losses.tobytes() == b.losses.tobytes()
        assert a.theta.tobytes() == b.theta.tobytes()

    def test_divergence_is_reported(self):
        task = ToyTask(dim=4, minibatch=4, seed=1)
        with pytest.raises(DivergenceError, match="step"):
            train(task, "after_allreduce", workers=2, buckets=1, steps=5,
                  threshold=1e300, lr=1e155)

    def test_zero_steps(self):
        task = ToyTask(dim=4, minibatch=4, seed=1)
        r = train(task, "after_allreduce", workers=2, buckets=1, steps=0)
        assert len(r.losses) == 0
        assert r.final_loss == r.initial_loss

    def test_trajectory_length_matches_steps(self):
        task = ToyTask(dim=4, minibatch=4, seed=1)
        r = train(task, "before_allreduce", workers=2, buckets=1, steps=17)
        assert len(r.losses) == 17

    def test_validation(self):
        task = ToyTask(dim=4, minibatch=4, seed=1)
        with pytest.raises(ValueError):
            train(task, "before_allreduce", workers=0, buckets=1, steps=1)
        with pytest.raises(ValueError):
            train(task, "before_allreduce", workers=1, buckets=0, steps=1)
        with pytest.raises(ValueError):
            ToyTask(outlier_rate=1.5)
        with pytest.raises(ValueError):
            ToyTask(outlier_scale=0.5)
        with pytest.raises(ValueError):
            ToyTask(dim=0)


class TestCompareModes:
    def test_single_mode_single_seed_echoes_train(self):
        task = ToyTask(dim=8, minibatch=8, seed=0)
        kwargs = dict(workers=4, buckets=2, steps=25)
        rows = compare_modes(task, ["after_allreduce"], [31], **kwargs)
        assert len(rows) == 1
        direct = train(ToyTask(dim=8, minibatch=8, seed=31), "after_allreduce", **kwargs)
        assert rows[0].mean_final_loss == direct.final_loss
        assert rows[0].stderr == 0.0

    def test_single_bucket_columns_identical(self):
        task = ToyTask(dim=8, minibatch=8, outlier_rate=0.1, seed=0)
        rows = compare_modes(
            task, ["before_allreduce", "bucket_wise"], [1, 2, 3],
            workers=4, buckets=1, steps=30,
        )
        np.testing.assert_array_equal(rows[0].final_losses, rows[1].final_losses)
        assert rows[0].mean_final_loss == rows[1].mean_final_loss

    def test_ordering_under_outliers(self):
        # light version of the acceptance run: after-allreduce hurts worst
        task = ToyTask(dim=16, minibatch=16, outlier_rate=0.05, outlier_scale=100.0, seed=0)
        rows = compare_modes(task, MODES, list(range(8)),
                             workers=8, buckets=4, steps=200, threshold=1.0)
        by_mode = {r.mode: r.mean_final_loss for r in rows}
        assert by_mode[ClipMode.AFTER_ALLREDUCE] > by_mode[ClipMode.BEFORE_ALLREDUCE]
        assert by_mode[ClipMode.AFTER_ALLREDUCE] > by_mode[ClipMode.BUCKET_WISE]

    def test_empty_inputs_rejected(self):
        task = ToyTask(seed=0)
        with pytest.raises(ValueError):
            compare_modes(task, [], [1])
        with pytest.raises(ValueError):
            compare_modes(task, ["after_allreduce"], [])
