"""Optimizer update rules against hand-stepped oracles, batch schedules."""

import numpy as np
import pytest

from ptygrad.errors import DomainError
from ptygrad.optim import BatchSchedule, OptimizerConfig, OptState, batches, step, update_count


def run_steps(cfg, grads, theta0):
    theta = np.array(theta0, dtype=np.float64)
    state = OptState.zeros(theta.shape)
    out = [theta.copy()]
    for g in grads:
        theta, state = step(cfg, state, theta, np.asarray(g, dtype=np.float64))
        out.append(theta.copy())
    return out, state


class TestSgd:
    def test_matches_hand_oracle(self):
        # [DERIVED] theta <- theta - lr * g, stepped by hand.
        cfg = OptimizerConfig("sgd", lr=0.1)
        traj, _ = run_steps(cfg, [np.array([2.0, -4.0]), np.array([1.0, 1.0])], [1.0, 1.0])
        assert np.allclose(traj[1], [0.8, 1.4])
        assert np.allclose(traj[2], [0.7, 1.3])

    def test_converges_on_quadratic(self):
        cfg = OptimizerConfig("sgd", lr=0.3)
        theta = np.array([5.0])
        state = OptState.zeros(theta.shape)
        for _ in range(100):
            theta, state = step(cfg, state, theta, 2.0 * theta)
        assert abs(theta[0]) < 1e-10


class TestSgdm:
    def test_matches_hand_oracle(self):
        # m <- mu m + g; theta <- theta - lr m, with mu = 0.5.
        cfg = OptimizerConfig("sgdm", lr=0.1, momentum=0.5)
        traj, state = run_steps(cfg, [np.array([1.0]), np.array([1.0])], [0.0])
        # step 1: m = 1,   theta = -0.1
        # step 2: m = 1.5, theta = -0.25
        assert traj[1][0] == pytest.approx(-0.1)
        assert traj[2][0] == pytest.approx(-0.25)
        assert state.m[0] == pytest.approx(1.5)


class TestRmsprop:
    def test_matches_hand_oracle(self):
        # v <- rho v + (1 - rho) g^2; theta <- theta - lr g / (sqrt(v) + eps)
        lr, rho, eps = 0.01, 0.9, 1e-8
        cfg = OptimizerConfig("rmsprop", lr=lr, decay=rho, eps=eps)
        g1, g2 = 3.0, -2.0
        v1 = (1 - rho) * g1 ** 2
        t1 = -lr * g1 / (np.sqrt(v1) + eps)
        v2 = rho * v1 + (1 - rho) * g2 ** 2
        t2 = t1 - lr * g2 / (np.sqrt(v2) + eps)
        traj, _ = run_steps(cfg, [np.array([g1]), np.array([g2])], [0.0])
        assert traj[1][0] == pytest.approx(t1, rel=1e-12)
        assert traj[2][0] == pytest.approx(t2, rel=1e-12)


class TestAdam:
    def test_matches_hand_oracle(self):
        # Bias-corrected first/second moments, stepped by hand for 2 updates.
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        cfg = OptimizerConfig("adam", lr=lr, beta1=b1, beta2=b2, eps=eps)
        theta = 0.0
        m = v = 0.0
        grads = [0.5, -1.5]
        expected = []
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1 ** t)
            vh = v / (1 - b2 ** t)
            theta -= lr * mh / (np.sqrt(vh) + eps)
            expected.append(theta)
        traj, state = run_steps(cfg, [np.array([g]) for g in grads], [0.0])
        assert traj[1][0] == pytest.approx(expected[0], rel=1e-12)
        assert traj[2][0] == pytest.approx(expected[1], rel=1e-12)
        assert state.step_count == 2

    def test_first_step_size_is_lr(self):
        # With bias correction the first Adam step has magnitude ~lr
        # regardless of gradient scale.
        cfg = OptimizerConfig("adam", lr=0.25)
        for g in (1e-3, 1.0, 1e3):
            theta, _ = step(cfg, OptState.zeros((1,)), np.array([0.0]), np.array([g]))
            assert abs(theta[0]) == pytest.approx(0.25, rel=1e-4)


class TestValidation:
    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            OptimizerConfig("adagrad", lr=0.1)

    def test_nonpositive_lr(self):
        with pytest.raises(DomainError):
            OptimizerConfig("sgd", lr=0.0)

    def test_non_finite_gradient_rejected(self):
        cfg = OptimizerConfig("sgd", lr=0.1)
        with pytest.raises(DomainError):
            step(cfg, OptState.zeros((2,)), np.zeros(2), np.array([1.0, np.nan]))


class TestSchedule:
    def test_update_count_formula(self):
        # updating times = epochs * ceil(n / batch_size)
        # Worked numbers: 225 images, batch 1, 20 epochs -> 4500 updates.
        assert update_count(20, 225, 1) == 4500
        assert update_count(20, 225, 64) == 80
        assert update_count(500, 25, 25) == 500

    def test_sequential_covers_everything(self):
        sched = BatchSchedule(10, 3, 2)
        seen = []
        for epoch, batch in batches(sched):
            assert 1 <= len(batch) <= 3
            seen.extend(batch)
        assert len(seen) == 20
        assert sorted(seen[:10]) == list(range(10))

    def test_shuffled_is_permutation_per_epoch(self):
        sched = BatchSchedule(8, 1, 3, order="shuffled", seed=5)
        per_epoch = {}
        for epoch, batch in batches(sched):
            per_epoch.setdefault(epoch, []).extend(batch)
        for ep, idx in per_epoch.items():
            assert sorted(idx) == list(range(8))
        # different epochs see different orders (overwhelmingly likely)
        assert per_epoch[0] != per_epoch[1] or per_epoch[1] != per_epoch[2]

    def test_shuffled_reproducible(self):
        a = [b for _, b in batches(BatchSchedule(8, 2, 2, order="shuffled", seed=9))]
        b = [b for _, b in batches(BatchSchedule(8, 2, 2, order="shuffled", seed=9))]
        assert a == b

    def test_shuffled_requires_seed(self):
        with pytest.raises(DomainError):
            BatchSchedule(8, 2, 2, order="shuffled")

    def test_batch_size_cap(self):
        with pytest.raises(DomainError):
            BatchSchedule(4, 8, 1)
