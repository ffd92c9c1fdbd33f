import numpy as np
import pytest

from plifnet.errors import ConfigError
from plifnet.loss import (encode_target, evaluate_protocol, mse_loss,
                          mse_loss_grad, predict, split_train_val)


def brute_mse(o, y):
    t_steps = o.shape[1]
    c = o.shape[0]
    total = 0.0
    for t in range(t_steps):
        lt = sum((o[i, t] - y[i, t]) ** 2 for i in range(c)) / c
        total += lt
    return total / t_steps


def brute_predict(o):
    rates = [np.sum(o[i]) / o.shape[1] for i in range(o.shape[0])]
    best = 0
    for i, r in enumerate(rates):
        if r > rates[best]:
            best = i
    return best


class TestEncodeTarget:
    def test_basic(self):
        assert np.array_equal(encode_target(1, 3, 2),
                              [[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])

    def test_single_class(self):
        assert np.array_equal(encode_target(0, 1, 4), np.ones((1, 4)))

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            encode_target(3, 3, 2)
        with pytest.raises(ConfigError):
            encode_target(-1, 3, 2)

    def test_row_sums(self):
        y = encode_target(2, 5, 7)
        assert y[2].sum() == 7 and y.sum() == 7


class TestMseLoss:
    def test_perfect(self):
        y = encode_target(0, 2, 3)
        assert mse_loss(y, y) == 0.0

    def test_silent_output_worked_example(self):
        # C=2, T=1, all-silent output, label 0 -> L = 0.5
        o = np.zeros((2, 1))
        y = encode_target(0, 2, 1)
        assert mse_loss(o, y) == 0.5

    def test_quadratic_scaling(self, rng):
        o = rng.random((3, 4))
        y = rng.random((3, 4))
        base = mse_loss(o, y)
        scaled = mse_loss(y + 3.0 * (o - y), y)
        assert np.isclose(scaled, 9.0 * base)

    def test_nonnegative_iff(self, rng):
        o = rng.random((3, 4))
        y = o.copy()
        assert mse_loss(o, y) == 0.0
        y[0, 0] += 1e-3
        assert mse_loss(o, y) > 0.0

    def test_matches_bruteforce_bulk(self, rng):
        for _ in range(1000):
            c = int(rng.integers(1, 6))
            t = int(rng.integers(1, 6))
            o = rng.random((c, t))
            y = rng.random((c, t))
            assert abs(mse_loss(o, y) - brute_mse(o, y)) < 1e-12

    def test_grad(self, rng):
        o = rng.random((3, 4))
        y = rng.random((3, 4))
        g = mse_loss_grad(o, y)
        eps = 1e-6
        for i in range(3):
            op = o.copy()
            op[i, 0] += eps
            om = o.copy()
            om[i, 0] -= eps
            fd = (mse_loss(op, y) - mse_loss(om, y)) / (2 * eps)
            assert abs(fd - g[i, 0]) < 1e-8


class TestPredict:
    def test_rates(self):
        assert predict(np.array([[1.0, 1.0], [0.0, 1.0]])) == 0

    def test_all_zero_tie(self):
        assert predict(np.zeros((4, 3))) == 0

    def test_single_class(self):
        assert predict(np.ones((1, 5))) == 0

    def test_matches_bruteforce_bulk(self, rng):
        for _ in range(1000):
            o = rng.random((int(rng.integers(1, 8)), int(rng.integers(1, 8))))
            assert predict(o) == brute_predict(o)

    def test_monotone_transform_invariance(self, rng):
        o = rng.random((5, 4))
        assert predict(o) == predict(np.exp(o) * 2.0 + 1.0)


class TestSplit:
    def test_85_15(self):
        labels = np.repeat(np.arange(10), 100)
        tr, val = split_train_val(labels, 0.15, seed=3)
        assert len(tr) == 850 and len(val) == 150
        for c in range(10):
            assert np.sum(labels[val] == c) == 15

    def test_zero_fraction(self):
        labels = np.array([0, 0, 1, 1])
        tr, val = split_train_val(labels, 0.0, seed=0)
        assert len(val) == 0 and len(tr) == 4

    def test_disjoint_exhaustive(self, rng):
        labels = rng.integers(0, 5, size=200)
        tr, val = split_train_val(labels, 0.2, seed=9)
        assert len(set(tr) & set(val)) == 0
        assert sorted(np.concatenate([tr, val])) == list(range(200))

    def test_deterministic(self):
        labels = np.repeat(np.arange(3), 20)
        a = split_train_val(labels, 0.15, seed=5)
        b = split_train_val(labels, 0.15, seed=5)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestProtocols:
    def test_a_max(self):
        assert evaluate_protocol("A", [0.9, 0.95, 0.93]) == 0.95

    def test_b_uses_best_val_checkpoint(self):
        assert evaluate_protocol("B", val_acc_per_epoch=[0.8, 0.9, 0.85],
                                 test_acc_at_best_val=0.92) == 0.92

    def test_single_epoch_agreement(self):
        a = evaluate_protocol("A", [0.88])
        b = evaluate_protocol("B", val_acc_per_epoch=[0.7], test_acc_at_best_val=0.88)
        assert a == b

    def test_a_monotone(self, rng):
        accs = list(rng.random(20))
        reports = [evaluate_protocol("A", accs[:i + 1]) for i in range(20)]
        assert all(x <= y for x, y in zip(reports, reports[1:]))

    def test_b_requires_validation(self):
        with pytest.raises(ConfigError):
            evaluate_protocol("B", val_acc_per_epoch=None, test_acc_at_best_val=None)
