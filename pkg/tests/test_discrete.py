from fractions import Fraction as F

import numpy as np
import pytest

from textcate.discrete import (
    DiscreteWorld, UndefinedConditionalError, copy_channel, discrete_world, entropy,
    mutual_information, naive_tau, random_world, sample, text_for,
)


def binary_world():
    """X ~ Bern(1/2); T = X w.p. 0.7; P(A=1|X) = 0.8X + 0.1; P(Y=1|x,a) = 0.2 + 0.3x + 0.4a."""
    py = np.array([[[1 - q, q] for q in (0.2 + 0.3 * x, 0.2 + 0.3 * x + 0.4)] for x in (0, 1)])
    return discrete_world([0.5, 0.5], [[0.7, 0.3], [0.3, 0.7]], [0.1, 0.9], py, [0.0, 1.0])


def test_copy_channel_information():
    w = copy_channel([0.2, 0.5, 0.3], [0.5] * 3, np.full((3, 2, 2), 0.5))
    assert mutual_information(w) == pytest.approx(entropy([0.2, 0.5, 0.3]), abs=1e-15)


def test_uniform_independent_world():
    w = discrete_world(np.full(4, 0.25), np.full((4, 3), 1 / 3), np.full(4, 0.5), np.full((4, 2, 2), 0.5))
    assert mutual_information(w) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(w.joint, 1 / 48, atol=1e-15)
    pxt = w.joint.sum(axis=(2, 3))
    np.testing.assert_allclose(pxt / pxt.sum(axis=0), 0.25, atol=1e-15)


def test_binary_world_marginals_by_hand():
    w = binary_world()
    assert w.joint.sum() == pytest.approx(1.0, abs=1e-15)
    # P(T=1) = 0.5*0.3 + 0.5*0.7 ; P(A=1) = 0.5*0.1 + 0.5*0.9
    assert w.p_t()[1] == pytest.approx(float(F(1, 2) * F(3, 10) + F(1, 2) * F(7, 10)), abs=1e-15)
    assert w.joint[:, :, 1, :].sum() == pytest.approx(0.5, abs=1e-15)
    # P(Y=1) = sum_x P(x) sum_a P(a|x) P(Y=1|x,a)
    py1 = sum(F(1, 2) * ((1 - pa) * q + pa * (q + F(2, 5)))
              for pa, q in ((F(1, 10), F(1, 5)), (F(9, 10), F(1, 2))))
    assert w.joint[..., 1].sum() == pytest.approx(float(py1), abs=1e-15)
    for axis in range(4):
        assert w.joint.sum(axis=tuple(i for i in range(4) if i != axis)).sum() == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [1 + 1e-9, 1 - 1e-9])
def test_rejects_rows_that_do_not_sum_to_one(bad):
    with pytest.raises(ValueError, match="sums to"):
        discrete_world([0.5, 0.5], [[bad - 0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], np.full((2, 2, 2), 0.5))


def test_accepts_rounding_level_error():
    discrete_world([0.5, 0.5 + 1e-14], np.full((2, 2), 0.5), [0.5, 0.5], np.full((2, 2, 2), 0.5))


def test_size_limits():
    with pytest.raises(ValueError):
        discrete_world(np.full(17, 1 / 17), np.full((17, 2), 0.5), np.full(17, 0.5), np.full((17, 2, 2), 0.5))
    with pytest.raises(ValueError, match="exceed"):
        discrete_world(np.full(16, 1 / 16), np.full((16, 16), 1 / 16), np.full(16, 0.5),
                       np.full((16, 2, 9), 1 / 9), np.arange(9.0))


def test_shape_and_range_checks():
    with pytest.raises(ValueError):
        discrete_world([1.0], [[1.0]], [1.5], [[[1.0], [1.0]]], [0.0])
    with pytest.raises(ValueError):
        discrete_world([1.0], [[1.0]], [0.5], [[[0.5, 0.5]]], [0.0, 1.0])


def test_zero_probability_conditional():
    w = discrete_world([0.5, 0.5], np.full((2, 2), 0.5), [1.0, 1.0], np.full((2, 2, 2), 0.5))
    with pytest.raises(UndefinedConditionalError):
        naive_tau(w, 0)


def test_random_worlds_are_strictly_positive():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = random_world(rng, 3, 4)
        assert isinstance(w, DiscreteWorld) and w.joint.min() > 0


def test_sampler_frequencies():
    w = binary_world()
    ds = sample(w, 40_000, np.random.default_rng(1))
    X, a, y = ds.X, ds.a, ds.y
    x = X.argmax(axis=1)
    t = np.array([0 if tx == text_for(0) else 1 for tx in ds.texts])
    counts = np.zeros_like(w.joint)
    np.add.at(counts, (x, t, a, y.astype(int)), 1)
    freq = counts / len(y)
    se = np.sqrt(w.joint * (1 - w.joint) / len(y))
    assert np.all(np.abs(freq - w.joint) < 4 * se)
    np.testing.assert_array_equal(ds.tau, w.tau_x()[x])
