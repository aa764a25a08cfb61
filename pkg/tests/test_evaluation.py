import dataclasses
import logging
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from textcate.discrete import copy_channel, discrete_world, random_world
from textcate.evaluation import (
    ExperimentResult, IdentityViolation, bias_report, bin_check, dr_oracle_check, lemma1_bias,
    lemma2_oracle, oracle_suite, pehe, score, subgroup_table,
)


def deterministic_world():
    """X ~ Bern(1/2); T = X w.p. 0.7; P(A=1|X) = 0.8X + 0.1; Y = X + A."""
    py = np.zeros((2, 2, 3))
    for x in (0, 1):
        for a in (0, 1):
            py[x, a, x + a] = 1.0
    return discrete_world([0.5, 0.5], [[0.7, 0.3], [0.3, 0.7]], [0.1, 0.9], py, [0.0, 1.0, 2.0])


def hand_bias(t):
    """Enumerate the 16 (x, t, a, y) cells with exact fractions; Y = X + A so tau = 1."""
    px, pa = F(1, 2), {0: F(1, 10), 1: F(9, 10)}
    pt = {(0, 0): F(7, 10), (0, 1): F(3, 10), (1, 0): F(3, 10), (1, 1): F(7, 10)}

    def mean_y(a):
        num = den = F(0)
        for x in (0, 1):
            p = px * pt[(x, t)] * (pa[x] if a == 1 else 1 - pa[x])
            num += p * (x + a)
            den += p
        return num / den

    return mean_y(1) - mean_y(0) - 1


class TestPehe:
    def test_examples(self):
        assert pehe([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert pehe([2.0, 3.0, 4.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0, abs=1e-15)
        assert pehe([0.0, 2.0], [1.0, 1.0]) == pytest.approx(1.0, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            pehe([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            pehe([], [])

    @given(arrays(np.float64, 12, elements=st.floats(-100, 100)),
           arrays(np.float64, 12, elements=st.floats(-100, 100)),
           st.randoms(use_true_random=False))
    @settings(max_examples=100)
    def test_joint_permutation_invariance(self, pred, truth, rnd):
        perm = list(range(12))
        rnd.shuffle(perm)
        assert pehe(pred[perm], truth[perm]) == pytest.approx(pehe(pred, truth), rel=1e-12, abs=1e-12)


class TestBias:
    def test_copy_channel_has_no_bias(self):
        w = copy_channel([0.3, 0.7], [0.2, 0.9], np.array([[[0.4, 0.6], [0.1, 0.9]], [[0.8, 0.2], [0.5, 0.5]]]))
        for row in bias_report(w).rows:
            assert abs(row.bias_observed) < 1e-15

    def test_randomized_given_text_has_no_bias(self):
        rng = np.random.default_rng(3)
        py = rng.dirichlet(np.ones(3), size=(3, 2))
        w = discrete_world([0.2, 0.3, 0.5], rng.dirichlet(np.ones(2), size=3), [0.4] * 3, py, [0.0, 1.0, 3.0])
        for row in bias_report(w).rows:
            assert abs(row.bias_observed) < 1e-15

    def test_hand_enumerated_world(self):
        w = deterministic_world()
        for t in (0, 1):
            row = lemma1_bias(w, t)
            assert row.bias_observed == pytest.approx(float(hand_bias(t)), abs=1e-12)
            assert row.gap <= 1e-12
            assert row.true_tau_t == pytest.approx(1.0, abs=1e-15)

    def test_random_world_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            w = random_world(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)))
            assert bias_report(w).max_gap <= 1e-12

    def test_inconsistent_world_is_caught(self):
        w = deterministic_world()
        joint = w.joint.copy()
        joint[1, 0, 1, 1] = 0.05  # Y = 1 becomes possible for treated x = 1
        joint /= joint.sum()
        with pytest.raises(IdentityViolation):
            lemma2_oracle(dataclasses.replace(w, joint=joint), 0)


class TestIdentification:
    def test_copy_channel(self):
        py = np.array([[[0.4, 0.6], [0.1, 0.9]], [[0.8, 0.2], [0.5, 0.5]]])
        w = copy_channel([0.3, 0.7], [0.2, 0.9], py)
        for t in (0, 1):
            assert lemma2_oracle(w, t) == pytest.approx(w.tau_x()[t], abs=1e-15)

    def test_uninformative_text(self):
        rng = np.random.default_rng(5)
        px = rng.dirichlet(np.ones(3))
        py = rng.dirichlet(np.ones(2), size=(3, 2))
        w = discrete_world(px, np.tile([0.25, 0.75], (3, 1)), [0.3, 0.5, 0.7], py, [0.0, 1.0])
        ate = float(px @ w.tau_x())
        for t in (0, 1):
            assert lemma2_oracle(w, t) == pytest.approx(ate, abs=1e-14)

    def test_hand_world(self):
        assert lemma2_oracle(deterministic_world(), 1) == pytest.approx(1.0, abs=1e-15)


class TestDoubleRobustness:
    def test_bin_z_scores(self):
        coord = np.arange(100.0)
        d = np.where(coord < 50, 1.0, -1.0) + np.tile([0.1, -0.1], 50)
        r = bin_check(d, np.zeros(100), coord, n_bins=2)
        assert r.counts.tolist() == [50, 50]
        assert r.z[0] > 3 and r.z[1] < -3 and r.fail_fraction == 1.0

    @pytest.mark.parametrize("corrupt", ["propensity", "outcome"])
    def test_one_correct_nuisance_is_enough(self, corrupt):
        assert dr_oracle_check(corrupt, n=20_000, seed=2).passed

    def test_both_wrong_is_detected(self):
        assert dr_oracle_check("both", n=20_000, seed=2).fail_fraction >= 0.25

    def test_unknown_corruption(self):
        with pytest.raises(ValueError):
            dr_oracle_check("neither")

    def test_suite_passes(self):
        assert all(c.passed for c in oracle_suite())


class TestSubgroups:
    def test_single_group_equals_overall(self):
        pred, truth = np.array([0.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0])
        table = subgroup_table(pred, truth, [{"sex": "F"}] * 3, "sex")
        assert table == {"F": pehe(pred, truth)}

    def test_missing_key_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert subgroup_table([1.0], [1.0], [{"sex": "F"}], "age") == {}
        assert "age" in caplog.text

    def test_equal_groups_agree_within_noise(self):
        rng = np.random.default_rng(0)
        n = 20_000
        err = rng.normal(scale=0.3, size=n)
        groups = [{"sex": "F" if i % 2 else "M"} for i in range(n)]
        t = subgroup_table(err, np.zeros(n), groups, "sex")
        # each squared-error mean has sd about 0.09 * sqrt(2) / sqrt(n / 2)
        assert abs(t["F"] ** 2 - t["M"] ** 2) < 4 * 0.09 * np.sqrt(2) * np.sqrt(2 / (n / 2))

    def test_length_check(self):
        with pytest.raises(ValueError):
            subgroup_table([1.0], [1.0, 2.0], [None, None], "sex")


def test_result_row_layout():
    groups = [{"sex": "F", "age": "O"}, {"sex": "M", "age": "Y"}]
    r = score("TCA", 3, {"eta": 1.0, "kappa": 1.0, "leak": 0.6, "prompt_family": "Factual", "lambda": 0.01},
              [0.0, 1.0], [0.5, 1.0], groups)
    row = r.row()
    assert list(row) == ["method", "seed", "eta", "kappa", "leak", "prompt_family", "lambda", "pehe",
                         "pehe_GM", "pehe_GF", "pehe_GY", "pehe_GO"]
    assert row["pehe_GF"] == 0.5 and row["pehe_GM"] == 0.0
    assert r.n_test == 2
    with pytest.raises(ValueError):
        ExperimentResult("TCA", 0, {}, -1.0, 1)
