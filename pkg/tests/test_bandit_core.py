import math

import numpy as np
import pytest

from divrank.policies import (DoublingPolicy, EXP3Policy, HorizonConfig, UCB1Policy,
                              conf_radius, default_exp3_gamma)


def cfg_for(T, optimistic=False):
    return HorizonConfig(horizon=T, optimistic=optimistic)


class TestConfRadius:
    def test_natural_log_horizon(self):
        # at horizon e the factor is exactly 4, so the n=0 radius is 2
        assert conf_radius(0, HorizonConfig(horizon=math.e)) == pytest.approx(2.0)
        cfg = HorizonConfig(horizon=1000)
        assert conf_radius(7, cfg) == pytest.approx(
            math.sqrt(4 * math.log(1000) / 8))

    def test_optimistic_n3(self):
        assert conf_radius(3, cfg_for(100, optimistic=True)) == pytest.approx(0.5)

    def test_monotone_to_zero(self):
        cfg = cfg_for(1000)
        vals = [conf_radius(n, cfg) for n in (0, 1, 10, 100, 10_000, 10 ** 9)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            conf_radius(-1, cfg_for(10))

    def test_horizon_validation(self):
        with pytest.raises(ValueError):
            HorizonConfig(horizon=0)


class TestUCB1:
    def test_all_unplayed_ties_to_first(self):
        pol = UCB1Policy([10, 20, 30], cfg_for(100))
        assert pol.select() == 10

    def test_mean_dominance(self):
        pol = UCB1Policy([0, 1], cfg_for(100))
        pol.n[:] = [10, 10]
        pol.r[:] = [9, 1]
        assert pol.select() == 0

    def test_optimistic_hand_example(self):
        pol = UCB1Policy([0, 1], cfg_for(1000, optimistic=True))
        pol.n[:] = [100, 1]
        pol.r[:] = [50, 0]
        assert pol.index_of(0) == pytest.approx(0.5 + 2 * math.sqrt(1 / 101))
        assert pol.index_of(1) == pytest.approx(2 * math.sqrt(1 / 2))
        assert pol.select() == 1

    def test_update_requires_matching_selection(self):
        pol = UCB1Policy([5, 6], cfg_for(10))
        pol.select()
        with pytest.raises(ValueError, match="last selection"):
            pol.update(6, 1)
        with pytest.raises(ValueError, match="rewards"):
            pol.update(5, 0.5)

    def test_index_is_high_probability_upper_bound(self):
        # simultaneous coverage over all arms and rounds, many runs
        T, runs = 1000, 200
        means = np.array([0.1, 0.3, 0.5, 0.6, 0.62])
        rng = np.random.default_rng(0)
        covered = 0
        for _ in range(runs):
            pol = UCB1Policy(range(5), cfg_for(T))
            ok = True
            for _ in range(T):
                arm = pol.select()
                if any(pol.index_of(a) < means[a] for a in range(5)):
                    ok = False
                    break
                pol.update(arm, int(rng.random() < means[arm]))
            covered += ok
        assert covered / runs >= 1 - 1 / T

    def test_rollback_bit_identical(self):
        pol = UCB1Policy(range(4), cfg_for(50))
        for _ in range(10):
            pol.update(pol.select(), 1)
        before = (pol.n.copy(), pol.r.copy(), pol._last)
        token = pol.snapshot()
        arm = pol.select()
        pol.update(arm, 0)
        pol.restore(token)
        np.testing.assert_array_equal(pol.n, before[0])
        np.testing.assert_array_equal(pol.r, before[1])
        assert pol._last == before[2]
        assert pol.select() == arm  # same state, deterministic index


class TestEXP3:
    def test_uniform_weights_uniform_probs(self):
        pol = EXP3Policy(range(4), cfg_for(100), np.random.default_rng(0), gamma=0.5)
        np.testing.assert_allclose(pol.probabilities(), 0.25)

    def test_zero_reward_leaves_weights(self):
        pol = EXP3Policy(range(3), cfg_for(100), np.random.default_rng(1), gamma=0.3)
        arm = pol.select()
        pol.update(arm, 0)
        np.testing.assert_array_equal(pol.w, np.ones(3))

    def test_hand_update(self):
        pol = EXP3Policy([0, 1], cfg_for(100), np.random.default_rng(2), gamma=0.5)
        while True:
            arm = pol.select()
            if arm == 0:
                break
            pol.update(arm, 0)
        pol.update(0, 1)
        # p0 = 0.5, so the weight factor is exp(0.5 * (1/0.5) / 2) = e^0.5
        assert pol.w[0] == pytest.approx(math.exp(0.5))
        assert pol.w[1] == 1.0

    def test_probabilities_sum_and_floor(self):
        rng = np.random.default_rng(3)
        pol = EXP3Policy(range(5), cfg_for(1000), rng)
        for _ in range(500):
            arm = pol.select()
            pol.update(arm, int(rng.random() < 0.7))
        p = pol.probabilities()
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert (p >= pol.gamma / 5 - 1e-15).all()

    def test_default_gamma_formula(self):
        got = default_exp3_gamma(10, 10_000)
        want = min(1.0, math.sqrt(10 * math.log(10) / ((math.e - 1) * 10_000)))
        assert got == pytest.approx(want)
        assert 0 < got <= 1

    def test_rollback_restores_weights(self):
        rng = np.random.default_rng(4)
        pol = EXP3Policy(range(3), cfg_for(100), rng, gamma=0.4)
        for _ in range(5):
            pol.update(pol.select(), 1)
        before = pol.w.copy()
        token = pol.snapshot()
        pol.update(pol.select(), 1)
        pol.restore(token)
        np.testing.assert_array_equal(pol.w, before)


class TestDoubling:
    def test_phase_boundaries(self):
        # rounds 1 | 2..3 | 4..7 | 8..15 run phases 0,1,2,3
        seen = []
        pol = DoublingPolicy(lambda T: UCB1Policy(range(2), cfg_for(T)))
        for _ in range(15):
            seen.append(pol.phase)
            pol.update(pol.select(), 0)
        assert seen == [0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3]

    def test_instance_count_after_t_rounds(self):
        pol = DoublingPolicy(lambda T: UCB1Policy(range(2), cfg_for(T)))
        instances = {id(pol.inner)}
        for t in range(1, 101):
            pol.update(pol.select(), 0)
            instances.add(id(pol.inner))
        assert len(instances) == math.floor(math.log2(100)) + 1

    def test_fresh_state_each_phase(self):
        pol = DoublingPolicy(lambda T: UCB1Policy(range(3), cfg_for(T)))
        for _ in range(3):
            pol.update(pol.select(), 1)
        assert pol.inner.n.sum() == 0  # phase 2 just started

    def test_identifies_best_arm_across_seeds(self):
        # optimistic inner: the damped radius separates a 0.3 gap within a
        # 1024-round phase, which the full 4 ln(T) radius cannot
        means = [0.2, 0.5]
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            pol = DoublingPolicy(
                lambda T: UCB1Policy(range(2), cfg_for(T, optimistic=True)))
            pulls = [0, 0]
            for t in range(1 << 11):
                arm = pol.select()
                if t >= (1 << 10):  # final full phase
                    pulls[arm] += 1
                pol.update(arm, int(rng.random() < means[arm]))
            wins += pulls[1] > 0.9 * sum(pulls)
        assert wins == 20

    def test_rollback_across_phase_boundary(self):
        pol = DoublingPolicy(lambda T: UCB1Policy(range(2), cfg_for(T)))
        pol.update(pol.select(), 0)  # ends phase 0
        pol.update(pol.select(), 0)
        token = pol.snapshot()
        inner_before = pol.inner
        n_before = pol.inner.n.copy()
        pol.update(pol.select(), 1)  # ends phase 1, swaps inner
        assert pol.inner is not inner_before
        pol.restore(token)
        assert pol.inner is inner_before
        np.testing.assert_array_equal(pol.inner.n, n_before)
