import math

import numpy as np
import pytest
from scipy import stats

from levylab import (NO_ENTRANCE, NOT_SETTLED, first_exit_nonpositive, first_passage_above, last_exit_below,
                     make_model, reverse_at, shift_at_entrance, simulate)
from levylab.errors import DomainError
from levylab.fluctuation import _passage_from
from levylab.selftest import line

EMPTY = np.empty(0)


def jump_path():
    from levylab import PathSkeleton
    # 0.5 flat on [0, 0.2), then a jump down to -0.3
    return PathSkeleton(0.5, 0.15, np.array([0.5, 0.5, -0.3]), np.array([0.2]), np.array([0.5]),
                        np.array([-0.8]), 0.3)


class TestSimulate:
    def test_deterministic_line(self):
        m = make_model({"family": "Custom", "sigma": 0.0, "drift": -1.0})
        p = simulate(m, 1.0, 1.0, 1e-3, seed=0)
        t = np.linspace(0, 1, 11)
        np.testing.assert_allclose(p.value_at(t), 1 - t, atol=1e-12)

    def test_reproducible(self, kou):
        a = simulate(kou, 0.0, 2.0, 1e-3, seed=42)
        b = simulate(kou, 0.0, 2.0, 1e-3, seed=42)
        np.testing.assert_array_equal(a.grid_values, b.grid_values)
        np.testing.assert_array_equal(a.jump_sizes, b.jump_sizes)

    def test_terminal_law_gaussian(self, bm):
        # terminal values over seeds against N(0, 1)
        finals = np.array([simulate(bm, 0.0, 1.0, 1e-2, seed=s).value_at(1.0) for s in range(4000)])
        assert stats.kstest(finals, "norm").statistic < 1.63 / math.sqrt(finals.size)

    def test_poisson_jump_counts(self, kou):
        counts = np.array([simulate(kou, 0.0, 3.0, 1e-2, seed=s).jump_times.size for s in range(3000)])
        k = np.arange(0, 9)
        obs = np.array([np.sum(counts == i) for i in k[:-1]] + [np.sum(counts >= k[-1])])
        exp_p = np.append(stats.poisson.pmf(k[:-1], 3.0), stats.poisson.sf(k[-1] - 1, 3.0))
        assert stats.chisquare(obs, exp_p * counts.size).pvalue > 0.01

    def test_jump_ledger_consistent(self, kou):
        p = simulate(kou, 0.0, 5.0, 1e-3, seed=1)
        for t, left, size in p.jump_ledger:
            assert p.value_at(t) == pytest.approx(left + size)
            assert p.left_limit_at(t) == pytest.approx(left)


class TestPassages:
    def test_exit_of_line(self):
        rec = first_exit_nonpositive(line(1.0, -1.0, 2.0))
        assert rec.time == pytest.approx(1.0) and not rec.crossed_by_jump

    def test_exit_by_jump(self):
        rec = first_exit_nonpositive(jump_path())
        assert rec.time == pytest.approx(0.2)
        assert rec.undershoot == pytest.approx(0.5)
        assert rec.overshoot == pytest.approx(0.3)
        assert rec.crossed_by_jump

    def test_passage_above_line(self):
        rec = first_passage_above(line(0.0, 1.0, 1.0), 0.5)
        assert rec.time == pytest.approx(0.5) and rec.overshoot == 0.0

    def test_already_above(self):
        with pytest.raises(DomainError):
            first_passage_above(line(1.0, 1.0, 1.0), 0.5)

    def test_spectrally_negative_overshoot_zero(self, snexp):
        kinds, _, under, over = _passage_from(snexp, -1.0, 2000, 3, 9, 1e6)
        assert np.all(over[kinds > 0] == 0.0)

    def test_reflection_principle(self, bm):
        # P(T <= 1) from 1 is 2(1 - Phi(1)); the compiled passage routine with its bridge correction
        hits = 0
        n = 4000
        for s in range(n):
            rec = first_exit_nonpositive(simulate(bm, 1.0, 1.0, 1e-3, seed=10_000 + s), seed=s)
            hits += rec.detected
        se = math.sqrt(0.3173 * 0.6827 / n)
        assert abs(hits / n - 0.31731050786291415) < 4 * se

    def test_kou_overshoot_memoryless(self, kou):
        kinds, _, _, over = _passage_from(kou, -5.0, 20_000, 5, 11, 1e6)
        pos = over[(kinds == 2) & (over > 0)]
        assert stats.kstest(pos, "expon", args=(0, 0.5)).pvalue > 0.001


class TestLastExit:
    def test_line(self):
        assert last_exit_below(line(0.0, 1.0, 2.0), 0.5) == pytest.approx(0.5)

    def test_not_settled(self):
        assert last_exit_below(line(0.0, 0.1, 2.0), 0.5) is NOT_SETTLED


class TestReversal:
    def test_line(self):
        rev = reverse_at(line(0.0, 1.0, 1.0), 1.0)
        s = np.linspace(0, 1, 11)
        np.testing.assert_allclose(rev.value_at(s), 1 - s, atol=1e-12)

    def test_involution(self, kou):
        p = simulate(kou, 0.0, 2.0, 1e-3, seed=7)
        back = reverse_at(reverse_at(p, 2.0), 2.0)
        s = np.linspace(0.0005, 1.9995, 200)
        keep = np.all(np.abs(s[:, None] - p.jump_times[None, :]) > 2e-3, axis=1)
        np.testing.assert_allclose(back.value_at(s[keep]), p.value_at(s[keep]), atol=1e-9)

    def test_ledger_signs(self, kou):
        p = simulate(kou, 0.0, 2.0, 1e-3, seed=8)
        rev = reverse_at(p, 2.0)
        np.testing.assert_allclose(np.sort(rev.jump_sizes), np.sort(-p.jump_sizes))


class TestEntranceShift:
    def test_line(self):
        sh = shift_at_entrance(line(-1.0, 1.0, 3.0))
        assert sh.t0 == pytest.approx(-1.0)
        assert sh.value_at(0.0) == pytest.approx(0.0, abs=1e-12)

    def test_no_entrance(self):
        assert shift_at_entrance(line(-1.0, -1.0, 1.0)) is NO_ENTRANCE

    def test_consistent_with_passage(self, kou):
        p = simulate(kou, -1.0, 20.0, 1e-3, seed=3)
        rec = first_passage_above(p, 0.0)
        sh = shift_at_entrance(p)
        assert sh.value_at(0.0) == pytest.approx(rec.overshoot, abs=1e-9)
