import math

import pytest
import sympy as sp
from gmpy2 import mpq

from bfpd.harness import gen_klevel
from bfpd.klevel import (
    DEFAULT_ALPHA,
    BadTheta,
    BestInConfig,
    InvalidAlpha,
    InvalidAlphaBeta,
    RegimeMismatch,
    SortRejectConfig,
    best_in_alpha,
    best_in_beta,
    greedy_best_in,
    large_market_alpha,
    largeness,
    largeness_upper_bound,
    ratio_beats,
    run_rule,
    sort_and_reject,
)
from bfpd.knapsack import brute_opt_integral, greedy_fractional
from bfpd.model import KLevelInstance, Regime, ValidationError

from conftest import best_in_pair, symmetric, two_agent_all_in


def sym(q):
    return sp.Rational(int(q.numerator), int(q.denominator))


class TestConfigs:
    def test_default_alpha_certificates(self):
        cfg = SortRejectConfig()
        assert cfg.alpha == mpq(267949, 1000000)
        assert cfg.budget_feasible
        assert sym(DEFAULT_ALPHA) < 2 - sp.sqrt(3)
        assert sym(DEFAULT_ALPHA + mpq(1, 10**6)) > 2 - sp.sqrt(3)

    @pytest.mark.parametrize("alpha", [0, -1, "2/5", "1/2", 2])
    def test_rejects_out_of_range(self, alpha):
        with pytest.raises(InvalidAlpha):
            SortRejectConfig(alpha)

    def test_large_alpha_not_budget_safe(self):
        assert not SortRejectConfig("0.3").budget_feasible

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 7])
    def test_best_in_alpha_is_maximal_grid_point(self, k):
        a = best_in_alpha(k)
        root = (3 + k - sp.sqrt(9 + 2 * k + k * k)) / (2 * k)
        assert sym(a) <= root
        assert sym(a + mpq(1, 10**6)) > root
        cfg = BestInConfig.certified(k)
        assert cfg.beta == (1 - 2 * a) / (a * k + 1)

    def test_best_in_k1_values(self):
        a = best_in_alpha(1)
        assert a == mpq(267949, 1000000)
        b = best_in_beta(a, 1)
        assert b == (1 - 2 * a) / (a + 1)
        assert abs(float(b) - (math.sqrt(3) - 1) / 2) < 1e-5

    def test_best_in_validation(self):
        with pytest.raises(InvalidAlphaBeta):
            BestInConfig(mpq(1, 4), mpq(1, 3), 2)
        with pytest.raises(InvalidAlphaBeta):
            BestInConfig.certified(2, "0.3")
        with pytest.raises(InvalidAlphaBeta):
            BestInConfig.certified(0)


class TestLargeMarketAlpha:
    @pytest.mark.parametrize("theta", ["0.04", "0.1", "0.2", "1/4", "0.9"])
    def test_certificate_and_maximality(self, theta):
        t = mpq(theta) if "/" in theta else mpq(sp.Rational(theta).p, sp.Rational(theta).q)
        a = large_market_alpha(theta)
        assert t + a <= (1 - a) ** 2
        nxt = a + mpq(1, 10**7)
        assert t + nxt > (1 - nxt) ** 2
        root = (3 - sp.sqrt(5 + 4 * sym(t))) / 2
        assert abs(float(sym(a) - root)) <= 1e-6

    def test_quarter(self):
        a = large_market_alpha("1/4")
        assert a == mpq(2752551, 10**7)
        assert sym(a) < (3 - sp.sqrt(6)) / 2

    def test_small_theta_limit(self):
        a = large_market_alpha(mpq(1, 10**9))
        assert mpq(381965, 10**6) < a < mpq(381967, 10**6)

    @pytest.mark.parametrize("theta", [0, 1, -1, 2])
    def test_bad_theta(self, theta):
        with pytest.raises(BadTheta):
            large_market_alpha(theta)


class TestSortAndReject:
    def test_if_branch(self):
        alloc, tr = sort_and_reject(two_agent_all_in())
        assert tr.took_if_branch and tr.i_star == 0
        assert alloc.quantities == (2, 0)
        assert tr.opt_minus == (4, 6)
        assert tr.x_star == (mpq(3, 2), 1)

    def test_else_branch_removals(self):
        inst = symmetric()
        alloc, tr = sort_and_reject(inst)
        assert not tr.took_if_branch
        assert tr.initial_floor == (1, 1, 1, 1, 0)
        assert tr.removals == ((3, 1), (2, 1))
        assert alloc.quantities == (1, 1, 0, 0, 0)
        assert inst.value(alloc.quantities) >= DEFAULT_ALPHA * 4

    def test_single_agent(self):
        alloc, tr = sort_and_reject(KLevelInstance.build([1], [[1, 1, 1]], 3))
        assert alloc.quantities == (3,)
        assert tr.took_if_branch

    def test_regime_and_validation(self):
        with pytest.raises(RegimeMismatch):
            sort_and_reject(best_in_pair())
        with pytest.raises(ValidationError):
            sort_and_reject(KLevelInstance.build([1], [[1, 2]], 2))

    def test_trace_json(self):
        js = sort_and_reject(symmetric())[1].to_json()
        assert js["branch"] == "else"
        assert js["removals"] == [[3, 1], [2, 1]]
        assert js["opt_f"] == "4"

    @pytest.mark.parametrize("seed", range(80))
    def test_structure_on_random(self, seed):
        inst = gen_klevel(seed, 1 + seed % 5, 1 + seed % 4)
        cfg = SortRejectConfig()
        alloc, tr = sort_and_reject(inst, cfg)
        x = alloc.ints()
        sol = greedy_fractional(inst)
        assert tr.opt_f == sol.value
        value = inst.value(alloc.quantities)
        assert value >= cfg.alpha * tr.opt_f
        if tr.took_if_branch:
            assert x == tuple(inst.k if i == tr.i_star else 0 for i in range(inst.n))
        else:
            assert all(xi <= fi for xi, fi in zip(x, sol.floor()))


class TestBestIn:
    def test_example(self):
        inst = best_in_pair()
        alloc, tr = greedy_best_in(inst)
        assert tr.took_if_branch
        assert alloc.quantities == (1, 0)
        assert inst.value(alloc.quantities) == 5
        assert brute_opt_integral(inst) == 6
        assert mpq(6, 5) <= inst.k + 2

    def test_single_affordable_level(self):
        inst = KLevelInstance.build([1], [[1, 0]], 1, Regime.BEST_IN)
        alloc, _ = greedy_best_in(inst)
        assert alloc.quantities == (1,)

    def test_mismatches(self):
        with pytest.raises(RegimeMismatch):
            greedy_best_in(two_agent_all_in())
        with pytest.raises(InvalidAlphaBeta):
            greedy_best_in(best_in_pair(), BestInConfig.certified(3))

    @pytest.mark.parametrize("seed", range(60))
    def test_guarantee_against_brute(self, seed):
        inst = gen_klevel(seed, 1 + seed % 5, 1 + seed % 4, Regime.BEST_IN)
        cfg = BestInConfig.certified(inst.k)
        alloc, tr = run_rule(inst, cfg)
        assert inst.value(alloc.quantities) >= cfg.alpha * brute_opt_integral(inst)
        assert sum(c * x for c, x in zip(inst.costs, alloc.quantities)) <= inst.budget


class TestTieBreaks:
    def test_empty_market_beats_any_ratio(self):
        assert ratio_beats(mpq(1), mpq(0), mpq(100), mpq(1))
        assert not ratio_beats(mpq(100), mpq(1), mpq(1), mpq(0))
        assert ratio_beats(mpq(2), mpq(0), mpq(1), mpq(0))
        assert not ratio_beats(mpq(1), mpq(2), mpq(2), mpq(4))


class TestLargeness:
    def test_symmetric(self):
        assert largeness(symmetric()) == mpq(1, 4)

    def test_single_agent(self):
        inst = KLevelInstance.build([1], [[3, 1]], 2)
        assert largeness(inst) == mpq(3, 4)

    def test_concentrated(self):
        inst = KLevelInstance.build([1, 1], [[5], [0]], 1)
        assert largeness(inst) == 1

    def test_no_value(self):
        with pytest.raises(BadTheta):
            largeness(KLevelInstance.build([1], [[0]], 1))

    @pytest.mark.parametrize("seed", range(40))
    def test_upper_bound_dominates(self, seed):
        inst = gen_klevel(seed, 1 + seed % 5, 1 + seed % 3)
        if all(a.marginal(1) == 0 for a in inst.agents):
            return
        assert largeness_upper_bound(inst) >= largeness(inst)
