import pytest
from gmpy2 import mpq

from bfpd.harness import gen_klevel
from bfpd.klevel import BestInConfig, SortRejectConfig, run_rule
from bfpd.model import Regime
from bfpd.payments import (
    NonMonotoneDetected,
    StepFunction,
    allocation_curve,
    bisect_threshold_oracle,
    critical_payments,
    klevel_payments,
    myerson_payment,
)

from conftest import best_in_pair, symmetric, two_agent_all_in

TOL = mpq(1, 2**30)


def rule_levels(cfg, inst, agent, z):
    return run_rule(inst.with_cost(agent, z), cfg)[0].ints()[agent]


class TestStepFunction:
    def test_evaluation_and_area(self):
        f = StepFunction(mpq(1, 10), mpq(2), (mpq(3, 2), mpq(1, 2)))
        assert f(mpq(1, 4)) == 2
        assert f(1) == 1
        assert f(mpq(7, 4)) == 0
        assert f(3) == 0
        assert f.breakpoints == ((mpq(1, 2), 2), (mpq(3, 2), 1))
        # 2 * (1/2 - 1/4) + 1 * (3/2 - 1/2)
        assert f.integral(mpq(1, 4)) == mpq(3, 2)
        assert f.integral(2) == 0

    def test_point_values_override(self):
        f = StepFunction(mpq(1, 10), mpq(2), (mpq(1),), ((mpq(1), 1),))
        assert f(1) == 1
        assert f(mpq(1) + mpq(1, 10**9)) == 0

    def test_rejects_increasing(self):
        with pytest.raises(NonMonotoneDetected):
            StepFunction(mpq(1, 10), mpq(2), (mpq(1, 2), mpq(1)))

    def test_payment_forms_agree(self):
        f = StepFunction(mpq(1, 10), mpq(2), (mpq(3, 2), mpq(1, 2)))
        cp = critical_payments(f, mpq(1, 4))
        assert cp.per_level == (mpq(3, 2), mpq(1, 2))
        assert cp.total == myerson_payment(f, mpq(1, 4)) == 2
        assert myerson_payment(f, 3) == 0
        assert f.to_json()["breakpoints"] == [["1/2", 2], ["3/2", 1]]


class TestSpecExamples:
    def test_symmetric_curve(self):
        cfg = SortRejectConfig()
        curve = allocation_curve(cfg, symmetric(), 0, start=mpq(1, 100))
        for z, want in [(mpq(1, 2), 1), (1, 1), (1 + mpq(1, 1000), 0), (2, 0)]:
            assert curve(z) == want == rule_levels(cfg, symmetric(), 0, z)
        assert curve.thresholds == (1,)

    def test_symmetric_payments(self):
        inst = symmetric()
        cfg = SortRejectConfig()
        alloc, _ = run_rule(inst, cfg)
        pay = klevel_payments(cfg, inst, alloc)
        assert pay.payments == (1, 1, 0, 0, 0)
        assert sum(pay.payments) <= inst.budget

    def test_if_branch_payments_hit_budget(self):
        inst = two_agent_all_in()
        cfg = SortRejectConfig()
        curve = allocation_curve(cfg, inst, 0, start=mpq(1, 100))
        assert curve.thresholds == (mpq(5, 4), mpq(5, 4))
        assert curve(mpq(5, 4)) == 2
        assert curve(mpq(5, 4) + mpq(1, 1000)) == 0
        pay = klevel_payments(cfg, inst, run_rule(inst, cfg)[0])
        assert pay.per_agent[0].per_level == (mpq(5, 4), mpq(5, 4))
        assert pay.payments == (mpq(5, 2), 0)
        assert sum(pay.payments) == inst.budget

    def test_loser_curve(self):
        inst = two_agent_all_in()
        curve = allocation_curve(SortRejectConfig(), inst, 1)
        assert curve.thresholds == ()
        assert curve(1) == 0

    def test_bisection_examples(self):
        cfg = SortRejectConfig()
        lo, hi = bisect_threshold_oracle(cfg, symmetric(), 0, 1, mpq(1, 2**20))
        assert lo <= 1 <= hi and hi - lo <= mpq(1, 2**20)
        assert bisect_threshold_oracle(cfg, two_agent_all_in(), 0, 2, TOL) == (mpq(5, 4), mpq(5, 4))
        assert bisect_threshold_oracle(cfg, two_agent_all_in(), 1, 1, TOL) is None
        with pytest.raises(ValueError):
            bisect_threshold_oracle(cfg, symmetric(), 0, 1, 0)

    def test_curve_start_domain(self):
        with pytest.raises(ValueError):
            allocation_curve(SortRejectConfig(), symmetric(), 0, start=mpq(5))


def _configs(inst):
    if inst.regime is Regime.BEST_IN:
        return BestInConfig.certified(inst.k)
    return SortRejectConfig()


@pytest.mark.parametrize("regime", [Regime.ALL_IN, Regime.BEST_IN])
@pytest.mark.parametrize("seed", range(40))
def test_engine_matches_bisection(seed, regime):
    inst = gen_klevel(1000 + seed, 2 + seed % 4, 1 + seed % 4, regime)
    cfg = _configs(inst)
    alloc, _ = run_rule(inst, cfg)
    pay = klevel_payments(cfg, inst, alloc)
    for i, cp in enumerate(pay.per_agent):
        if cp is None:
            assert pay.payments[i] == 0
            continue
        c = inst.agents[i].cost
        for level, p in enumerate(cp.per_level, start=1):
            assert c <= p <= inst.cap
            lo, hi = bisect_threshold_oracle(cfg, inst, i, level, TOL)
            assert lo <= p <= hi


@pytest.mark.parametrize("seed", range(40))
def test_curve_agrees_with_rule_everywhere_probed(seed):
    inst = gen_klevel(2000 + seed, 2 + seed % 4, 1 + seed % 3)
    cfg = SortRejectConfig()
    for i in range(inst.n):
        start = inst.cap / 64
        curve = allocation_curve(cfg, inst, i, start=start)
        probes = {inst.cap * mpq(t, 37) for t in range(1, 38)}
        for t in curve.thresholds:
            probes |= {t, t - mpq(1, 10**9), t + mpq(1, 10**9)}
        for z in sorted(p for p in probes if start <= p <= inst.cap):
            assert curve(z) == rule_levels(cfg, inst, i, z)


def test_best_in_payment_bounded_by_budget():
    inst = best_in_pair()
    cfg = BestInConfig.certified(inst.k)
    pay = klevel_payments(cfg, inst, run_rule(inst, cfg)[0])
    assert pay.payments[1] == 0
    assert inst.agents[0].cost <= pay.payments[0] <= inst.budget
