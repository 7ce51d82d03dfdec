"""Randomised properties over hypothesis-generated instances, all checked exactly."""
from fractions import Fraction

from gmpy2 import mpq
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bfpd.harness import AuditReport, check_core_properties, check_truthfulness
from bfpd.klevel import BestInConfig, SortRejectConfig, run_rule
from bfpd.knapsack import brute_opt_integral, greedy_fractional
from bfpd.mechanisms import run_mechanism
from bfpd.model import DivisibleInstance, KLevelInstance, Regime, dumps_instance, loads_instance
from bfpd.payments import bisect_threshold_oracle

SETTINGS = settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])

unit = st.fractions(min_value=Fraction(1, 50), max_value=1, max_denominator=60)
value = st.fractions(min_value=0, max_value=5, max_denominator=12)


def q(f: Fraction):
    return mpq(f.numerator, f.denominator)


@st.composite
def klevel_instances(draw, regime=Regime.ALL_IN):
    n = draw(st.integers(1, 4))
    k = draw(st.integers(1, 3))
    cap = mpq(1, k) if regime is Regime.ALL_IN else mpq(1)
    costs = [q(draw(unit)) * cap for _ in range(n)]
    rows = [sorted((q(draw(value)) for _ in range(k)), reverse=True) for _ in range(n)]
    return KLevelInstance.build(costs, rows, 1, regime, k)


@st.composite
def linear_instances(draw):
    n = draw(st.integers(1, 5))
    costs = [q(draw(unit)) for _ in range(n)]
    slopes = [q(draw(value)) for _ in range(n)]
    return DivisibleInstance.linear(costs, slopes, 1)


@SETTINGS
@given(klevel_instances())
def test_sort_reject_core(inst):
    rep = check_core_properties(run_mechanism("sort-reject", inst))
    assert rep.ok, rep.summary_table()


@SETTINGS
@given(klevel_instances(Regime.BEST_IN))
def test_best_in_core(inst):
    rep = check_core_properties(run_mechanism("best-in", inst))
    assert rep.ok, rep.summary_table()


@SETTINGS
@given(linear_instances())
def test_prune_assign_core(inst):
    rep = check_core_properties(run_mechanism("prune-assign", inst))
    assert rep.ok, rep.summary_table()


@settings(max_examples=40, deadline=None)
@given(klevel_instances())
def test_truthful_sort_reject(inst):
    rep = check_truthfulness(run_mechanism("sort-reject", inst), grid=3)
    assert rep.ok, rep.summary_table()


@settings(max_examples=40, deadline=None)
@given(linear_instances())
def test_truthful_prune_assign(inst):
    rep = check_truthfulness(run_mechanism("prune-assign", inst), grid=3)
    assert rep.ok, rep.summary_table()


@settings(max_examples=60, deadline=None)
@given(klevel_instances(), st.booleans())
def test_thresholds_inside_bisection(inst, best_in):
    if best_in:
        inst = KLevelInstance(inst.agents, inst.budget, inst.k, Regime.BEST_IN)
        cfg = BestInConfig.certified(inst.k)
    else:
        cfg = SortRejectConfig()
    run = run_mechanism("best-in" if best_in else "sort-reject", inst, cfg)
    for i, cp in enumerate(run.payments.per_agent):
        if cp is None:
            continue
        for level, p in enumerate(cp.per_level, start=1):
            lo, hi = bisect_threshold_oracle(cfg, inst, i, level, mpq(1, 2**24))
            assert lo <= p <= hi


@SETTINGS
@given(klevel_instances())
def test_greedy_bounds_integral(inst):
    sol = greedy_fractional(inst)
    opt_i = brute_opt_integral(inst)
    assert inst.value(sol.floor()) <= opt_i <= sol.value
    assert sum(1 for x in sol.x if x.denominator != 1) <= 1


@SETTINGS
@given(klevel_instances())
def test_json_roundtrip(inst):
    assert loads_instance(dumps_instance(inst)) == inst


@SETTINGS
@given(klevel_instances(), st.integers(0, 3), st.fractions(min_value=Fraction(1, 100), max_value=1, max_denominator=100))
def test_lower_bid_never_loses_levels(inst, agent, frac):
    agent %= inst.n
    cfg = SortRejectConfig()
    c = inst.agents[agent].cost
    lower = c * q(frac)
    here = run_rule(inst, cfg)[0].ints()[agent]
    there = run_rule(inst.with_cost(agent, lower), cfg)[0].ints()[agent]
    assert there >= here


def test_report_accumulates():
    rep = AuditReport("sort-reject")
    rep.record("a", True, KLevelInstance.build([1], [[1]], 1))
    assert rep.ok
