import json
from fractions import Fraction

import pytest
from gmpy2 import mpq

from bfpd.model import (
    Allocation,
    DivisibleInstance,
    KLevelInstance,
    OutOfDomain,
    Outcome,
    PiecewiseLinearConcave,
    Q,
    Regime,
    ValidationError,
    decimal12,
    dumps_instance,
    fmt,
    instance_from_json,
    loads_instance,
    validate_divisible,
    validate_klevel,
)

from conftest import piecewise, three_linear, two_agent_all_in


class TestScalars:
    def test_parse_forms(self):
        assert Q("3/6") == mpq(1, 2)
        assert Q("0.125") == mpq(1, 8)
        assert Q(" -2/4 ") == mpq(-1, 2)
        assert Q(Fraction(2, 3)) == mpq(2, 3)
        assert Q(7) == mpq(7)

    def test_canonical_form(self):
        q = Q("4/-8")
        assert q.denominator > 0
        assert fmt(q) == "-1/2"
        assert fmt(Q("6/3")) == "2"

    @pytest.mark.parametrize("bad", ["", "1/0", "abc", "1/x", "nan", "inf"])
    def test_malformed(self, bad):
        with pytest.raises(ValueError):
            Q(bad)

    def test_floats_refused(self):
        with pytest.raises(TypeError):
            Q(0.5)
        with pytest.raises(TypeError):
            Q(True)

    def test_decimal_rendering(self):
        assert decimal12(mpq(1, 3)) == "0.333333333333"
        assert decimal12(mpq(2)) == "2"
        assert decimal12(mpq(-22, 7)) == "-3.14285714286"


class TestKLevelValidation:
    def test_valid_boundary(self):
        inst = KLevelInstance.build([1], [[3, 1]], 2, Regime.ALL_IN)
        assert validate_klevel(inst) is inst

    def test_nonconcave(self):
        with pytest.raises(ValidationError) as err:
            validate_klevel(KLevelInstance.build([1], [[1, 3]], 2, Regime.ALL_IN))
        assert err.value.kinds() == {"NonConcave"}

    def test_regime_boundary(self):
        with pytest.raises(ValidationError) as err:
            validate_klevel(KLevelInstance.build([1], [[1, 1]], 1, Regime.ALL_IN))
        assert err.value.kinds() == {"CostTooHigh"}
        validate_klevel(KLevelInstance.build([1], [[1, 1]], 1, Regime.BEST_IN))

    def test_collects_every_issue(self):
        inst = KLevelInstance.build([0, 1], [[1], [1, 2]], -1, Regime.ALL_IN, k=1)
        with pytest.raises(ValidationError) as err:
            validate_klevel(inst)
        assert {"NonPositive", "BadShape"} <= err.value.kinds()
        report = err.value.to_json()
        assert report["error"] == "validation"
        assert all({"kind", "agent", "message"} <= set(i) for i in report["issues"])

    def test_empty(self):
        with pytest.raises(ValidationError) as err:
            validate_klevel(KLevelInstance((), mpq(1), 1))
        assert "EmptyInstance" in err.value.kinds()

    def test_values(self):
        inst = two_agent_all_in()
        assert inst.agents[0].value(0) == 0
        assert inst.agents[0].value(2) == 6
        assert inst.value([mpq(3, 2), 1]) == 8
        assert inst.cap == mpq(5, 4)


class TestValuations:
    def test_linear_interpolation(self):
        assert PiecewiseLinearConcave.linear(2)(mpq(1, 2)) == 1

    def test_piecewise_interpolation(self):
        v = piecewise([(0, 0), ("1/2", 3), (1, 4)])
        assert v(mpq(3, 4)) == mpq(7, 2)
        assert v(0) == 0
        assert v(1) == 4
        assert v(mpq(1, 2)) == 3

    def test_domain(self):
        with pytest.raises(OutOfDomain):
            PiecewiseLinearConcave.linear(1)(mpq(3, 2))

    def test_shape_problems(self):
        assert piecewise([(0, 0), ("1/2", 1), (1, 3)]).problems() == ["slopes increase (not concave)"]
        assert "values decrease" in piecewise([(0, 0), ("1/2", 2), (1, 1)]).problems()
        assert piecewise([(0, 0), ("1/2", 1), ("1/2", 2), (1, 3)]).problems()
        assert piecewise([(0, 1), (1, 2)]).problems() == ["first breakpoint must be (0, 0)"]

    def test_divisible_validation(self):
        validate_divisible(three_linear())
        bad = DivisibleInstance.linear([5], [1], 4)
        with pytest.raises(ValidationError) as err:
            validate_divisible(bad)
        assert err.value.kinds() == {"CostTooHigh"}


class TestAllocation:
    def test_level_mode_rejects_fractions(self):
        with pytest.raises(ValueError):
            Allocation(tuple([mpq(1, 2)]), Allocation.levels([0], 2).mode, 2)

    def test_bounds(self):
        with pytest.raises(ValueError):
            Allocation.levels([3], 2)
        with pytest.raises(ValueError):
            Allocation.fractions([mpq(3, 2)])

    def test_winners(self):
        a = Allocation.fractions([0, mpq(1, 3), 1])
        assert a.winners() == (1, 2)

    def test_outcome_json(self):
        out = Outcome(Allocation.levels([1, 0], 1), (mpq(1, 2), mpq(0)), mpq(3), {"set": frozenset({2, 1})})
        js = out.to_json()
        assert js["payments"] == ["1/2", "0"]
        assert js["total_payment"] == "1/2"
        assert js["diagnostics"]["set"] == [1, 2]


class TestInstanceJSON:
    def test_roundtrip_klevel(self):
        inst = two_agent_all_in()
        again = loads_instance(dumps_instance(inst))
        assert again == inst

    def test_roundtrip_divisible(self):
        inst = DivisibleInstance(
            three_linear().agents[:1]
            + (three_linear().agents[1].__class__(1, mpq(2), piecewise([(0, 0), ("1/3", 1), (1, 2)])),),
            mpq(4),
        )
        assert loads_instance(dumps_instance(inst)) == inst

    def test_schema_file(self, data_dir):
        inst = loads_instance((data_dir / "divisible_pl.json").read_text())
        assert isinstance(inst, DivisibleInstance)
        assert inst.agents[0].valuation(mpq(3, 4)) == mpq(7, 2)

    @pytest.mark.parametrize(
        "obj",
        [
            [],
            {"model": "k-level"},
            {"model": "tree", "budget": "1", "agents": []},
            {"model": "k-level", "budget": "1", "k": "2", "regime": "all-in", "agents": []},
            {"model": "k-level", "budget": "1", "k": 1, "regime": "none", "agents": []},
            {"model": "k-level", "budget": 0.5, "k": 1, "regime": "all-in", "agents": []},
            {"model": "k-level", "budget": "1", "k": 1, "regime": "all-in", "agents": ["x"]},
            {"model": "divisible", "budget": "1", "agents": [{"cost": "1", "valuation": {"type": "cubic"}}]},
            {"model": "divisible", "budget": "1", "agents": [{"cost": "1", "valuation": {"type": "piecewise", "breakpoints": [["0"]]}}]},
        ],
    )
    def test_bad_schema(self, obj):
        with pytest.raises(ValidationError) as err:
            instance_from_json(obj)
        assert err.value.kinds() == {"BadSchema"}

    def test_bad_json(self):
        with pytest.raises(ValidationError) as err:
            loads_instance("{not json")
        assert err.value.kinds() == {"BadJSON"}

    def test_dump_is_sorted_and_stable(self):
        text = dumps_instance(two_agent_all_in())
        assert text == dumps_instance(loads_instance(text))
        assert list(json.loads(text)) == sorted(json.loads(text))
