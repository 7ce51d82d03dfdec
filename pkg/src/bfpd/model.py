"""Domain types for k-level and divisible procurement instances.

Every numeric quantity is an exact rational (``gmpy2.mpq``).  Inputs given as
strings accept both decimal notation (``"0.25"``) and ``"p/q"``; output always
uses the canonical reduced form produced by :func:`fmt`.
"""
from __future__ import annotations

import enum
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence, Union

from gmpy2 import mpq

Scalar = type(mpq(0))
ScalarLike = Union[int, str, Fraction, "mpq"]

ZERO = mpq(0)
ONE = mpq(1)


def Q(value: ScalarLike, den: int | None = None) -> Scalar:
    """Coerce ``value`` (or ``value/den``) to an exact rational.

    Floats are refused: they would smuggle binary rounding into the mechanisms.
    """
    if den is not None:
        return mpq(value, den)
    if isinstance(value, Scalar):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return mpq(value)
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, str):
        return parse_scalar(value)
    if isinstance(value, float):
        raise TypeError(f"refusing float {value!r}; pass a string or Fraction")
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


def parse_scalar(text: str) -> Scalar:
    s = text.strip()
    if not s:
        raise ValueError("empty rational")
    if "/" in s:
        num, _, den = s.partition("/")
        try:
            n, d = int(num), int(den)
        except ValueError:
            raise ValueError(f"malformed rational {text!r}") from None
        if d == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return mpq(n, d)
    try:
        dec = Decimal(s)
    except InvalidOperation:
        raise ValueError(f"malformed rational {text!r}") from None
    if not dec.is_finite():
        raise ValueError(f"non-finite rational {text!r}")
    n, d = dec.as_integer_ratio()
    return mpq(n, d)


def fmt(q: Scalar) -> str:
    """Canonical text form: ``"p/q"`` or ``"p"`` when the denominator is 1."""
    return str(q)


def decimal12(q: Scalar) -> str:
    """Lossy 12-significant-digit rendering, for display only."""
    return format(Decimal(int(q.numerator)) / Decimal(int(q.denominator)), ".12g")


def floor_q(q: Scalar) -> int:
    return int(q.numerator // q.denominator)


def is_integer(q: Scalar) -> bool:
    return q.denominator == 1


class Regime(enum.Enum):
    ALL_IN = "all-in"
    BEST_IN = "best-in"


class AllocationMode(enum.Enum):
    LEVELS = "levels"
    FRACTION = "fraction"


class ValidationError(ValueError):
    """Raised with every violated invariant collected in ``issues``."""

    def __init__(self, issues: Sequence["Issue"]):
        self.issues = tuple(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}

    def to_json(self) -> dict:
        return {"error": "validation", "issues": [i.to_json() for i in self.issues]}


@dataclass(frozen=True)
class Issue:
    kind: str
    agent: int | None
    message: str

    def __str__(self) -> str:
        where = "instance" if self.agent is None else f"agent {self.agent}"
        return f"{self.kind} ({where}): {self.message}"

    def to_json(self) -> dict:
        return {"kind": self.kind, "agent": self.agent, "message": self.message}


class OutOfDomain(ValueError):
    pass


# ---------------------------------------------------------------- k-level


@dataclass(frozen=True)
class KLevelAgent:
    id: int
    cost: Scalar
    marginals: tuple[Scalar, ...]

    def value(self, levels: int) -> Scalar:
        """Total value of the first ``levels`` levels."""
        return sum(self.marginals[:levels], ZERO)

    def marginal(self, level: int) -> Scalar:
        """Marginal of level ``level`` (1-based); 0 outside 1..k."""
        if 1 <= level <= len(self.marginals):
            return self.marginals[level - 1]
        return ZERO


@dataclass(frozen=True)
class KLevelInstance:
    agents: tuple[KLevelAgent, ...]
    budget: Scalar
    k: int
    regime: Regime = Regime.ALL_IN

    @classmethod
    def build(
        cls,
        costs: Iterable[ScalarLike],
        marginals: Iterable[Iterable[ScalarLike]],
        budget: ScalarLike,
        regime: Regime | str = Regime.ALL_IN,
        k: int | None = None,
    ) -> "KLevelInstance":
        ms = [tuple(Q(m) for m in row) for row in marginals]
        cs = [Q(c) for c in costs]
        if len(ms) != len(cs):
            raise ValueError("costs and marginals differ in length")
        if k is None:
            k = len(ms[0]) if ms else 1
        agents = tuple(KLevelAgent(i, c, m) for i, (c, m) in enumerate(zip(cs, ms)))
        return cls(agents, Q(budget), k, Regime(regime))

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def costs(self) -> tuple[Scalar, ...]:
        return tuple(a.cost for a in self.agents)

    @property
    def marginals(self) -> tuple[tuple[Scalar, ...], ...]:
        return tuple(a.marginals for a in self.agents)

    @property
    def cap(self) -> Scalar:
        """Highest cost an agent may report while staying admissible."""
        return self.budget / self.k if self.regime is Regime.ALL_IN else self.budget

    def with_cost(self, agent: int, cost: Scalar) -> "KLevelInstance":
        a = self.agents[agent]
        agents = list(self.agents)
        agents[agent] = KLevelAgent(a.id, cost, a.marginals)
        return KLevelInstance(tuple(agents), self.budget, self.k, self.regime)

    def value(self, x: Sequence[Scalar]) -> Scalar:
        """Value of an integral or fractional level vector."""
        total = ZERO
        for a, xi in zip(self.agents, x):
            whole = floor_q(Q(xi))
            total += a.value(whole)
            if xi != whole:
                total += a.marginal(whole + 1) * (xi - whole)
        return total


def validate_klevel(inst: KLevelInstance) -> KLevelInstance:
    issues: list[Issue] = []
    if inst.n == 0:
        issues.append(Issue("EmptyInstance", None, "no agents"))
    if inst.budget <= 0:
        issues.append(Issue("NonPositive", None, f"budget {fmt(inst.budget)} must be > 0"))
    if inst.k < 1:
        issues.append(Issue("NonPositive", None, f"k = {inst.k} must be >= 1"))
    for idx, a in enumerate(inst.agents):
        if a.id != idx:
            issues.append(Issue("BadIndex", idx, f"id {a.id} out of order"))
        if len(a.marginals) != inst.k:
            issues.append(Issue("BadShape", idx, f"{len(a.marginals)} marginals, expected {inst.k}"))
        if a.cost <= 0:
            issues.append(Issue("NonPositive", idx, f"cost {fmt(a.cost)} must be > 0"))
        if any(m < 0 for m in a.marginals):
            issues.append(Issue("NonPositive", idx, "negative marginal"))
        if any(a.marginals[j] < a.marginals[j + 1] for j in range(len(a.marginals) - 1)):
            issues.append(Issue("NonConcave", idx, "marginals increase"))
        if inst.budget > 0 and a.cost > 0:
            bound = inst.k * a.cost if inst.regime is Regime.ALL_IN else a.cost
            if bound > inst.budget:
                rule = "k*cost" if inst.regime is Regime.ALL_IN else "cost"
                issues.append(
                    Issue("CostTooHigh", idx, f"{rule} = {fmt(bound)} exceeds budget {fmt(inst.budget)}")
                )
    if issues:
        raise ValidationError(issues)
    return inst


# ---------------------------------------------------------------- divisible


@dataclass(frozen=True)
class PiecewiseLinearConcave:
    """Concave non-decreasing valuation on [0, 1], given by its breakpoints."""

    breakpoints: tuple[tuple[Scalar, Scalar], ...]
    _xs: tuple[Scalar, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_xs", tuple(x for x, _ in self.breakpoints))

    @classmethod
    def linear(cls, slope: ScalarLike) -> "PiecewiseLinearConcave":
        return cls(((ZERO, ZERO), (ONE, Q(slope))))

    @classmethod
    def from_points(cls, points: Iterable[tuple[ScalarLike, ScalarLike]]) -> "PiecewiseLinearConcave":
        return cls(tuple((Q(x), Q(v)) for x, v in points))

    @property
    def is_linear(self) -> bool:
        slopes = set(self.slopes())
        return len(slopes) <= 1

    @property
    def total(self) -> Scalar:
        return self.breakpoints[-1][1]

    def segments(self) -> list[tuple[Scalar, Scalar]]:
        """(length, slope) for each piece."""
        out = []
        for (x0, v0), (x1, v1) in zip(self.breakpoints, self.breakpoints[1:]):
            if x1 > x0:
                out.append((x1 - x0, (v1 - v0) / (x1 - x0)))
        return out

    def slopes(self) -> list[Scalar]:
        return [s for _, s in self.segments()]

    def __call__(self, x: ScalarLike) -> Scalar:
        return eval_valuation(self, Q(x))

    def problems(self) -> list[str]:
        bp = self.breakpoints
        errs = []
        if len(bp) < 2:
            return ["need at least two breakpoints"]
        if bp[0] != (ZERO, ZERO):
            errs.append("first breakpoint must be (0, 0)")
        if bp[-1][0] != ONE:
            errs.append("last breakpoint must have x = 1")
        if any(b[0] <= a[0] for a, b in zip(bp, bp[1:])):
            errs.append("breakpoint x-coordinates must strictly increase")
            return errs
        if any(b[1] < a[1] for a, b in zip(bp, bp[1:])):
            errs.append("values decrease")
        sl = self.slopes()
        if any(b > a for a, b in zip(sl, sl[1:])):
            errs.append("slopes increase (not concave)")
        return errs


def eval_valuation(v: PiecewiseLinearConcave, x: Scalar) -> Scalar:
    x = Q(x)
    if x < 0 or x > 1:
        raise OutOfDomain(f"x = {fmt(x)} outside [0, 1]")
    bp = v.breakpoints
    idx = bisect_right(v._xs, x)
    if idx >= len(bp):
        return bp[-1][1]
    (x0, v0), (x1, v1) = bp[idx - 1], bp[idx]
    return v0 + (v1 - v0) * (x - x0) / (x1 - x0)


@dataclass(frozen=True)
class DivisibleAgent:
    id: int
    cost: Scalar
    valuation: PiecewiseLinearConcave


@dataclass(frozen=True)
class DivisibleInstance:
    agents: tuple[DivisibleAgent, ...]
    budget: Scalar

    @classmethod
    def linear(cls, costs: Iterable[ScalarLike], slopes: Iterable[ScalarLike], budget: ScalarLike):
        agents = tuple(
            DivisibleAgent(i, Q(c), PiecewiseLinearConcave.linear(s))
            for i, (c, s) in enumerate(zip(costs, slopes))
        )
        return cls(agents, Q(budget))

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def costs(self) -> tuple[Scalar, ...]:
        return tuple(a.cost for a in self.agents)

    @property
    def cap(self) -> Scalar:
        return self.budget

    def with_cost(self, agent: int, cost: Scalar) -> "DivisibleInstance":
        a = self.agents[agent]
        agents = list(self.agents)
        agents[agent] = DivisibleAgent(a.id, cost, a.valuation)
        return DivisibleInstance(tuple(agents), self.budget)

    def value(self, x: Sequence[Scalar]) -> Scalar:
        return sum((a.valuation(xi) for a, xi in zip(self.agents, x)), ZERO)


def validate_divisible(inst: DivisibleInstance) -> DivisibleInstance:
    issues: list[Issue] = []
    if inst.n == 0:
        issues.append(Issue("EmptyInstance", None, "no agents"))
    if inst.budget <= 0:
        issues.append(Issue("NonPositive", None, f"budget {fmt(inst.budget)} must be > 0"))
    for idx, a in enumerate(inst.agents):
        if a.id != idx:
            issues.append(Issue("BadIndex", idx, f"id {a.id} out of order"))
        if a.cost <= 0:
            issues.append(Issue("NonPositive", idx, f"cost {fmt(a.cost)} must be > 0"))
        elif inst.budget > 0 and a.cost > inst.budget:
            issues.append(Issue("CostTooHigh", idx, f"cost {fmt(a.cost)} exceeds budget"))
        for msg in a.valuation.problems():
            kind = "NonConcave" if "concave" in msg else "BadValuation"
            issues.append(Issue(kind, idx, msg))
    if issues:
        raise ValidationError(issues)
    return inst


# ---------------------------------------------------------------- outcomes


@dataclass(frozen=True)
class Allocation:
    quantities: tuple[Scalar, ...]
    mode: AllocationMode
    bound: int = 1

    def __post_init__(self) -> None:
        for q in self.quantities:
            if q < 0 or q > self.bound:
                raise ValueError(f"quantity {fmt(q)} outside [0, {self.bound}]")
            if self.mode is AllocationMode.LEVELS and not is_integer(q):
                raise ValueError(f"level count {fmt(q)} is not integral")

    @classmethod
    def levels(cls, xs: Iterable[int], k: int) -> "Allocation":
        return cls(tuple(mpq(x) for x in xs), AllocationMode.LEVELS, k)

    @classmethod
    def fractions(cls, xs: Iterable[Scalar]) -> "Allocation":
        return cls(tuple(Q(x) for x in xs), AllocationMode.FRACTION, 1)

    def __getitem__(self, i: int) -> Scalar:
        return self.quantities[i]

    def __len__(self) -> int:
        return len(self.quantities)

    def winners(self) -> tuple[int, ...]:
        return tuple(i for i, q in enumerate(self.quantities) if q > 0)

    def ints(self) -> tuple[int, ...]:
        return tuple(floor_q(q) for q in self.quantities)


@dataclass(frozen=True)
class Outcome:
    allocation: Allocation
    payments: tuple[Scalar, ...]
    value: Scalar
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    @property
    def total_payment(self) -> Scalar:
        return sum(self.payments, ZERO)

    def to_json(self) -> dict:
        return {
            "allocation": [fmt(q) for q in self.allocation.quantities],
            "mode": self.allocation.mode.value,
            "payments": [fmt(p) for p in self.payments],
            "total_payment": fmt(self.total_payment),
            "value": fmt(self.value),
            "diagnostics": _jsonable(dict(self.diagnostics)),
        }


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Scalar):
        return fmt(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in seq]
    return obj


# ---------------------------------------------------------------- JSON I/O

Instance = Union[KLevelInstance, DivisibleInstance]


def _need(obj: Mapping, key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise ValidationError([Issue("BadSchema", None, f"{where} must be an object")])
    if key not in obj:
        raise ValidationError([Issue("BadSchema", None, f"missing '{key}' in {where}")])
    return obj[key]


def _scalar_field(raw: Any, where: str) -> Scalar:
    if isinstance(raw, bool) or not isinstance(raw, (str, int)):
        raise ValidationError([Issue("BadSchema", None, f"{where}: expected a string rational")])
    try:
        return Q(raw)
    except ValueError as exc:
        raise ValidationError([Issue("BadSchema", None, f"{where}: {exc}")]) from None


def instance_from_json(obj: Mapping[str, Any]) -> Instance:
    """Parse the instance schema.  Raises :class:`ValidationError` on bad shape."""
    if not isinstance(obj, Mapping):
        raise ValidationError([Issue("BadSchema", None, "top level must be an object")])
    model = _need(obj, "model", "instance")
    budget = _scalar_field(_need(obj, "budget", "instance"), "budget")
    agents_raw = _need(obj, "agents", "instance")
    if not isinstance(agents_raw, list):
        raise ValidationError([Issue("BadSchema", None, "'agents' must be an array")])
    if model == "k-level":
        k = _need(obj, "k", "instance")
        if not isinstance(k, int) or isinstance(k, bool):
            raise ValidationError([Issue("BadSchema", None, "'k' must be an integer")])
        try:
            regime = Regime(_need(obj, "regime", "instance"))
        except ValueError:
            raise ValidationError([Issue("BadSchema", None, "unknown regime")]) from None
        agents = []
        for i, a in enumerate(agents_raw):
            cost = _scalar_field(_need(a, "cost", f"agent {i}"), f"agent {i} cost")
            ms = _need(a, "marginals", f"agent {i}")
            if not isinstance(ms, list):
                raise ValidationError([Issue("BadSchema", i, "'marginals' must be an array")])
            marg = tuple(_scalar_field(m, f"agent {i} marginal") for m in ms)
            agents.append(KLevelAgent(i, cost, marg))
        return KLevelInstance(tuple(agents), budget, k, regime)
    if model == "divisible":
        agents = []
        for i, a in enumerate(agents_raw):
            cost = _scalar_field(_need(a, "cost", f"agent {i}"), f"agent {i} cost")
            val = _need(a, "valuation", f"agent {i}")
            kind = _need(val, "type", f"agent {i} valuation")
            if kind == "linear":
                v = PiecewiseLinearConcave.linear(_scalar_field(_need(val, "slope", f"agent {i}"), "slope"))
            elif kind == "piecewise":
                pts = _need(val, "breakpoints", f"agent {i} valuation")
                try:
                    v = PiecewiseLinearConcave(
                        tuple((_scalar_field(x, "x"), _scalar_field(y, "value")) for x, y in pts)
                    )
                except (TypeError, ValueError) as exc:
                    if isinstance(exc, ValidationError):
                        raise
                    raise ValidationError([Issue("BadSchema", i, "breakpoints must be [x, value] pairs")]) from None
            else:
                raise ValidationError([Issue("BadSchema", i, f"unknown valuation type {kind!r}")])
            agents.append(DivisibleAgent(i, cost, v))
        return DivisibleInstance(tuple(agents), budget)
    raise ValidationError([Issue("BadSchema", None, f"unknown model {model!r}")])


def instance_to_json(inst: Instance) -> dict:
    if isinstance(inst, KLevelInstance):
        return {
            "model": "k-level",
            "budget": fmt(inst.budget),
            "k": inst.k,
            "regime": inst.regime.value,
            "agents": [
                {"cost": fmt(a.cost), "marginals": [fmt(m) for m in a.marginals]} for a in inst.agents
            ],
        }
    agents = []
    for a in inst.agents:
        v = a.valuation
        if len(v.breakpoints) == 2 and v.breakpoints[0] == (ZERO, ZERO) and v.breakpoints[1][0] == ONE:
            val = {"type": "linear", "slope": fmt(v.breakpoints[1][1])}
        else:
            val = {"type": "piecewise", "breakpoints": [[fmt(x), fmt(y)] for x, y in v.breakpoints]}
        agents.append({"cost": fmt(a.cost), "valuation": val})
    return {"model": "divisible", "budget": fmt(inst.budget), "agents": agents}


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_json(inst), indent=2, sort_keys=True) + "\n"


def loads_instance(text: str) -> Instance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([Issue("BadJSON", None, str(exc))]) from None
    return instance_from_json(obj)
