"""Exact threshold payments for the k-level allocation rules.

For a fixed agent ``i`` and fixed competitor costs, the number of levels the
rule hires from ``i`` is a non-increasing step function of the cost ``z`` that
``i`` reports.  The payment for level ``j`` is the largest ``z`` at which level
``j`` is still hired.  This module computes those thresholds exactly.

How the engine finds them
-------------------------
The rule's branch choice depends on ``z`` only through the fractional optima
``g_j(z)`` of the markets without agent ``j`` (dominance test and argmax), and
the rejection branch depends on ``z`` only through the greedy order, which
prefixes fit in the budget, and comparisons of prefix values against
``alpha * OPT(z)``.  On any interval where the greedy order and the fitting
prefixes are fixed, each optimum is either linear in ``z`` or of the form
``a + b/z``, so every crossing of a constant is a rational we can solve for.

The engine therefore

1. solves the dominance-test and argmax crossings directly on each ``g_j``;
2. binary-searches the level threshold over those crossings, then over the
   points where ``i``'s densities tie another agent's, then over budget
   crossings, then over prefix-value crossings; after the last stage the
   allocation is constant strictly inside the bracket, and a midpoint
   evaluation settles which end is the threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .klevel import BestInConfig, SortRejectConfig, head_values, ratio_beats, run_rule
from .knapsack import greedy_value, sorted_elements
from .model import ZERO, Allocation, KLevelInstance, Scalar, fmt


class NonMonotoneDetected(RuntimeError):
    """An allocation curve increased with cost, which no valid rule can do."""


class EngineInconsistency(RuntimeError):
    pass


Rule = SortRejectConfig | BestInConfig


def hire_size(cfg: Rule, inst: KLevelInstance) -> int:
    return 1 if isinstance(cfg, BestInConfig) else inst.k


def opt_ceiling(cfg: Rule, head: Scalar) -> Scalar:
    """Largest competitor optimum for which the dominance test still passes."""
    if isinstance(cfg, BestInConfig):
        return head / cfg.beta
    return head * (1 - cfg.alpha) / cfg.alpha


# ---------------------------------------------------------------- step functions


@dataclass(frozen=True)
class StepFunction:
    """Non-increasing level count on ``[start, cap]``.

    ``thresholds[j-1]`` is the supremum of costs at which at least ``j`` levels
    are hired.  Between thresholds the count equals the number of thresholds
    strictly above ``z``; ``point_values`` records the exact count at each
    threshold, where the two one-sided limits differ.
    """

    start: Scalar
    cap: Scalar
    thresholds: tuple[Scalar, ...]
    point_values: tuple[tuple[Scalar, int], ...] = ()
    _points: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_points", dict(self.point_values))
        th = self.thresholds
        if any(a < b for a, b in zip(th, th[1:])):
            raise NonMonotoneDetected("thresholds must be non-increasing")

    @property
    def top(self) -> int:
        return len(self.thresholds)

    def __call__(self, z: Scalar) -> int:
        if z > self.cap:
            return 0
        if z in self._points:
            return self._points[z]
        if z <= self.start:
            return self.top
        return sum(1 for t in self.thresholds if t > z)

    @property
    def breakpoints(self) -> tuple[tuple[Scalar, int], ...]:
        """Ascending ``(z, level)``: the count is ``level`` just below ``z``."""
        out = []
        for t in sorted(set(self.thresholds)):
            out.append((t, sum(1 for s in self.thresholds if s >= t)))
        return tuple(out)

    def integral(self, lo: Scalar) -> Scalar:
        """Area under the curve over ``(lo, cap]``, summed as rectangles."""
        area = ZERO
        prev = lo
        for t, level in self.breakpoints:
            if t <= lo:
                continue
            area += level * (t - prev)
            prev = t
        return area

    def to_json(self) -> dict:
        return {
            "start": fmt(self.start),
            "cap": fmt(self.cap),
            "breakpoints": [[fmt(z), lvl] for z, lvl in self.breakpoints],
        }


@dataclass(frozen=True)
class CriticalPayments:
    agent: int
    per_level: tuple[Scalar, ...]

    @property
    def total(self) -> Scalar:
        return sum(self.per_level, ZERO)


def critical_payments(curve: StepFunction, true_cost: Scalar, agent: int = -1) -> CriticalPayments:
    hired = curve(true_cost)
    per_level = curve.thresholds[:hired]
    total = sum(per_level, ZERO)
    myerson = true_cost * hired + curve.integral(true_cost)
    if total != myerson:
        raise EngineInconsistency(f"level sum {fmt(total)} differs from area form {fmt(myerson)}")
    return CriticalPayments(agent, tuple(per_level))


def myerson_payment(curve: StepFunction, bid: Scalar, allocation: int | None = None) -> Scalar:
    """Payment owed at ``bid``: bid times allocation plus the area to the right."""
    if bid > curve.cap:
        return ZERO
    x = curve(bid) if allocation is None else allocation
    if x == 0:
        return ZERO
    return bid * x + curve.integral(bid)


# ---------------------------------------------------------------- markets in one variable


@dataclass(frozen=True)
class _Pass:
    value: Scalar
    prefix_values: tuple[Scalar, ...]
    own_in_prefix: tuple[bool, ...]
    fixed_cost: Scalar
    own_count: int
    frac: tuple[Scalar, bool, Scalar] | None
    budget: Scalar

    def solve(self, target: Scalar) -> Scalar | None:
        """Cost at which this piece of the optimum equals ``target`` (None if flat)."""
        if self.frac is None:
            return None
        m, own, c = self.frac
        if m == 0:
            return None
        base = self.prefix_values[-1]
        slack = self.budget - self.fixed_cost
        t = self.own_count
        if not own:
            if t == 0:
                return None
            return (base + m * slack / c - target) * c / (m * t)
        if slack == 0:
            return None
        denom = target - base + m * t
        if denom <= 0:
            return None
        return m * slack / denom


class _Market:
    """Greedy fractional optimum as a function of one agent's reported cost."""

    def __init__(self, costs, margs, budget, agent, skip=None):
        self.budget = budget
        self.agent = agent
        self.static = sorted(
            ((-(m / c), a, j), a, j, m, c)
            for a, (c, row) in enumerate(zip(costs, margs))
            if a != agent and a != skip
            for j, m in enumerate(row, start=1)
        )
        self.own = tuple(enumerate(margs[agent], start=1))
        self._runs: dict = {}

    def order(self, z):
        own = [((-(m / z), self.agent, j), self.agent, j, m, z) for j, m in self.own]
        return sorted(self.static + own)

    def run(self, z) -> _Pass:
        hit = self._runs.get(z)
        if hit is not None:
            return hit
        rem = self.budget
        value = ZERO
        values = [ZERO]
        owned = []
        fixed = ZERO
        count = 0
        frac = None
        agent = self.agent
        for _, a, _, m, c in self.order(z):
            if rem <= 0:
                break
            if c <= rem:
                rem -= c
                value += m
                values.append(value)
                mine = a == agent
                owned.append(mine)
                if mine:
                    count += 1
                else:
                    fixed += c
            else:
                value += m * rem / c
                frac = (m, a == agent, c)
                break
        out = _Pass(value, tuple(values), tuple(owned), fixed, count, frac, self.budget)
        self._runs[z] = out
        return out

    def value(self, z) -> Scalar:
        return self.run(z).value

    def budget_points(self, z) -> list[Scalar]:
        pts = []
        fixed = ZERO
        count = 0
        for _, a, _, _, c in self.order(z):
            if a == self.agent:
                count += 1
            else:
                fixed += c
            if count:
                pts.append((self.budget - fixed) / count)
        return pts

    def first_at_most(self, target, lo, hi, order_points) -> Scalar | None:
        """Smallest cost in [lo, hi] where the optimum is at most ``target``."""
        if self.value(lo) <= target:
            return lo
        if self.value(hi) > target:
            return None
        above = lambda z: self.value(z) > target  # noqa: E731
        lo, hi = _narrow(lo, hi, order_points, above)
        lo, hi = _narrow(lo, hi, self.budget_points((lo + hi) / 2), above)
        root = self.run((lo + hi) / 2).solve(target)
        if root is None or not lo < root <= hi:
            raise EngineInconsistency("optimum crossing not found inside its piece")
        return root

    def last_at_least(self, target, lo, hi, order_points) -> Scalar | None:
        """Largest cost in [lo, hi] where the optimum is at least ``target``."""
        if self.value(hi) >= target:
            return hi
        if self.value(lo) < target:
            return None
        reach = lambda z: self.value(z) >= target  # noqa: E731
        lo, hi = _narrow(lo, hi, order_points, reach)
        lo, hi = _narrow(lo, hi, self.budget_points((lo + hi) / 2), reach)
        root = self.run((lo + hi) / 2).solve(target)
        if root is None or not lo <= root < hi:
            raise EngineInconsistency("optimum crossing not found inside its piece")
        return root


def _narrow(lo, hi, points: Iterable[Scalar], keep_lo: Callable[[Scalar], bool]):
    """Shrink ``(lo, hi)`` to consecutive candidates, keeping ``keep_lo`` true at lo."""
    pts = sorted(set(p for p in points if lo < p < hi))
    a, b = 0, len(pts)
    # invariant: keep_lo holds at pts[a-1] (or lo) and fails at pts[b] (or hi)
    while a < b:
        mid = (a + b) // 2
        if keep_lo(pts[mid]):
            a = mid + 1
        else:
            b = mid
    new_lo = pts[a - 1] if a > 0 else lo
    new_hi = pts[a] if a < len(pts) else hi
    return new_lo, new_hi


# ---------------------------------------------------------------- allocation curve


class _AgentCurve:
    """Level count hired from one agent as its reported cost varies."""

    def __init__(self, cfg: Rule, inst: KLevelInstance, agent: int, start: Scalar):
        self.cfg = cfg
        self.agent = agent
        self.start = start
        self.cap = inst.cap
        self.hire = hire_size(cfg, inst)
        costs, margs, budget = list(inst.costs), inst.marginals, inst.budget
        others = [a for a in range(inst.n) if a != agent]
        self.full = _Market(costs, margs, budget, agent)

        own = [m for m in margs[agent] if m > 0]
        pts = set()
        for a in others:
            for m in margs[a]:
                if m > 0:
                    for mo in own:
                        pts.add(mo * costs[a] / m)
        self.order_points = sorted(pts)

        heads = head_values(inst, cfg)
        self.heads = heads
        self.opt_without = greedy_value(sorted_elements(costs, margs, skip=agent), budget)
        self.subs = {j: _Market(costs, margs, budget, agent, skip=j) for j in others}
        self.evals: dict = {}
        self.switches: list[Scalar] = []
        self._setup_branch(others)

    # -- branch structure --------------------------------------------------

    def _setup_branch(self, others: Sequence[int]) -> None:
        cfg, i, lo, hi = self.cfg, self.agent, self.start, self.cap
        self.self_test = cfg.if_test(self.heads[i], self.opt_without)
        if self.self_test:
            self.if_from = lo
        else:
            starts = []
            for j in others:
                s = self.subs[j].first_at_most(opt_ceiling(cfg, self.heads[j]), lo, hi, self.order_points)
                if s is not None:
                    starts.append(s)
            self.if_from = min(starts) if starts else None
        if self.if_from is not None:
            self.switches.append(self.if_from)
        self.star_const = None
        self.star_bound = None
        if self.if_from is None:
            return
        hi_i, o_i = self.heads[i], self.opt_without
        if hi_i == 0 or o_i == 0:
            self.star_const = self._is_star_direct(lo)
            return
        bound = None  # (z, inclusive)
        for j in others:
            target = self.heads[j] * o_i / hi_i
            if j < i:
                z = self.subs[j].first_at_most(target, lo, hi, self.order_points)
                cand = None if z is None else (z, False)
            else:
                z = self.subs[j].last_at_least(target, lo, hi, self.order_points)
                cand = (lo, False) if z is None else (z, True)
            if cand is None:
                continue
            if bound is None or cand[0] < bound[0] or (cand[0] == bound[0] and not cand[1]):
                bound = cand
        self.star_bound = bound
        if bound is not None:
            self.switches.append(bound[0])

    def _is_star_direct(self, z) -> bool:
        i = self.agent
        oi = self.opt_without
        for j, mkt in self.subs.items():
            gj = mkt.value(z)
            if j < i and not ratio_beats(self.heads[i], oi, self.heads[j], gj):
                return False
            if j > i and ratio_beats(self.heads[j], gj, self.heads[i], oi):
                return False
        return True

    def _is_star(self, z) -> bool:
        if self.star_const is not None:
            return self.star_const
        if self.star_bound is None:
            return True
        b, inclusive = self.star_bound
        return z < b or (inclusive and z == b)

    def _rejection_count(self, z) -> int:
        p = self.full.run(z)
        threshold = self.cfg.alpha * p.value
        values = p.prefix_values
        keep = len(values) - 1
        while keep > 1 and values[keep - 1] >= threshold:
            keep -= 1
        return sum(p.own_in_prefix[:keep])

    def __call__(self, z) -> int:
        hit = self.evals.get(z)
        if hit is not None:
            return hit
        if self.if_from is not None and z >= self.if_from:
            x = self.hire if self._is_star(z) else 0
        else:
            x = self._rejection_count(z)
        self.evals[z] = x
        return x

    # -- thresholds -------------------------------------------------------

    def _flip_points(self, z) -> list[Scalar]:
        p = self.full.run(z)
        pts = []
        for v in p.prefix_values:
            root = p.solve(v / self.cfg.alpha)
            if root is not None:
                pts.append(root)
        return pts

    def _bracket(self, level):
        lo, hi = self.start, self.cap
        for z, x in self.evals.items():
            if x >= level and z > lo:
                lo = z
            elif x < level and z < hi:
                hi = z
        return lo, hi

    def threshold(self, level: int) -> Scalar:
        if self(self.cap) >= level:
            return self.cap
        if self(self.start) < level:
            raise ValueError(f"level {level} not hired at the start of the curve")
        lo, hi = self._bracket(level)
        keep = lambda z: self(z) >= level  # noqa: E731
        lo, hi = _narrow(lo, hi, self.switches, keep)
        lo, hi = _narrow(lo, hi, self.order_points, keep)
        lo, hi = _narrow(lo, hi, self.full.budget_points((lo + hi) / 2), keep)
        lo, hi = _narrow(lo, hi, self._flip_points((lo + hi) / 2), keep)
        return hi if self((lo + hi) / 2) >= level else lo

    def curve(self) -> StepFunction:
        top = self(self.start)
        ths = tuple(self.threshold(j) for j in range(1, top + 1))
        for t in ths:
            self(t)
        seen = sorted(self.evals.items())
        if any(a[1] < b[1] for a, b in zip(seen, seen[1:])):
            raise NonMonotoneDetected(f"allocation of agent {self.agent} rises with cost")
        points = tuple((t, self.evals[t]) for t in sorted(set(ths)))
        return StepFunction(self.start, self.cap, ths, points)


def allocation_curve(
    cfg: Rule, inst: KLevelInstance, agent: int, start: Scalar | None = None
) -> StepFunction:
    """Exact step function of levels hired from ``agent`` over ``[start, cap]``.

    ``start`` defaults to the agent's reported cost.
    """
    lo = inst.agents[agent].cost if start is None else start
    if lo <= 0 or lo > inst.cap:
        raise ValueError(f"curve start {fmt(lo)} outside (0, cap]")
    return _AgentCurve(cfg, inst, agent, lo).curve()


@dataclass(frozen=True)
class KLevelPayments:
    payments: tuple[Scalar, ...]
    per_agent: tuple[CriticalPayments | None, ...]
    curves: tuple[StepFunction | None, ...]


def klevel_payments(cfg: Rule, inst: KLevelInstance, alloc: Allocation) -> KLevelPayments:
    """Threshold payments for every winner; losers receive nothing."""
    pays, per, curves = [], [], []
    for i, xi in enumerate(alloc.ints()):
        if xi == 0:
            pays.append(ZERO)
            per.append(None)
            curves.append(None)
            continue
        curve = allocation_curve(cfg, inst, i)
        if curve(inst.agents[i].cost) != xi:
            raise EngineInconsistency(f"curve disagrees with the rule for agent {i}")
        cp = critical_payments(curve, inst.agents[i].cost, i)
        pays.append(cp.total)
        per.append(cp)
        curves.append(curve)
    return KLevelPayments(tuple(pays), tuple(per), tuple(curves))


def bisect_threshold_oracle(
    cfg: Rule, inst: KLevelInstance, agent: int, level: int, tolerance: Scalar
) -> tuple[Scalar, Scalar] | None:
    """Bracket the level-``level`` threshold by bisection on the rule itself."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")

    def hired(z):
        return run_rule(inst.with_cost(agent, z), cfg)[0].ints()[agent]

    lo, hi = inst.agents[agent].cost, inst.cap
    if hired(lo) < level:
        return None
    if hired(hi) >= level:
        return hi, hi
    while hi - lo > tolerance:
        mid = (lo + hi) / 2
        if hired(mid) >= level:
            lo = mid
        else:
            hi = mid
    return lo, hi


__all__ = [
    "CriticalPayments",
    "EngineInconsistency",
    "KLevelPayments",
    "NonMonotoneDetected",
    "StepFunction",
    "allocation_curve",
    "bisect_threshold_oracle",
    "critical_payments",
    "hire_size",
    "klevel_payments",
    "myerson_payment",
]
