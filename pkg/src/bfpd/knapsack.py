"""Fractional and integral knapsack benchmarks for procurement instances."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import (
    ZERO,
    Allocation,
    AllocationMode,
    DivisibleInstance,
    KLevelInstance,
    Scalar,
    is_integer,
)

DEFAULT_ENUM_CAP = 10**7


class TooLarge(ValueError):
    """The requested enumeration exceeds the configured cap."""


class BadIndex(IndexError):
    pass


def enum_cap() -> int:
    raw = os.environ.get("BFPD_ENUM_CAP")
    return int(raw) if raw else DEFAULT_ENUM_CAP


# An element is one level of one agent: (sort key, agent, level, marginal, cost).
# The key orders by density descending, then agent id, then level.
Element = tuple


def sorted_elements(
    costs: Sequence[Scalar], margs: Sequence[Sequence[Scalar]], skip: int | None = None
) -> list[Element]:
    elems = []
    for a, (c, row) in enumerate(zip(costs, margs)):
        if a == skip:
            continue
        for j, m in enumerate(row, start=1):
            elems.append(((-(m / c), a, j), a, j, m, c))
    elems.sort()
    return elems


def greedy_value(elems: Iterable[Element], budget: Scalar, skip: int | None = None) -> Scalar:
    """Greedy optimum over a pre-sorted element list, optionally ignoring one agent."""
    rem = budget
    value = ZERO
    for _, a, _, m, c in elems:
        if a == skip:
            continue
        if rem <= 0:
            break
        if c <= rem:
            rem -= c
            value += m
        else:
            value += m * rem / c
            break
    return value


@dataclass(frozen=True)
class GreedySolution:
    allocation: Allocation
    value: Scalar
    sorted_list: tuple[tuple[int, int, Scalar], ...]
    fractional_agent: int | None

    @property
    def x(self) -> tuple[Scalar, ...]:
        return self.allocation.quantities

    def floor(self) -> tuple[int, ...]:
        return self.allocation.ints()


def greedy_fractional(inst: KLevelInstance) -> GreedySolution:
    """Greedy solution of the fractional k-bounded knapsack relaxation.

    Levels are taken in order of marginal value per unit cost until the list is
    exhausted or the budget is spent; the last level taken may be fractional.
    """
    elems = sorted_elements(inst.costs, inst.marginals)
    x = [ZERO] * inst.n
    rem = inst.budget
    value = ZERO
    frac = None
    for _, a, _, m, c in elems:
        if rem <= 0:
            break
        if c <= rem:
            rem -= c
            x[a] += 1
            value += m
        else:
            part = rem / c
            x[a] += part
            value += m * part
            frac = a
            break
    if sum(1 for xi in x if not is_integer(xi)) > 1:
        raise AssertionError("greedy produced more than one fractional coordinate")
    listing = tuple((a, j, -key[0]) for key, a, j, _, _ in elems)
    alloc = Allocation(tuple(x), AllocationMode.FRACTION, inst.k)
    return GreedySolution(alloc, value, listing, frac)


def opt_f_minus(inst: KLevelInstance, excluded: int) -> Scalar:
    """Fractional optimum once ``excluded`` leaves the market."""
    if not 0 <= excluded < inst.n:
        raise BadIndex(f"agent {excluded} not in 0..{inst.n - 1}")
    elems = sorted_elements(inst.costs, inst.marginals, skip=excluded)
    return greedy_value(elems, inst.budget)


def brute_opt_integral(inst: KLevelInstance, cap: int | None = None) -> Scalar:
    """Best integral level profile, by exhaustive search over {0..k}^n."""
    limit = enum_cap() if cap is None else cap
    if (inst.k + 1) ** inst.n > limit:
        raise TooLarge(f"(k+1)^n = {(inst.k + 1) ** inst.n} exceeds cap {limit}")
    k = inst.k
    costs = inst.costs
    # prefix values per agent
    vals = [[sum(a.marginals[:j], ZERO) for j in range(k + 1)] for a in inst.agents]
    n = inst.n
    best = ZERO

    def walk(i: int, rem: Scalar, acc: Scalar) -> None:
        nonlocal best
        if i == n:
            if acc > best:
                best = acc
            return
        c = costs[i]
        row = vals[i]
        spent = ZERO
        for j in range(k + 1):
            if spent > rem:
                break
            walk(i + 1, rem - spent, acc + row[j])
            spent += c

    walk(0, inst.budget, ZERO)
    return best


def grid_opt_fractional_divisible(inst: DivisibleInstance, grid_q: int, cap: int | None = None) -> Scalar:
    """Best allocation restricted to multiples of ``1/grid_q``; a lower bound on the fractional optimum."""
    limit = enum_cap() if cap is None else cap
    if grid_q < 1:
        raise ValueError("grid_q must be positive")
    if (grid_q + 1) ** inst.n > limit:
        raise TooLarge(f"(grid_q+1)^n = {(grid_q + 1) ** inst.n} exceeds cap {limit}")
    steps = [Scalar(j, grid_q) for j in range(grid_q + 1)]
    tables = [[a.valuation(s) for s in steps] for a in inst.agents]
    costs = [a.cost / grid_q for a in inst.agents]
    n = inst.n
    best = ZERO

    def walk(i: int, rem: Scalar, acc: Scalar) -> None:
        nonlocal best
        if i == n:
            if acc > best:
                best = acc
            return
        unit = costs[i]
        row = tables[i]
        spent = ZERO
        for j in range(grid_q + 1):
            if spent > rem:
                break
            walk(i + 1, rem - spent, acc + row[j])
            spent += unit

    walk(0, inst.budget, ZERO)
    return best


def exact_opt_fractional_divisible(inst: DivisibleInstance) -> Scalar:
    """Exact fractional optimum: greedy over valuation segments by slope per unit cost.

    Concavity makes each agent's segments appear in their natural order.
    """
    pieces = []
    for a in inst.agents:
        for idx, (length, slope) in enumerate(a.valuation.segments()):
            pieces.append((-(slope / a.cost), a.id, idx, length, slope, a.cost))
    pieces.sort()
    rem = inst.budget
    value = ZERO
    for _, _, _, length, slope, cost in pieces:
        if rem <= 0:
            break
        spend = length * cost
        if spend <= rem:
            rem -= spend
            value += length * slope
        else:
            value += slope * rem / cost
            break
    return value


def opt_f_klevel(inst: KLevelInstance) -> Scalar:
    return greedy_value(sorted_elements(inst.costs, inst.marginals), inst.budget)
