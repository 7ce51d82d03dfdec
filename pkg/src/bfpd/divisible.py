"""Mechanisms for agents whose service can be bought in any fraction.

``prune_and_assign`` handles linear valuations: a rate-raising filter picks a
set of provisional winners and a common rate ``r``, then each winner gets a
fraction that falls linearly in its reported cost.  ``chunk_and_solve`` handles
concave piecewise-linear valuations by cutting every agent into ``n`` equal
chunks and running the k-level rule on the result.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from gmpy2 import mpq

from .klevel import SortRejectConfig, SortRejectTrace, sort_and_reject
from .model import (
    ZERO,
    Allocation,
    DivisibleInstance,
    KLevelAgent,
    KLevelInstance,
    Outcome,
    Regime,
    Scalar,
    validate_divisible,
)
from .payments import KLevelPayments, klevel_payments

HALF = mpq(1, 2)


class NonLinearValuation(ValueError):
    pass


def linear_values(inst: DivisibleInstance) -> list[Scalar]:
    bad = [a.id for a in inst.agents if not a.valuation.is_linear]
    if bad:
        raise NonLinearValuation(f"agents {bad} have non-linear valuations")
    return [a.valuation.total for a in inst.agents]


@dataclass(frozen=True)
class PruningResult:
    rate: Scalar
    provisional: Allocation
    S: frozenset[int]
    i_star: int | None
    T: frozenset[int]
    dropped: tuple[tuple[int, Scalar], ...]

    def same_output(self, other: "PruningResult") -> bool:
        return self.rate == other.rate and self.provisional == other.provisional


def pruning(inst: DivisibleInstance) -> PruningResult:
    """Raise a common rate until the provisional winners fit the budget.

    Events are processed exactly: the rate only ever jumps to either the next
    drop-out ratio or the level at which the loop condition turns false.  When
    both coincide the agent stays.
    """
    v = linear_values(inst)
    c = inst.costs
    budget = inst.budget
    n = inst.n
    ratio = [v[i] / c[i] for i in range(n)]
    order = sorted(range(n), key=lambda i: (-ratio[i], i))
    r = max(v) / budget
    S = [i for i in order if v[i] > 0 and ratio[i] >= r]
    dropped = []
    while S:
        total = sum((v[i] for i in S), ZERO)
        need = (total - max(v[i] for i in S)) / budget
        if r >= need:
            break
        last = S[-1]
        if ratio[last] >= need:
            r = need
            break
        r = ratio[last]
        S.pop()
        dropped.append((last, r))
    members = frozenset(S)
    star = None
    if S:
        star = min(S, key=lambda i: (-v[i], i))
    T = members - {star} if star is not None else frozenset()
    prov = Allocation.fractions([1 if i in members else 0 for i in range(n)])
    return PruningResult(r, prov, members, star, T, tuple(dropped))


def pruning_robustness_check(inst: DivisibleInstance, agent: int, alt_cost: Scalar) -> bool | None:
    """Whether a provisional winner's cost change leaves the filter output intact.

    Returns None when the agent is not a provisional winner in both runs.
    """
    a = pruning(inst)
    b = pruning(inst.with_cost(agent, alt_cost))
    if agent not in a.S or agent not in b.S:
        return None
    return a.same_output(b)


@dataclass(frozen=True)
class AssignConstants:
    q: Scalar
    q_star: Scalar
    q_T: Scalar

    def share(self, agent: int, star: int) -> Scalar:
        return self.q_star if agent == star else self.q_T


QRule = Callable[[Scalar, Scalar, Scalar], Scalar]


def standard_q(excess: Scalar, v_star: Scalar, v_rest: Scalar) -> Scalar:
    """Half the excess value over the smaller side; 0 when either factor vanishes."""
    smaller = min(v_star, v_rest)
    if excess == 0 or smaller == 0:
        return ZERO
    return HALF * excess / smaller


def assign_constants(
    inst: DivisibleInstance, pr: PruningResult, q_rule: QRule | None = None
) -> AssignConstants:
    v = linear_values(inst)
    v_star = v[pr.i_star]
    v_rest = sum((v[i] for i in pr.T), ZERO)
    v_all = v_star + v_rest
    q = (q_rule or standard_q)(v_all - pr.rate * inst.budget, v_star, v_rest)
    q_star = HALF - q if v_star <= v_rest else HALF
    return AssignConstants(q, q_star, 1 - q_star - q)


def share_at(v: Scalar, share: Scalar, rate: Scalar, z: Scalar) -> Scalar:
    """Fraction bought from a provisional winner that reports cost ``z``."""
    if z > v / rate:
        return ZERO
    return share + (v - rate * z) / (2 * v)


def area_to_cutoff(v: Scalar, share: Scalar, rate: Scalar, z: Scalar) -> Scalar:
    """Exact integral of :func:`share_at` from ``z`` up to the cutoff ``v/rate``."""
    top = v / rate
    if z >= top:
        return ZERO
    return (share + HALF) * (top - z) - rate * (top * top - z * z) / (4 * v)


def prune_and_assign(inst: DivisibleInstance, q_rule: QRule | None = None) -> Outcome:
    validate_divisible(inst)
    v = linear_values(inst)
    pr = pruning(inst)
    n = inst.n
    diag: dict = {
        "r": pr.rate,
        "S": sorted(pr.S),
        "T": sorted(pr.T),
        "i_star": pr.i_star,
        "pruning_trace": [[i, rt] for i, rt in pr.dropped],
    }
    if not pr.S:
        zeros = (ZERO,) * n
        return Outcome(Allocation.fractions(zeros), zeros, ZERO, diag)
    consts = assign_constants(inst, pr, q_rule)
    diag.update(q=consts.q, q_star=consts.q_star, q_T=consts.q_T)
    x = [ZERO] * n
    pay = [ZERO] * n
    for i in pr.S:
        c = inst.agents[i].cost
        share = consts.share(i, pr.i_star)
        x[i] = share_at(v[i], share, pr.rate, c)
        pay[i] = c * x[i] + area_to_cutoff(v[i], share, pr.rate, c)
    alloc = Allocation.fractions(x)
    return Outcome(alloc, tuple(pay), inst.value(alloc.quantities), diag)


# ---------------------------------------------------------------- chunking


def discretize(inst: DivisibleInstance) -> KLevelInstance:
    """Cut each agent into ``n`` equal chunks priced at ``cost / n``."""
    n = inst.n
    agents = []
    for a in inst.agents:
        values = [a.valuation(mpq(j, n)) for j in range(n + 1)]
        marg = tuple(values[j] - values[j - 1] for j in range(1, n + 1))
        agents.append(KLevelAgent(a.id, a.cost / n, marg))
    return KLevelInstance(tuple(agents), inst.budget, n, Regime.ALL_IN)


@dataclass(frozen=True)
class ChunkRun:
    outcome: Outcome
    chunked: KLevelInstance
    levels: Allocation
    trace: SortRejectTrace
    payments: KLevelPayments


def chunk_and_solve_run(inst: DivisibleInstance, cfg: SortRejectConfig | None = None) -> ChunkRun:
    validate_divisible(inst)
    cfg = cfg or SortRejectConfig()
    J = discretize(inst)
    levels, trace = sort_and_reject(J, cfg)
    pay = klevel_payments(cfg, J, levels)
    n = inst.n
    x = Allocation.fractions([xi / n for xi in levels.quantities])
    diag = {
        "alpha": cfg.alpha,
        "branch": "if" if trace.took_if_branch else "else",
        "i_star": trace.i_star,
        "levels": [int(q) for q in levels.ints()],
        "removals": [list(r) for r in trace.removals],
    }
    outcome = Outcome(x, pay.payments, inst.value(x.quantities), diag)
    return ChunkRun(outcome, J, levels, trace, pay)


def chunk_and_solve(inst: DivisibleInstance, cfg: SortRejectConfig | None = None) -> Outcome:
    return chunk_and_solve_run(inst, cfg).outcome


__all__ = [
    "AssignConstants",
    "ChunkRun",
    "NonLinearValuation",
    "PruningResult",
    "area_to_cutoff",
    "assign_constants",
    "chunk_and_solve",
    "chunk_and_solve_run",
    "discretize",
    "linear_values",
    "prune_and_assign",
    "pruning",
    "pruning_robustness_check",
    "share_at",
    "standard_q",
]
