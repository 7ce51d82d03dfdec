"""Deterministic allocation rules for agents offering up to k levels of service.

Two rules share one skeleton:

* :func:`sort_and_reject` (all-in regime): hire every level of the single most
  dominant agent when it is valuable enough on its own, otherwise round the
  greedy fractional optimum down and trim the cheapest-density levels while the
  remainder still carries an ``alpha`` share of the optimum.
* :func:`greedy_best_in` (best-in regime): the same, but the dominance test uses
  first-level values against ``beta`` and hires a single level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpq

from .knapsack import brute_opt_integral, greedy_value, sorted_elements
from .model import (
    ZERO,
    Allocation,
    KLevelInstance,
    Q,
    Regime,
    Scalar,
    ScalarLike,
    fmt,
    validate_klevel,
)

DEFAULT_ALPHA = mpq(267949, 1000000)
_ALPHA_GRID = 10**6
_THETA_GRID = 10**7


class RegimeMismatch(ValueError):
    pass


class InvalidAlpha(ValueError):
    pass


class InvalidAlphaBeta(ValueError):
    pass


class BadTheta(ValueError):
    pass


def below_golden_bound(alpha: Scalar) -> bool:
    """alpha < (3 - sqrt 5)/2, decided without irrationals."""
    return alpha < mpq(3, 2) and alpha * alpha - 3 * alpha + 1 > 0


def within_two_minus_sqrt3(alpha: Scalar) -> bool:
    """alpha <= 2 - sqrt 3."""
    return alpha < 2 and alpha * alpha - 4 * alpha + 1 >= 0


def _best_in_certificate(alpha: Scalar, k: int) -> bool:
    return alpha <= mpq(3 + k, 2 * k) and k * alpha * alpha - (3 + k) * alpha + 1 >= 0


def best_in_beta(alpha: Scalar, k: int) -> Scalar:
    return (1 - 2 * alpha) / (alpha * k + 1)


@dataclass(frozen=True)
class SortRejectConfig:
    alpha: Scalar = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        a = Q(self.alpha)
        object.__setattr__(self, "alpha", a)
        if a <= 0 or a > 1:
            raise InvalidAlpha(f"alpha = {fmt(a)} outside (0, 1]")
        if not below_golden_bound(a):
            raise InvalidAlpha(f"alpha = {fmt(a)} is not below (3 - sqrt 5)/2")

    @property
    def budget_feasible(self) -> bool:
        """Whether alpha lies in the range where feasibility holds on every instance."""
        return within_two_minus_sqrt3(self.alpha)

    @property
    def head_level(self) -> str:
        return "k"

    def if_test(self, head: Scalar, opt_minus: Scalar) -> bool:
        return head * (1 - self.alpha) >= self.alpha * opt_minus

    def describe(self) -> dict:
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class BestInConfig:
    alpha: Scalar
    beta: Scalar
    k: int

    def __post_init__(self) -> None:
        a, b = Q(self.alpha), Q(self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if self.k < 1:
            raise InvalidAlphaBeta("k must be positive")
        if a <= 0:
            raise InvalidAlphaBeta(f"alpha = {fmt(a)} must be positive")
        if not _best_in_certificate(a, self.k):
            raise InvalidAlphaBeta(f"alpha = {fmt(a)} fails k*a^2 - (3+k)*a + 1 >= 0 for k = {self.k}")
        if b != best_in_beta(a, self.k):
            raise InvalidAlphaBeta(f"beta = {fmt(b)} must equal (1 - 2a)/(a k + 1)")

    @classmethod
    def certified(cls, k: int, alpha: ScalarLike | None = None) -> "BestInConfig":
        a = best_in_alpha(k) if alpha is None else Q(alpha)
        return cls(a, best_in_beta(a, k), k)

    @property
    def head_level(self) -> str:
        return "1"

    def if_test(self, head: Scalar, opt_minus: Scalar) -> bool:
        return head >= self.beta * opt_minus

    def describe(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def best_in_alpha(k: int) -> Scalar:
    """Largest multiple of 1e-6 passing the best-in certificate for ``k``."""
    if k < 1:
        raise InvalidAlphaBeta("k must be positive")
    lo, hi = 0, (3 + k) * _ALPHA_GRID // (2 * k)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _best_in_certificate(mpq(mid, _ALPHA_GRID), k):
            lo = mid
        else:
            hi = mid - 1
    if lo == 0:
        raise InvalidAlphaBeta(f"no certified alpha for k = {k}")
    return mpq(lo, _ALPHA_GRID)


def large_market_alpha(theta: ScalarLike) -> Scalar:
    """Largest multiple of 1e-7 with ``theta + a <= (1 - a)^2``.

    The certificate also forces a < (3 - sqrt 5)/2 for every positive theta.
    """
    t = Q(theta)
    if t <= 0 or t >= 1:
        raise BadTheta(f"theta = {fmt(t)} outside (0, 1)")

    def ok(a: Scalar) -> bool:
        return a < 1 and t + a <= (1 - a) ** 2

    lo, hi = 0, _THETA_GRID
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if ok(mpq(mid, _THETA_GRID)):
            lo = mid
        else:
            hi = mid - 1
    if lo == 0:
        raise BadTheta(f"no positive alpha certified for theta = {fmt(t)}")
    alpha = mpq(lo, _THETA_GRID)
    assert below_golden_bound(alpha)
    return alpha


@dataclass(frozen=True)
class SortRejectTrace:
    i_star: int
    took_if_branch: bool
    initial_floor: tuple[int, ...]
    removals: tuple[tuple[int, int], ...]
    final_last: int | None
    opt_f: Scalar
    opt_minus: tuple[Scalar, ...]
    x_star: tuple[Scalar, ...]
    kept: tuple[tuple[int, int, Scalar], ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "i_star": self.i_star,
            "branch": "if" if self.took_if_branch else "else",
            "initial_floor": list(self.initial_floor),
            "removals": [list(r) for r in self.removals],
            "last": self.final_last,
            "opt_f": fmt(self.opt_f),
            "opt_minus": [fmt(o) for o in self.opt_minus],
        }


def ratio_beats(vi: Scalar, oi: Scalar, vj: Scalar, oj: Scalar) -> bool:
    """Whether vi/oi > vj/oj, an empty competitor market counting as infinite."""
    if oi == 0 and oj == 0:
        return vi > vj
    if oi == 0:
        return True
    if oj == 0:
        return False
    return vi * oj > vj * oi


def head_values(inst: KLevelInstance, cfg) -> list[Scalar]:
    if cfg.head_level == "k":
        return [a.value(inst.k) for a in inst.agents]
    return [a.marginal(1) for a in inst.agents]


def _run(inst: KLevelInstance, cfg, hire: int) -> tuple[Allocation, SortRejectTrace]:
    n, budget = inst.n, inst.budget
    elems = sorted_elements(inst.costs, inst.marginals)
    # greedy fractional optimum, keeping the fully bought prefix in order
    x_star = [ZERO] * n
    prefix: list[tuple[int, int, Scalar]] = []
    opt = ZERO
    rem = budget
    for _, a, j, m, c in elems:
        if rem <= 0:
            break
        if c <= rem:
            rem -= c
            x_star[a] += 1
            opt += m
            prefix.append((a, j, m))
        else:
            x_star[a] += rem / c
            opt += m * rem / c
            break
    floor = tuple(len([1 for a, _, _ in prefix if a == i]) for i in range(n))
    # an agent the greedy never reached leaves the optimum unchanged when removed
    opt_minus = [greedy_value(elems, budget, skip=j) if x_star[j] else opt for j in range(n)]
    heads = head_values(inst, cfg)

    star = 0
    for j in range(1, n):
        if ratio_beats(heads[j], opt_minus[j], heads[star], opt_minus[star]):
            star = j

    if cfg.if_test(heads[star], opt_minus[star]):
        x = [0] * n
        x[star] = hire
        trace = SortRejectTrace(star, True, floor, (), None, opt, tuple(opt_minus), tuple(x_star))
        return Allocation.levels(x, inst.k), trace

    x = list(floor)
    value = sum((m for _, _, m in prefix), ZERO)
    threshold = cfg.alpha * opt
    removals = []
    while len(prefix) > 1 and value - prefix[-1][2] >= threshold:
        a, j, m = prefix.pop()
        x[a] -= 1
        value -= m
        removals.append((a, j))
    if not prefix:
        raise AssertionError("rejection loop emptied the winner set")
    last = prefix[-1][0]
    trace = SortRejectTrace(
        star, False, floor, tuple(removals), last, opt, tuple(opt_minus), tuple(x_star), tuple(prefix)
    )
    return Allocation.levels(x, inst.k), trace


def sort_and_reject(
    inst: KLevelInstance, cfg: SortRejectConfig | None = None
) -> tuple[Allocation, SortRejectTrace]:
    cfg = cfg or SortRejectConfig()
    if inst.regime is not Regime.ALL_IN:
        raise RegimeMismatch("sort-and-reject needs an all-in instance")
    validate_klevel(inst)
    return _run(inst, cfg, inst.k)


def greedy_best_in(
    inst: KLevelInstance, cfg: BestInConfig | None = None
) -> tuple[Allocation, SortRejectTrace]:
    if inst.regime is not Regime.BEST_IN:
        raise RegimeMismatch("greedy-best-in needs a best-in instance")
    cfg = cfg or BestInConfig.certified(inst.k)
    if cfg.k != inst.k:
        raise InvalidAlphaBeta(f"config built for k = {cfg.k}, instance has k = {inst.k}")
    validate_klevel(inst)
    return _run(inst, cfg, 1)


def run_rule(inst: KLevelInstance, cfg) -> tuple[Allocation, SortRejectTrace]:
    if isinstance(cfg, BestInConfig):
        return greedy_best_in(inst, cfg)
    return sort_and_reject(inst, cfg)


def largeness(inst: KLevelInstance, opt_i: Scalar | None = None) -> Scalar:
    """Largest first-level marginal as a share of the integral optimum."""
    opt = brute_opt_integral(inst) if opt_i is None else opt_i
    top = max(a.marginal(1) for a in inst.agents)
    if opt <= 0:
        raise BadTheta("instance carries no value")
    return top / opt


def largeness_upper_bound(inst: KLevelInstance) -> Scalar:
    """Certified upper bound on largeness without enumeration.

    Any feasible integral profile bounds the integral optimum from below; the
    rounded-down greedy solution and any single first level are both feasible.
    """
    elems = sorted_elements(inst.costs, inst.marginals)
    rem, floor_value = inst.budget, ZERO
    for _, _, _, m, c in elems:
        if c > rem:
            break
        rem -= c
        floor_value += m
    top = max(a.marginal(1) for a in inst.agents)
    lower = max(floor_value, top)
    if lower <= 0:
        raise BadTheta("instance carries no value")
    return top / lower


__all__ = [
    "DEFAULT_ALPHA",
    "BadTheta",
    "BestInConfig",
    "InvalidAlpha",
    "InvalidAlphaBeta",
    "RegimeMismatch",
    "SortRejectConfig",
    "SortRejectTrace",
    "below_golden_bound",
    "best_in_alpha",
    "best_in_beta",
    "greedy_best_in",
    "large_market_alpha",
    "largeness",
    "largeness_upper_bound",
    "ratio_beats",
    "run_rule",
    "sort_and_reject",
    "within_two_minus_sqrt3",
]
