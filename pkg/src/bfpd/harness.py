"""Seeded instance generators and the exact property audit.

Every check compares exact rationals.  A property records a *slack* (how far
the inequality is from failing; negative means violated) so reports can show
the tightest case seen, with the instance that produced it.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from gmpy2 import mpq

from .divisible import (
    area_to_cutoff,
    discretize,
    linear_values,
    pruning,
    pruning_robustness_check,
    share_at,
)
from .klevel import (
    BestInConfig,
    SortRejectConfig,
    largeness_upper_bound,
    run_rule,
    sort_and_reject,
)
from .knapsack import (
    brute_opt_integral,
    exact_opt_fractional_divisible,
    greedy_fractional,
    greedy_value,
    sorted_elements,
)
from .mechanisms import Run, run_mechanism
from .model import (
    ZERO,
    DivisibleAgent,
    DivisibleInstance,
    Instance,
    KLevelAgent,
    KLevelInstance,
    PiecewiseLinearConcave,
    Regime,
    Scalar,
    fmt,
    instance_to_json,
)
from .payments import StepFunction, allocation_curve, myerson_payment

_COST_DENOMS = (1, 2, 3, 4, 5, 6, 8, 10, 12, 20, 100, 250)
_VALUE_DENOMS = (1, 2, 3, 4, 6, 10)


# ---------------------------------------------------------------- generators


def _rng(*parts: Any) -> random.Random:
    return random.Random("/".join(str(p) for p in parts))


def _fraction_of(rng: random.Random, whole: Scalar) -> Scalar:
    den = rng.choice(_COST_DENOMS)
    return whole * mpq(rng.randint(1, den), den)


def gen_klevel(seed: int, n: int, k: int, regime: Regime | str = Regime.ALL_IN) -> KLevelInstance:
    """Deterministic random k-level instance with budget 1.

    Small denominators and occasional copied rows make exact ties common.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    regime = Regime(regime)
    rng = _rng("klevel", seed, n, k, regime.value)
    budget = mpq(1)
    cap = budget / k if regime is Regime.ALL_IN else budget
    # flat markets: cheap, similar agents, so that no single agent dominates
    flat = rng.random() < 0.5
    agents = []
    for i in range(n):
        if agents and rng.random() < 0.15:
            cost = rng.choice(agents).cost
        else:
            cost = _fraction_of(rng, cap / 4 if flat else cap)
        if agents and rng.random() < 0.15:
            marg = rng.choice(agents).marginals
        else:
            d = rng.choice(_VALUE_DENOMS)
            lo = 3 * d if flat else 0
            marg = tuple(sorted((mpq(rng.randint(lo, 4 * d), d) for _ in range(k)), reverse=True))
        agents.append(KLevelAgent(i, cost, marg))
    return KLevelInstance(tuple(agents), budget, k, regime)


def gen_divisible(seed: int, n: int, linear: bool = False) -> DivisibleInstance:
    """Deterministic random divisible instance with budget 1."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng("divisible", seed, n, int(linear))
    budget = mpq(1)
    flat = rng.random() < 0.5
    agents = []
    for i in range(n):
        cost = _fraction_of(rng, budget / 3 if flat else budget)
        d = rng.choice(_VALUE_DENOMS)
        if linear:
            v = PiecewiseLinearConcave.linear(mpq(rng.randint(0, 4 * d), d) if rng.random() < 0.05 else mpq(rng.randint(1, 4 * d), d))
        else:
            grid = rng.choice((2, 3, 4, 6))
            cuts = sorted(rng.sample(range(1, grid), rng.randint(0, min(2, grid - 1))))
            xs = [mpq(0)] + [mpq(c, grid) for c in cuts] + [mpq(1)]
            lo = 3 * d if flat else 0
            slopes = sorted((mpq(rng.randint(lo, 6 * d), d) for _ in range(len(xs) - 1)), reverse=True)
            pts = [(xs[0], mpq(0))]
            for x0, x1, s in zip(xs, xs[1:], slopes):
                pts.append((x1, pts[-1][1] + s * (x1 - x0)))
            v = PiecewiseLinearConcave(tuple(pts))
        agents.append(DivisibleAgent(i, cost, v))
    return DivisibleInstance(tuple(agents), budget)


def large_market_shape(theta: Scalar) -> tuple[int, int]:
    """A market size (n, k) with enough levels to reach largeness ``theta``."""
    levels = int(mpq(2) / theta) + 1
    k = 2 if levels <= 12 else 3 if levels <= 24 else 4
    return -(-levels // k), k


def gen_large_market(seed: int, theta: Scalar, n: int | None = None, k: int | None = None,
                     attempts: int = 2000) -> KLevelInstance:
    """All-in instance whose certified largeness bound is at most ``theta``.

    Many similar levels with costs sized so that about ``1.25/theta`` of them
    fit; candidates are rejection-sampled against the certified upper bound.
    """
    theta = mpq(theta)
    if n is None or k is None:
        n, k = large_market_shape(theta)
    unit = theta * 4 / 5  # mean level cost as a share of the budget
    for attempt in range(attempts):
        rng = _rng("large", seed, fmt(theta), n, k, attempt)
        agents = []
        for i in range(n):
            cost = min(unit * mpq(rng.randint(12, 28), 20), mpq(1, k))
            marg = tuple(sorted((mpq(rng.randint(16, 20), 20) for _ in range(k)), reverse=True))
            agents.append(KLevelAgent(i, cost, marg))
        inst = KLevelInstance(tuple(agents), mpq(1), k, Regime.ALL_IN)
        if largeness_upper_bound(inst) <= theta:
            return inst
    raise RuntimeError(f"no instance with certified largeness <= {fmt(theta)} found")


def klevel_trial(seed: int, trial: int, n_max: int, k_max: int, regime: Regime | str) -> KLevelInstance:
    rng = _rng("trial", seed, trial, Regime(regime).value)
    n = n_max if rng.random() < 0.4 else rng.randint(1, n_max)
    return gen_klevel(seed * 1_000_003 + trial, n, rng.randint(1, k_max), regime)


def divisible_trial(seed: int, trial: int, n_max: int, linear: bool) -> DivisibleInstance:
    rng = _rng("dtrial", seed, trial, int(linear))
    n = n_max if rng.random() < 0.4 else rng.randint(1, n_max)
    return gen_divisible(seed * 1_000_003 + trial, n, linear)


# ---------------------------------------------------------------- reports


@dataclass
class PropertyStats:
    passed: int = 0
    failed: int = 0
    worst_slack: Scalar | None = None
    worst_instance: Instance | None = None
    worst_detail: str = ""
    first_failure: Instance | None = None
    failure_detail: str = ""

    def to_json(self) -> dict:
        out: dict = {"passed": self.passed, "failed": self.failed}
        if self.worst_slack is not None:
            out["worst_slack"] = fmt(self.worst_slack)
            out["worst_witness"] = {
                "detail": self.worst_detail,
                "instance": instance_to_json(self.worst_instance),
            }
        if self.first_failure is not None:
            out["failure_witness"] = {
                "detail": self.failure_detail,
                "instance": instance_to_json(self.first_failure),
            }
        return out


@dataclass
class AuditReport:
    mechanism: str = ""
    trials: int = 0
    properties: dict[str, PropertyStats] = field(default_factory=dict)

    def record(self, name: str, ok: bool, inst: Instance, slack: Scalar | None = None, detail: str = "") -> bool:
        st = self.properties.setdefault(name, PropertyStats())
        if ok:
            st.passed += 1
        else:
            st.failed += 1
            if st.first_failure is None:
                st.first_failure = inst
                st.failure_detail = detail
        if slack is not None and (st.worst_slack is None or slack < st.worst_slack):
            st.worst_slack = slack
            st.worst_instance = inst
            st.worst_detail = detail
        return ok

    def at_least(self, name: str, lhs: Scalar, rhs: Scalar, inst: Instance, detail: str = "") -> bool:
        return self.record(name, lhs >= rhs, inst, lhs - rhs, detail)

    def above(self, name: str, lhs: Scalar, rhs: Scalar, inst: Instance, detail: str = "") -> bool:
        return self.record(name, lhs > rhs, inst, lhs - rhs, detail)

    def merge(self, other: "AuditReport") -> "AuditReport":
        self.trials += other.trials
        for name, st in other.properties.items():
            mine = self.properties.setdefault(name, PropertyStats())
            mine.passed += st.passed
            mine.failed += st.failed
            if st.first_failure is not None and mine.first_failure is None:
                mine.first_failure, mine.failure_detail = st.first_failure, st.failure_detail
            if st.worst_slack is not None and (mine.worst_slack is None or st.worst_slack < mine.worst_slack):
                mine.worst_slack = st.worst_slack
                mine.worst_instance = st.worst_instance
                mine.worst_detail = st.worst_detail
        return self

    @property
    def failures(self) -> int:
        return sum(st.failed for st in self.properties.values())

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def failed_properties(self) -> list[str]:
        return sorted(n for n, st in self.properties.items() if st.failed)

    def to_json(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "trials": self.trials,
            "ok": self.ok,
            "properties": {n: self.properties[n].to_json() for n in sorted(self.properties)},
        }

    def summary_table(self) -> str:
        rows = [("property", "passed", "failed", "worst slack")]
        for n in sorted(self.properties):
            st = self.properties[n]
            slack = "-" if st.worst_slack is None else fmt(st.worst_slack)
            if len(slack) > 28:
                slack = slack[:25] + "..."
            rows.append((n, str(st.passed), str(st.failed), slack))
        widths = [max(len(r[c]) for r in rows) for c in range(4)]
        lines = ["  ".join(r[c].ljust(widths[c]) for c in range(4)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


# ---------------------------------------------------------------- truthfulness


def _deviations(cap: Scalar, grid: int, points: Iterable[Scalar]) -> list[Scalar]:
    eps = cap / 10**6
    out = {cap * mpq(t, grid) for t in range(1, grid + 1)}
    for p in points:
        for z in (p - eps, p, p + eps):
            if 0 < z <= cap:
                out.add(z)
    return sorted(out)


def _klevel_truthfulness(rep: AuditReport, cfg, inst: KLevelInstance, payments, grid: int,
                         allocate: Callable[[int, Scalar], int], report_inst: Instance) -> None:
    """Utility at the truth against every deviation, with the rule re-run at each bid."""
    cap = inst.cap
    base_alloc = run_rule(inst, cfg)[0].ints()
    for i, agent in enumerate(inst.agents):
        c = agent.cost
        truth = payments[i] - c * base_alloc[i]
        probe = allocation_curve(cfg, inst, i, start=min(c, cap / (4 * grid)))
        devs = _deviations(cap, grid, list(probe.thresholds) + [c])
        curve = allocation_curve(cfg, inst, i, start=devs[0]) if devs[0] < probe.start else probe
        prev = None
        for b in devs:
            x_b = allocate(i, b)
            if prev is not None:
                rep.record("monotone", x_b <= prev, report_inst, None, f"agent {i} bid {fmt(b)}")
            prev = x_b
            rep.record("curve-matches-rule", curve(b) == x_b, report_inst, None,
                       f"agent {i} bid {fmt(b)}")
            u = myerson_payment(curve, b, x_b) - c * x_b
            rep.at_least("truthful", truth, u, report_inst, f"agent {i} bid {fmt(b)}")
        rep.at_least("truthful-vs-exit", truth, ZERO, report_inst, f"agent {i} bids above cap")


def check_truthfulness(run: Run, grid: int = 4, rep: AuditReport | None = None) -> AuditReport:
    """No agent gains by misreporting, over a grid plus every threshold and nearby bids."""
    rep = rep or AuditReport(run.mechanism)
    inst = run.instance
    if run.mechanism in ("sort-reject", "best-in"):
        cfg = run.config

        def allocate(i, b):
            return run_rule(inst.with_cost(i, b), cfg)[0].ints()[i]

        _klevel_truthfulness(rep, cfg, inst, run.outcome.payments, grid, allocate, inst)
    elif run.mechanism == "chunk-solve":
        J, cfg, n = run.chunked, run.config, inst.n

        # a divisible report of n * b only moves agent i's chunk cost to b
        for i, agent in enumerate(inst.agents):
            alt = agent.cost * mpq(3, 2)
            rep.record("chunk-cost-commutes", discretize(inst.with_cost(i, alt)) == J.with_cost(i, alt / n),
                       inst, None, f"agent {i}")

        def allocate(i, b):
            return sort_and_reject(J.with_cost(i, b), cfg)[0].ints()[i]

        _klevel_truthfulness(rep, cfg, J, run.outcome.payments, grid, allocate, inst)
    else:
        _prune_truthfulness(rep, run, grid)
    return rep


def _prune_truthfulness(rep: AuditReport, run: Run, grid: int) -> None:
    inst = run.instance
    v = linear_values(inst)
    r = run.outcome.diagnostics["r"]
    for i, agent in enumerate(inst.agents):
        c = agent.cost
        truth = run.outcome.payments[i] - c * run.outcome.allocation[i]
        pts = [c]
        if run.outcome.allocation[i] > 0:
            pts.append(v[i] / r)
        prev = None
        for b in _deviations(inst.budget, grid, pts):
            dev = run_mechanism("prune-assign", inst.with_cost(i, b))
            x_b = dev.outcome.allocation[i]
            if prev is not None:
                rep.record("monotone", x_b <= prev, inst, None, f"agent {i} bid {fmt(b)}")
            prev = x_b
            u = dev.outcome.payments[i] - c * x_b
            rep.at_least("truthful", truth, u, inst, f"agent {i} bid {fmt(b)}")
        rep.at_least("truthful-vs-exit", truth, ZERO, inst, f"agent {i} bids above budget")


# ---------------------------------------------------------------- core properties


def _ir_bf(rep: AuditReport, run: Run, unit_costs: list[Scalar], quantities) -> None:
    inst = run.instance
    for i, p in enumerate(run.outcome.payments):
        rep.at_least("individually-rational", p, unit_costs[i] * quantities[i], inst, f"agent {i}")
        if quantities[i] == 0:
            rep.record("loser-paid-nothing", p == 0, inst, None, f"agent {i}")
    rep.at_least("budget-feasible", inst.budget, run.outcome.total_payment, inst)


def _klevel_invariants(rep: AuditReport, run: Run, J: KLevelInstance, cfg, opt_i: Scalar | None,
                   report_inst: Instance, tag: str = "") -> None:
    """Structural facts about one run of the k-level rule on ``J``."""
    tr = run.trace
    x = run.trace_levels
    a = cfg.alpha
    B = J.budget
    val = J.value([mpq(q) for q in x])
    sol = greedy_fractional(J)
    nonint = sum(1 for q in sol.x if q.denominator != 1)
    rep.record(f"{tag}greedy-one-fractional", nonint <= 1, report_inst)
    rep.record(f"{tag}greedy-value-formula", sol.value == J.value(sol.x) == tr.opt_f, report_inst)
    rep.at_least(f"{tag}guarantee-fractional", val, a * tr.opt_f, report_inst)

    # payment identity: level sum equals the rectangle form
    for i, cp in enumerate(run.payments.per_agent):
        if cp is None:
            continue
        curve = run.payments.curves[i]
        c = J.agents[i].cost
        rep.record(f"{tag}payment-identity", cp.total == c * x[i] + curve.integral(c), report_inst,
                   None, f"agent {i}")
        for j, pij in enumerate(cp.per_level, start=1):
            rep.record(f"{tag}threshold-in-range", c <= pij <= J.cap, report_inst, None, f"agent {i} level {j}")

    if tr.took_if_branch:
        hire = 1 if isinstance(cfg, BestInConfig) else J.k
        expect = [hire if i == tr.i_star else 0 for i in range(J.n)]
        rep.record(f"{tag}trace-replay", list(x) == expect, report_inst)
        return

    replay = list(tr.initial_floor)
    for agent, _ in tr.removals:
        replay[agent] -= 1
    rep.record(f"{tag}trace-replay", replay == list(x), report_inst)
    rep.record(f"{tag}below-greedy", all(x[i] <= sol.x[i] for i in range(J.n)), report_inst)

    last = tr.final_last
    m_last = J.agents[last].marginal(x[last])
    om = tr.opt_minus
    scale = B / (1 - a)
    if isinstance(cfg, SortRejectConfig):
        total = run.outcome.total_payment
        rep.above(f"{tag}payment-sum-bound", scale * (m_last / om[last] + a / (1 - a)), total, report_inst)
        rep.above(f"{tag}last-winner-cost", scale * m_last / tr.opt_f, J.agents[last].cost, report_inst)
        for i, cp in enumerate(run.payments.per_agent):
            if cp is None:
                continue
            for j, pij in enumerate(cp.per_level, start=1):
                rep.at_least(f"{tag}per-level-payment", scale * J.agents[i].marginal(j) / om[i], pij,
                             report_inst, f"agent {i} level {j}")
        for i in range(J.n):
            rep.above(f"{tag}excluded-optimum", om[i], (1 - a) / a * (val - m_last), report_inst, f"agent {i}")
        if opt_i is not None and opt_i > 0:
            theta = max(ag.marginal(1) for ag in J.agents) / opt_i
            for i in range(J.n):
                if x[i] > 0:
                    rep.at_least(f"{tag}largeness-floor", theta,
                                 (1 - a) * J.agents[i].marginal(x[i]) / om[i], report_inst, f"agent {i}")
    else:
        factor = 1 + cfg.beta * J.k
        for i in range(J.n):
            if x[i] > 0:
                rep.at_least(f"{tag}excluded-optimum-best-in", factor * om[i], tr.opt_f, report_inst, f"agent {i}")


def check_core_properties(run: Run, rep: AuditReport | None = None, *, with_integral: bool = True,
                          theta_bound: Scalar | None = None) -> AuditReport:
    """Budget feasibility, individual rationality, guarantees and structural invariants."""
    rep = rep or AuditReport(run.mechanism)
    inst = run.instance
    out = run.outcome
    if run.mechanism in ("sort-reject", "best-in"):
        cfg = run.config
        xs = out.allocation.ints()
        _ir_bf(rep, run, list(inst.costs), xs)
        opt_i = None
        if with_integral:
            opt_i = brute_opt_integral(inst)
            rep.at_least("fractional-above-integral", run.trace.opt_f, opt_i, inst)
        if opt_i is not None:
            rep.at_least("guarantee-integral", out.value, cfg.alpha * opt_i, inst)
        _klevel_invariants(rep, _with_levels(run, xs), inst, cfg, opt_i, inst)
        if theta_bound is not None and not run.trace.took_if_branch:
            a = cfg.alpha
            for i in range(inst.n):
                if xs[i] > 0:
                    rep.at_least("largeness-bound-consistent", theta_bound,
                                 (1 - a) * inst.agents[i].marginal(xs[i]) / run.trace.opt_minus[i], inst,
                                 f"agent {i}")
    elif run.mechanism == "chunk-solve":
        _chunk_properties(rep, run)
    else:
        _prune_properties(rep, run)
    return rep


class _LevelsView:
    """A run seen through the integer level counts of its k-level stage."""

    def __init__(self, run: Run, levels):
        self._run = run
        self.trace_levels = levels

    def __getattr__(self, name):
        return getattr(self._run, name)


def _with_levels(run: Run, levels) -> _LevelsView:
    return _LevelsView(run, levels)


def _scaled_payment(curve: StepFunction, n: int, cost: Scalar, levels: int) -> Scalar:
    """Payment computed on the divisible side: cost axis stretched by n, quantity shrunk by n."""
    stretched = StepFunction(curve.start * n, curve.cap * n, tuple(t * n for t in curve.thresholds))
    return cost * mpq(levels, n) + stretched.integral(cost) / n


def _chunk_properties(rep: AuditReport, run: Run) -> None:
    inst: DivisibleInstance = run.instance
    J = run.chunked
    cfg = run.config
    n = inst.n
    levels = [int(q * n) for q in run.outcome.allocation.quantities]
    _ir_bf(rep, run, list(inst.costs), run.outcome.allocation.quantities)
    opt = exact_opt_fractional_divisible(inst)
    opt_n = greedy_value(sorted_elements(J.costs, J.marginals), J.budget)
    rep.at_least("discretization-loss", 2 * opt_n, opt, inst)
    rep.at_least("guarantee-half-alpha", run.outcome.value, cfg.alpha / 2 * opt, inst)
    rep.record("chunk-value-matches", run.outcome.value == J.value([mpq(q) for q in levels]), inst)
    for i, cp in enumerate(run.payments.per_agent):
        if cp is None:
            continue
        p_div = _scaled_payment(run.payments.curves[i], n, inst.agents[i].cost, levels[i])
        rep.record("chunk-payment-equality", p_div == run.outcome.payments[i], inst, None, f"agent {i}")
    _klevel_invariants(rep, _with_levels(run, levels), J, cfg, None, inst, tag="chunked/")


def _prune_properties(rep: AuditReport, run: Run) -> None:
    inst: DivisibleInstance = run.instance
    out = run.outcome
    v = linear_values(inst)
    c = inst.costs
    B = inst.budget
    _ir_bf(rep, run, list(c), out.allocation.quantities)
    opt = exact_opt_fractional_divisible(inst)
    rep.at_least("guarantee-two", 2 * out.value, opt, inst)
    d = out.diagnostics
    S, T, star, r = d["S"], d["T"], d["i_star"], d["r"]
    if not S:
        rep.record("empty-winners-worthless", all(vi == 0 for vi in v), inst)
        return
    vS = sum((v[i] for i in S), ZERO)
    vT = sum((v[i] for i in T), ZERO)
    for i in S:
        rep.record("rate-window", c[i] <= v[i] / r <= B, inst, None, f"agent {i}")
    if len(S) >= 2:
        rep.record("rest-below-budget-value", vT <= r * B < vS, inst)
    else:
        rep.record("singleton-rate", vT == 0 and r * B == vS, inst)
    cS = sum((c[i] for i in S), ZERO)
    rep.at_least("optimum-upper-bound", vS + r * (B - cS), opt, inst)
    q, q_star, q_T = d["q"], d["q_star"], d["q_T"]
    rep.record("share-identity", r * B / 2 == q_star * v[star] + (1 - q_star - q) * vT, inst)
    rep.record("q-in-range", 0 <= q <= mpq(1, 2), inst)
    for i in S:
        share = q_star if i == star else q_T
        ends = (share_at(v[i], share, r, ZERO), share_at(v[i], share, r, v[i] / r))
        rep.record("fraction-in-unit-interval", all(0 <= e <= 1 for e in ends), inst, None, f"agent {i}")
        p_check = c[i] * out.allocation[i] + area_to_cutoff(v[i], share, r, c[i])
        rep.record("payment-closed-form", p_check == out.payments[i], inst, None, f"agent {i}")
    rep.at_least("payment-half-budget-bound", B / 2 + vS / (4 * r), out.total_payment, inst)
    pr = pruning(inst)
    for i in S:
        for alt in (c[i] / 2, (c[i] + v[i] / r) / 2, v[i] / r, c[i] / 7):
            if not 0 < alt <= B:
                continue
            same = pruning_robustness_check(inst, i, alt)
            if same is not None:
                rep.record("filter-robust", same, inst, None, f"agent {i} alt {fmt(alt)}")
    rep.record("filter-rerun-stable", pr.rate == r and sorted(pr.S) == S, inst)


# ---------------------------------------------------------------- metamorphic checks


def scaled_costs(inst: Instance, lam: Scalar) -> Instance:
    if isinstance(inst, KLevelInstance):
        agents = tuple(KLevelAgent(a.id, a.cost * lam, a.marginals) for a in inst.agents)
        return KLevelInstance(agents, inst.budget * lam, inst.k, inst.regime)
    agents = tuple(DivisibleAgent(a.id, a.cost * lam, a.valuation) for a in inst.agents)
    return DivisibleInstance(agents, inst.budget * lam)


def scaled_values(inst: KLevelInstance, lam: Scalar) -> KLevelInstance:
    agents = tuple(KLevelAgent(a.id, a.cost, tuple(m * lam for m in a.marginals)) for a in inst.agents)
    return KLevelInstance(agents, inst.budget, inst.k, inst.regime)


def check_cost_scaling(run: Run, lam: Scalar, rep: AuditReport | None = None) -> AuditReport:
    rep = rep or AuditReport(run.mechanism)
    other = run_mechanism(run.mechanism, scaled_costs(run.instance, lam), run.config)
    rep.record("cost-scaling-allocation", other.outcome.allocation == run.outcome.allocation, run.instance)
    rep.record(
        "cost-scaling-payments",
        list(other.outcome.payments) == [p * lam for p in run.outcome.payments],
        run.instance,
    )
    return rep


def check_value_scaling(run: Run, lam: Scalar, rep: AuditReport | None = None) -> AuditReport:
    rep = rep or AuditReport(run.mechanism)
    other = run_mechanism(run.mechanism, scaled_values(run.instance, lam), run.config)
    rep.record("value-scaling-allocation", other.outcome.allocation == run.outcome.allocation, run.instance)
    return rep


# ---------------------------------------------------------------- audit driver


def trial_instance(mechanism: str, seed: int, trial: int, n_max: int, k_max: int) -> Instance:
    if mechanism == "sort-reject":
        return klevel_trial(seed, trial, n_max, k_max, Regime.ALL_IN)
    if mechanism == "best-in":
        return klevel_trial(seed, trial, n_max, k_max, Regime.BEST_IN)
    if mechanism == "chunk-solve":
        return divisible_trial(seed, trial, n_max, linear=False)
    if mechanism == "prune-assign":
        return divisible_trial(seed, trial, n_max, linear=True)
    raise ValueError(f"unknown mechanism {mechanism!r}")


def audit_instance(mechanism: str, inst: Instance, rep: AuditReport, *, grid: int = 4,
                   truthfulness: bool = True, q_rule=None, config=None,
                   with_integral: bool = True, theta_bound: Scalar | None = None) -> Run:
    run = run_mechanism(mechanism, inst, config, q_rule=q_rule)
    check_core_properties(run, rep, with_integral=with_integral, theta_bound=theta_bound)
    if truthfulness:
        check_truthfulness(run, grid, rep)
    rep.trials += 1
    return run


def run_audit(mechanism: str, trials: int, seed: int, n_max: int = 5, k_max: int = 4, *,
              grid: int = 4, truthfulness: bool = True, q_rule=None) -> AuditReport:
    rep = AuditReport(mechanism)
    for t in range(trials):
        inst = trial_instance(mechanism, seed, t, n_max, k_max)
        audit_instance(mechanism, inst, rep, grid=grid, truthfulness=truthfulness, q_rule=q_rule)
    return rep
