"""Name-based dispatch from instances to mechanisms, with payments attached."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .divisible import QRule, chunk_and_solve_run, prune_and_assign
from .klevel import (
    BestInConfig,
    SortRejectConfig,
    SortRejectTrace,
    greedy_best_in,
    large_market_alpha,
    sort_and_reject,
)
from .model import (
    DivisibleInstance,
    Instance,
    KLevelInstance,
    Outcome,
    Q,
    Regime,
    ScalarLike,
)
from .payments import KLevelPayments, klevel_payments

MECHANISMS = ("sort-reject", "best-in", "chunk-solve", "prune-assign")


class ModelMismatch(ValueError):
    """The mechanism cannot run on this kind of instance."""


@dataclass(frozen=True)
class Run:
    mechanism: str
    instance: Instance
    config: Any
    outcome: Outcome
    trace: SortRejectTrace | None = None
    payments: KLevelPayments | None = None
    chunked: KLevelInstance | None = None


def make_config(
    mechanism: str,
    inst: Instance,
    alpha: ScalarLike | None = None,
    theta: ScalarLike | None = None,
):
    if alpha is not None and theta is not None:
        raise ValueError("give alpha or theta, not both")
    if mechanism == "prune-assign":
        if alpha is not None or theta is not None:
            raise ValueError("prune-assign takes no alpha")
        return None
    a = large_market_alpha(theta) if theta is not None else (None if alpha is None else Q(alpha))
    if mechanism == "best-in":
        if not isinstance(inst, KLevelInstance):
            raise ModelMismatch("best-in needs a k-level instance")
        return BestInConfig.certified(inst.k, a)
    if mechanism in ("sort-reject", "chunk-solve"):
        return SortRejectConfig() if a is None else SortRejectConfig(a)
    raise ValueError(f"unknown mechanism {mechanism!r}")


def check_compatible(mechanism: str, inst: Instance) -> None:
    if mechanism in ("sort-reject", "best-in"):
        if not isinstance(inst, KLevelInstance):
            raise ModelMismatch(f"{mechanism} needs a k-level instance")
        want = Regime.ALL_IN if mechanism == "sort-reject" else Regime.BEST_IN
        if inst.regime is not want:
            raise ModelMismatch(f"{mechanism} needs the {want.value} regime")
    elif mechanism in ("chunk-solve", "prune-assign"):
        if not isinstance(inst, DivisibleInstance):
            raise ModelMismatch(f"{mechanism} needs a divisible instance")
        if mechanism == "prune-assign" and not all(a.valuation.is_linear for a in inst.agents):
            raise ModelMismatch("prune-assign needs linear valuations")
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")


def run_mechanism(
    mechanism: str,
    inst: Instance,
    config: Any = None,
    *,
    alpha: ScalarLike | None = None,
    theta: ScalarLike | None = None,
    q_rule: QRule | None = None,
) -> Run:
    check_compatible(mechanism, inst)
    cfg = config if config is not None else make_config(mechanism, inst, alpha, theta)
    if mechanism == "prune-assign":
        return Run(mechanism, inst, None, prune_and_assign(inst, q_rule))
    if mechanism == "chunk-solve":
        cr = chunk_and_solve_run(inst, cfg)
        return Run(mechanism, inst, cfg, cr.outcome, cr.trace, cr.payments, cr.chunked)
    rule = sort_and_reject if mechanism == "sort-reject" else greedy_best_in
    alloc, trace = rule(inst, cfg)
    pay = klevel_payments(cfg, inst, alloc)
    diag = dict(cfg.describe())
    diag.update(trace.to_json())
    diag["critical_payments"] = {
        str(cp.agent): list(cp.per_level) for cp in pay.per_agent if cp is not None
    }
    outcome = Outcome(alloc, pay.payments, inst.value(alloc.quantities), diag)
    return Run(mechanism, inst, cfg, outcome, trace, pay)
