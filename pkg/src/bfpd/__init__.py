"""Budget-feasible procurement mechanisms in exact rational arithmetic.

A buyer with a hard budget purchases service from strategic sellers who
privately know their costs.  The package offers two rules for sellers that
supply up to ``k`` discrete units (``sort_and_reject`` and
``greedy_best_in``), two for sellers whose service is divisible
(``prune_and_assign`` and ``chunk_and_solve``), exact threshold payments for
all of them, and an audit harness that checks the guarantees instance by
instance.
"""
from .divisible import chunk_and_solve, prune_and_assign, pruning
from .harness import AuditReport, audit_instance, run_audit
from .klevel import (
    DEFAULT_ALPHA,
    BestInConfig,
    SortRejectConfig,
    best_in_alpha,
    greedy_best_in,
    large_market_alpha,
    sort_and_reject,
)
from .knapsack import brute_opt_integral, exact_opt_fractional_divisible, greedy_fractional, opt_f_klevel
from .mechanisms import MECHANISMS, ModelMismatch, Run, run_mechanism
from .model import (
    Allocation,
    DivisibleInstance,
    KLevelInstance,
    Outcome,
    PiecewiseLinearConcave,
    Q,
    Regime,
    ValidationError,
    dumps_instance,
    loads_instance,
)
from .payments import allocation_curve, klevel_payments

__all__ = [
    "DEFAULT_ALPHA",
    "MECHANISMS",
    "Allocation",
    "AuditReport",
    "BestInConfig",
    "DivisibleInstance",
    "KLevelInstance",
    "ModelMismatch",
    "Outcome",
    "PiecewiseLinearConcave",
    "Q",
    "Regime",
    "Run",
    "SortRejectConfig",
    "ValidationError",
    "allocation_curve",
    "audit_instance",
    "best_in_alpha",
    "brute_opt_integral",
    "chunk_and_solve",
    "dumps_instance",
    "exact_opt_fractional_divisible",
    "greedy_best_in",
    "greedy_fractional",
    "klevel_payments",
    "large_market_alpha",
    "loads_instance",
    "opt_f_klevel",
    "prune_and_assign",
    "pruning",
    "run_audit",
    "run_mechanism",
    "sort_and_reject",
]

__version__ = "0.1.0"
