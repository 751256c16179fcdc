"""Risk structures for causal factor models.

Expand per-factor phase models, compose them under constraints into
explicit state spaces per driving situation, and analyze mitigation.
"""

from ramkit.dsl import DSLError, load_model, parse_model, parse_process_expr, serialize_model
from ramkit.model import (
    ActionKind,
    ActionLabel,
    CausalFactor,
    CausalFactorModel,
    Constraint,
    ConstraintKind,
    EndangermentClass,
    MitigationClass,
    Phase,
    Situation,
    SituationKind,
    effective_constraints,
    effective_factors,
    validate,
)
from ramkit.planner import check_budget, plan_from, strategy_report
from ramkit.process import jump_targets, sample_scenario, successor_graph
from ramkit.riskspace import (
    BACKEND,
    RiskState,
    RiskStructure,
    compose_factors,
    compose_situation,
    endangerment_subgraph,
    expand_phase_model,
    stats,
)

__all__ = [
    "BACKEND",
    "ActionKind",
    "ActionLabel",
    "CausalFactor",
    "CausalFactorModel",
    "Constraint",
    "ConstraintKind",
    "DSLError",
    "EndangermentClass",
    "MitigationClass",
    "Phase",
    "RiskState",
    "RiskStructure",
    "Situation",
    "SituationKind",
    "check_budget",
    "compose_factors",
    "compose_situation",
    "effective_constraints",
    "effective_factors",
    "endangerment_subgraph",
    "expand_phase_model",
    "jump_targets",
    "load_model",
    "parse_model",
    "parse_process_expr",
    "plan_from",
    "sample_scenario",
    "serialize_model",
    "stats",
    "strategy_report",
    "successor_graph",
    "validate",
]
