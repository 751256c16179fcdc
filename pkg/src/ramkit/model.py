"""Domain types for causal factor models and their well-formedness checks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union


class Phase(enum.IntEnum):
    """Phase of one causal factor; ``INACTIVE`` is the initial phase."""

    INACTIVE = 0
    ACTIVE = 1
    MITIGATED = 2
    MISHAP = 3


class ActionKind(enum.IntEnum):
    ACTIVATE = 0
    MISHAP_STEP = 1
    START_MITIGATE = 2
    END_MITIGATE = 3
    COMPLETE_MITIGATE = 4

    @property
    def is_endangerment(self) -> bool:
        return self in (ActionKind.ACTIVATE, ActionKind.MISHAP_STEP)

    @property
    def is_mitigation(self) -> bool:
        return not self.is_endangerment


class EndangermentClass(enum.Enum):
    FAILURE = "f"
    DISTURBANCE = "d"
    MISUSE = "mu"
    NEAR_MISHAP = "nm"


class MitigationClass(enum.Enum):
    FAIL_SAFE = "failsafe"
    DEESCALATION = "deescalation"
    PROTECTION = "protection"
    UNCONTROLLED = "uncontrolled"
    REPAIR = "repair"


ActionClass = Union[EndangermentClass, MitigationClass]

# Mitigation class assumed when a factor declares none.
DEFAULT_MITIGATION = {
    EndangermentClass.FAILURE: MitigationClass.FAIL_SAFE,
    EndangermentClass.DISTURBANCE: MitigationClass.DEESCALATION,
    EndangermentClass.MISUSE: MitigationClass.PROTECTION,
    EndangermentClass.NEAR_MISHAP: MitigationClass.PROTECTION,
}


@dataclass(frozen=True)
class ActionLabel:
    """An action on one factor.

    ``offline`` marks end-mitigations of factors that can only be repaired
    with the vehicle out of order.
    """

    factor: str
    kind: ActionKind
    cls: ActionClass
    mechanism: Optional[str] = None
    offline: bool = False

    def __post_init__(self) -> None:
        if self.kind.is_endangerment:
            if not isinstance(self.cls, EndangermentClass):
                raise ValueError(f"{self.kind.name} needs an endangerment class")
            if self.mechanism is not None:
                raise ValueError("mechanisms only apply to mitigations")
        elif not isinstance(self.cls, MitigationClass):
            raise ValueError(f"{self.kind.name} needs a mitigation class")
        if self.offline and self.kind is not ActionKind.END_MITIGATE:
            raise ValueError("only end-mitigations can be off-line")

    @property
    def is_endangerment(self) -> bool:
        return self.kind.is_endangerment

    @property
    def is_mitigation(self) -> bool:
        return self.kind.is_mitigation

    def sort_key(self) -> tuple[str, int]:
        return (self.factor, int(self.kind))


@dataclass(frozen=True)
class CausalFactor:
    id: str
    endangerment: EndangermentClass
    name: Optional[str] = None
    mishap: bool = False
    direct: bool = False
    off_repair: bool = False
    re_endanger: bool = False
    mitigation: Optional[MitigationClass] = None
    mechanism: Optional[str] = None

    @property
    def mitigation_class(self) -> MitigationClass:
        if self.mitigation is not None:
            return self.mitigation
        return DEFAULT_MITIGATION[self.endangerment]

    @property
    def display_name(self) -> str:
        return self.name or self.id

    def label(self, kind: ActionKind) -> ActionLabel:
        if kind.is_endangerment:
            return ActionLabel(self.id, kind, self.endangerment)
        return ActionLabel(
            self.id,
            kind,
            self.mitigation_class,
            self.mechanism,
            offline=self.off_repair and kind is ActionKind.END_MITIGATE,
        )


class ConstraintKind(enum.Enum):
    REQUIRES = "requires"
    CAUSES = "causes"
    DENIES = "denies"
    EXCLUDES = "excludes"


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    left: str
    right: str

    def __str__(self) -> str:
        return f"{self.left} {self.kind.value} {self.right}"

    def sort_key(self) -> tuple[str, str, str]:
        return (self.left, self.kind.value, self.right)


class SituationKind(enum.Enum):
    ATOMIC = "atomic"
    ASPECT = "aspect"


@dataclass(frozen=True)
class Situation:
    id: str
    kind: SituationKind = SituationKind.ATOMIC
    factors: frozenset[str] = frozenset()
    constraints: frozenset[Constraint] = frozenset()

    @property
    def is_aspect(self) -> bool:
        return self.kind is SituationKind.ASPECT


@dataclass(frozen=True)
class CausalFactorModel:
    """A whole causal factor model.

    Process definitions are kept symbolic (recursion allowed); ``root`` names
    the definition describing the driving process.
    """

    factors: Mapping[str, CausalFactor] = field(default_factory=dict)
    situations: Mapping[str, Situation] = field(default_factory=dict)
    processes: Mapping[str, "ProcessExpr"] = field(default_factory=dict)
    root: Optional[str] = None
    global_constraints: frozenset[Constraint] = frozenset()

    @property
    def process(self) -> Optional["ProcessExpr"]:
        from ramkit.process import Ref

        return Ref(self.root) if self.root is not None else None

    def factor_order(self) -> dict[str, int]:
        """Declaration index of every factor."""
        return {fid: i for i, fid in enumerate(self.factors)}


def model_cache(model: CausalFactorModel) -> dict:
    """Scratch dict for analyses derived from an (immutable) model."""
    cache = model.__dict__.get("_derived")
    if cache is None:
        cache = {}
        object.__setattr__(model, "_derived", cache)
    return cache


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """A validation finding; ``subject`` identifies the offending declaration."""

    severity: Severity
    location: str
    message: str
    subject: tuple = ()

    def __str__(self) -> str:
        return f"{self.severity.value}: {self.location}: {self.message}"


# Pairs of constraint kinds that may not hold for the same ordered pair.
_CONFLICTS = (
    (ConstraintKind.CAUSES, ConstraintKind.DENIES),
    (ConstraintKind.CAUSES, ConstraintKind.EXCLUDES),
)


def constraint_conflicts(constraints) -> list[tuple[str, str, ConstraintKind, ConstraintKind]]:
    kinds: dict[tuple[str, str], set[ConstraintKind]] = {}
    for c in constraints:
        kinds.setdefault((c.left, c.right), set()).add(c.kind)
    found = []
    for pair in sorted(kinds):
        for a, b in _CONFLICTS:
            if a in kinds[pair] and b in kinds[pair]:
                found.append((pair[0], pair[1], a, b))
    return found


def validate(model: CausalFactorModel) -> list[Diagnostic]:
    """Check every well-formedness rule; an empty list means valid."""
    from ramkit import process as proc

    diags: list[Diagnostic] = []

    def error(location: str, message: str, subject: tuple = ()) -> None:
        diags.append(Diagnostic(Severity.ERROR, location, message, subject))

    for key, f in model.factors.items():
        if not f.id or key != f.id:
            error(f"factor {key!r}", "factor id must be nonempty and match its key", ("factor", key))
        if f.direct and f.off_repair:
            error(f"factor {f.id}", "direct and offRepair are mutually exclusive", ("factor", key))

    def check_constraint(c: Constraint, where: str) -> None:
        loc = f"constraint {c}" + (f" in {where}" if where else "")
        subject = ("constraint", where, c)
        if c.left == c.right:
            error(loc, "constraint relates a factor to itself", subject)
        for fid in (c.left, c.right):
            if fid not in model.factors:
                error(loc, f"unknown factor {fid!r}", subject)

    for c in sorted(model.global_constraints, key=Constraint.sort_key):
        check_constraint(c, "")
    for sid, s in model.situations.items():
        for fid in sorted(s.factors):
            if fid not in model.factors:
                error(f"situation {sid}", f"unknown factor {fid!r}", ("situation", sid))
        for c in sorted(s.constraints, key=Constraint.sort_key):
            check_constraint(c, sid)

    # Conflicts are judged on every constraint set that is composed together.
    reported: set[tuple] = set()
    scopes = [("", model.global_constraints)]
    for sid, s in model.situations.items():
        scopes.append((sid, model.global_constraints | s.constraints))
    for where, cs in scopes:
        for left, right, a, b in constraint_conflicts(cs):
            if (left, right, a, b) in reported:
                continue
            reported.add((left, right, a, b))
            error(
                f"constraint pair ({left}, {right})" + (f" in {where}" if where else ""),
                f"conflicting constraints: {left} {a.value} {right} and {left} {b.value} {right}",
                ("pair", where, left, right),
            )

    diags.extend(proc.process_diagnostics(model))
    if any(d.severity is Severity.ERROR for d in diags):
        return diags

    # Scoped constraints must stay within the factors their scope composes.
    receivers = proc.aspect_receivers(model)
    for sid, s in model.situations.items():
        if s.is_aspect and receivers.get(sid):
            scopes_factors = [effective_factors(model, r) for r in sorted(receivers[sid])]
        else:
            scopes_factors = [effective_factors(model, sid)]
        for c in sorted(s.constraints, key=Constraint.sort_key):
            if not any({c.left, c.right} <= fs for fs in scopes_factors):
                error(
                    f"constraint {c} in {sid}",
                    "constraint references factors outside the situation's effective factor set",
                    ("constraint", sid, c),
                )
        # Superimposed aspects bring their constraints along.
        if not s.is_aspect:
            for left, right, a, b in constraint_conflicts(effective_constraints(model, sid)):
                if (left, right, a, b) in reported:
                    continue
                reported.add((left, right, a, b))
                error(
                    f"constraint pair ({left}, {right}) in {sid}",
                    f"conflicting constraints: {left} {a.value} {right} and {left} {b.value} {right}",
                    ("pair", sid, left, right),
                )
    return diags


def effective_factors(model: CausalFactorModel, situation: str) -> frozenset[str]:
    """Own factors plus those of every aspect superimposed on ``situation``."""
    from ramkit import process as proc

    s = model.situations[situation]
    factors = set(s.factors)
    if not s.is_aspect:
        for aspect in proc.superimposed_aspects(model).get(situation, ()):
            factors |= model.situations[aspect].factors
    return frozenset(factors)


def effective_constraints(model: CausalFactorModel, situation: str) -> frozenset[Constraint]:
    """Global, own and aspect-scoped constraints, filtered to the factor scope."""
    from ramkit import process as proc

    s = model.situations[situation]
    scope = effective_factors(model, situation)
    cs = set(model.global_constraints) | set(s.constraints)
    if not s.is_aspect:
        for aspect in proc.superimposed_aspects(model).get(situation, ()):
            cs |= model.situations[aspect].constraints
    return frozenset(c for c in cs if c.left in scope and c.right in scope)


def phase_symbol(phase: Phase, factor: str) -> str:
    """Plain-text rendering of one non-inactive phase (``~`` overline, ``_`` underline)."""
    return {Phase.ACTIVE: factor, Phase.MITIGATED: "~" + factor, Phase.MISHAP: "_" + factor}.get(
        phase, ""
    )
