"""Task features, regime detection, handoff masks, beliefs and folded signatures.

A signature is the discrete key of the policy graph: the regime label, a 7-bit
mask of populated handoff fields, and the bucketed indices of four belief
estimates. Handoff quality is tracked as a fifth belief but never folded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Mapping, Optional


class Regime(str, Enum):
    STRAIGHTFORWARD = "straightforward"
    EVIDENCE_HEAVY = "evidence_heavy"
    AMBIGUOUS = "ambiguous"
    CONTRADICTORY = "contradictory"
    HIGH_RISK = "high_risk"
    EXPLORATORY = "exploratory"


HANDOFF_FIELDS = (
    "goal",
    "subproblem",
    "evidence",
    "critique",
    "verification",
    "draft_answer",
    "merged_answer",
)

BELIEF_FIELDS = (
    "correctness",
    "uncertainty",
    "contradiction_risk",
    "evidence_sufficiency",
    "handoff_quality",
)
FOLDED_BELIEFS = BELIEF_FIELDS[:4]

ROLES = ("planner", "memory", "solver", "critic", "verifier", "synthesiser", "evaluator")
VERDICTS = ("supported", "refuted", "inconclusive")


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class TaskFeatures:
    ambiguity: float
    contradiction_risk: float
    evidence_availability: float
    verification_need: float
    # evaluation-only; routing never reads it
    class_tag: str = ""

    def __post_init__(self):
        for name in ("ambiguity", "contradiction_risk", "evidence_availability", "verification_need"):
            _check_unit(name, getattr(self, name))


@dataclass(frozen=True)
class HandoffState:
    goal: Optional[str] = None
    subproblem: Optional[str] = None
    evidence: Optional[tuple] = None
    critique: Optional[str] = None
    verification: Optional[str] = None
    draft_answer: Optional[str] = None
    merged_answer: Optional[str] = None

    def write(self, **updates) -> "HandoffState":
        unknown = set(updates) - set(HANDOFF_FIELDS)
        if unknown:
            raise KeyError(f"unknown handoff fields: {sorted(unknown)}")
        if "evidence" in updates and updates["evidence"] is not None:
            updates["evidence"] = tuple(self.evidence or ()) + tuple(updates["evidence"])
        return replace(self, **updates)


@dataclass(frozen=True)
class BeliefVector:
    correctness: float = 0.5
    uncertainty: float = 0.5
    contradiction_risk: float = 0.5
    evidence_sufficiency: float = 0.5
    handoff_quality: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            _check_unit(f.name, getattr(self, f.name))

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in BELIEF_FIELDS)


@dataclass(frozen=True)
class Signature:
    regime: Regime
    handoff_mask: str
    belief_buckets: tuple

    def canonical(self) -> str:
        buckets = ",".join(str(b) for b in self.belief_buckets)
        return f"{self.regime.value}|{self.handoff_mask}|{buckets}"

    @classmethod
    def parse(cls, text: str) -> "Signature":
        try:
            regime, mask, buckets = text.strip().split("|")
            parsed = tuple(int(b) for b in buckets.split(","))
        except ValueError as exc:
            raise ValueError(f"malformed signature {text!r}") from exc
        if len(mask) != 7 or set(mask) - {"0", "1"} or len(parsed) != 4:
            raise ValueError(f"malformed signature {text!r}")
        return cls(Regime(regime), mask, parsed)

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class AgentContribution:
    """What one agent role observably produced in a step."""

    subproblem_set: bool = False
    evidence_count: int = 0
    draft: bool = False
    critique: bool = False
    verdict: Optional[str] = None
    merged: bool = False

    def __post_init__(self):
        if self.evidence_count < 0:
            raise ValueError("evidence_count must be nonnegative")
        if self.verdict is not None and self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass(frozen=True)
class RegimeRules:
    """First-match thresholds for the rule-based regime detector."""

    contradictory_risk: float = 0.6
    high_risk_verification: float = 0.7
    ambiguous_ambiguity: float = 0.6
    evidence_heavy_availability: float = 0.6
    evidence_heavy_verification: float = 0.3
    exploratory_ambiguity: float = 0.4
    exploratory_availability: float = 0.4


def _default_deltas() -> dict:
    # keys are belief-field names, values are signed steps
    return {
        "planner": {"handoff_quality": 0.10, "uncertainty": -0.05},
        "memory": {"uncertainty": -0.05, "handoff_quality": 0.05},
        "memory_per_item": 0.05,
        "memory_cap": 0.20,
        "solver": {"correctness": 0.15, "uncertainty": -0.10, "handoff_quality": 0.10},
        "critic": {"contradiction_risk": 0.10, "uncertainty": 0.03},
        "verifier_supported": {
            "correctness": 0.15,
            "uncertainty": -0.10,
            "contradiction_risk": -0.10,
            "evidence_sufficiency": 0.10,
        },
        "verifier_refuted": {"correctness": -0.15, "uncertainty": 0.10, "contradiction_risk": 0.10},
        "verifier_inconclusive": {"uncertainty": 0.05},
        "synthesiser": {"correctness": 0.05, "handoff_quality": 0.10, "uncertainty": -0.05},
    }


@dataclass
class SignatureConfig:
    granularity: int = 5
    initial_beliefs: BeliefVector = field(default_factory=BeliefVector)
    belief_deltas: dict = field(default_factory=_default_deltas)
    regime_rules: RegimeRules = field(default_factory=RegimeRules)

    def __post_init__(self):
        if int(self.granularity) < 1:
            raise ValueError("granularity must be >= 1")

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> "SignatureConfig":
        data = dict(data or {})
        deltas = _default_deltas()
        for role, table in (data.get("belief_deltas") or {}).items():
            if isinstance(table, Mapping):
                deltas.setdefault(role, {}).update(table)
            else:
                deltas[role] = table
        return cls(
            granularity=int(data.get("granularity", 5)),
            initial_beliefs=BeliefVector(**(data.get("initial_beliefs") or {})),
            belief_deltas=deltas,
            regime_rules=RegimeRules(**(data.get("regime_rules") or {})),
        )


def detect_regime(features: TaskFeatures, rules: RegimeRules = RegimeRules()) -> Regime:
    f = features
    if f.contradiction_risk >= rules.contradictory_risk:
        return Regime.CONTRADICTORY
    if f.verification_need >= rules.high_risk_verification:
        return Regime.HIGH_RISK
    if f.ambiguity >= rules.ambiguous_ambiguity:
        return Regime.AMBIGUOUS
    if (
        f.evidence_availability >= rules.evidence_heavy_availability
        and f.verification_need >= rules.evidence_heavy_verification
    ):
        return Regime.EVIDENCE_HEAVY
    if f.ambiguity >= rules.exploratory_ambiguity and f.evidence_availability < rules.exploratory_availability:
        return Regime.EXPLORATORY
    return Regime.STRAIGHTFORWARD


def _populated(value) -> bool:
    if value is None:
        return False
    if isinstance(value, (str, tuple, list)):
        return len(value) > 0
    return True


def handoff_mask(state: HandoffState) -> str:
    """Bit string in the fixed order of ``HANDOFF_FIELDS``."""
    return "".join("1" if _populated(getattr(state, name)) else "0" for name in HANDOFF_FIELDS)


def bucket_belief(value: float, granularity: int) -> int:
    if granularity < 1:
        raise ValueError("granularity must be >= 1")
    _check_unit("value", value)
    return min(int(math.floor(value * granularity)), granularity - 1)


def fold_signature(
    regime: Regime, state: HandoffState, beliefs: BeliefVector, granularity: int = 5
) -> Signature:
    buckets = tuple(bucket_belief(getattr(beliefs, name), granularity) for name in FOLDED_BELIEFS)
    return Signature(Regime(regime), handoff_mask(state), buckets)


def init_beliefs(config: Optional[SignatureConfig] = None, **overrides) -> BeliefVector:
    base = config.initial_beliefs if config is not None else BeliefVector()
    return replace(base, **overrides) if overrides else base


def _shift(beliefs: BeliefVector, deltas: Mapping[str, float]) -> BeliefVector:
    values = {}
    for name, step in deltas.items():
        if name not in BELIEF_FIELDS:
            raise KeyError(f"unknown belief {name!r}")
        # rounding keeps bucket edges stable under repeated float steps
        values[name] = round(min(1.0, max(0.0, getattr(beliefs, name) + step)), 10)
    return replace(beliefs, **values)


def apply_contribution(
    beliefs: BeliefVector,
    role: str,
    contribution: AgentContribution,
    deltas: Optional[Mapping] = None,
) -> BeliefVector:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    table = deltas if deltas is not None else _default_deltas()
    c = contribution

    if role == "planner" and c.subproblem_set:
        return _shift(beliefs, table["planner"])
    if role == "memory" and c.evidence_count > 0:
        gain = min(table["memory_per_item"] * c.evidence_count, table["memory_cap"])
        return _shift(beliefs, {**table["memory"], "evidence_sufficiency": gain})
    if role == "solver" and c.draft:
        return _shift(beliefs, table["solver"])
    if role == "critic" and c.critique:
        return _shift(beliefs, table["critic"])
    if role == "verifier" and c.verdict is not None:
        return _shift(beliefs, table[f"verifier_{c.verdict}"])
    if role == "synthesiser" and c.merged:
        return _shift(beliefs, table["synthesiser"])
    return beliefs


def count_signatures(granularity: int) -> int:
    """Upper bound on distinct signatures at a granularity."""
    return len(Regime) * 2 ** len(HANDOFF_FIELDS) * granularity ** len(FOLDED_BELIEFS)
