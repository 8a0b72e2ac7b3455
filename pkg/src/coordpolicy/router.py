"""Per-task routing loop over a linear-with-skip activation plan.

One step: fold the signature, pick a legal action (UCB1 when learning, the
default variant of the next cell otherwise), execute or skip the cell, log a
trace event, update handoff and beliefs. Termination is implicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Mapping, Optional, Protocol, Sequence, Set, Tuple

import numpy as np

from . import graph as pg
from .graph import ActionId, PolicyGraph
from .signature import (
    AgentContribution,
    BeliefVector,
    HandoffState,
    Signature,
    SignatureConfig,
    TaskFeatures,
    apply_contribution,
    detect_regime,
    fold_signature,
    init_beliefs,
)

TERMINATION_REASONS = ("evaluator_complete", "budget_exhausted", "no_legal_actions", "governance_halt")
DEFAULT_CELL_ORDER = ("planner", "memory", "web_search_a", "web_search_b", "solver", "verifier", "evaluator")


@dataclass(frozen=True)
class CellSpec:
    name: str
    role: str
    variants: Tuple[Tuple[str, str], ...]

    @property
    def default(self) -> Tuple[str, str]:
        return self.variants[0]

    def actions(self) -> List[ActionId]:
        return [ActionId.invoke(self.name, skill, model) for skill, model in self.variants]


@dataclass(frozen=True)
class VariantPool:
    cells: Tuple[CellSpec, ...]
    unskippable: FrozenSet[str] = frozenset({"evaluator"})

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.cells)

    def cell(self, name: str) -> CellSpec:
        for c in self.cells:
            if c.name == name:
                return c
        raise KeyError(f"cell {name!r} not in pool")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.cells)

    def without(self, *names: str) -> "VariantPool":
        return VariantPool(tuple(c for c in self.cells if c.name not in names), self.unskippable)

    def to_dict(self) -> dict:
        return {
            "cells": [
                {"name": c.name, "role": c.role, "variants": [f"{s}@{m}" for s, m in c.variants]}
                for c in self.cells
            ],
            "unskippable": sorted(self.unskippable),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "VariantPool":
        cells = []
        for entry in data["cells"]:
            variants = tuple(tuple(v.split("@", 1)) for v in entry["variants"])
            cells.append(CellSpec(entry["name"], entry.get("role", entry["name"]), variants))
        return cls(tuple(cells), frozenset(data.get("unskippable", ["evaluator"])))


SOLVER_SKILLS = ("solver_cot", "solver_concise", "solver_evidence")
SOLVER_MODELS = ("haiku", "fast", "mini")


def default_pool() -> VariantPool:
    """Planner, memory, two search providers, nine solvers, two verifiers, evaluator."""
    solver = tuple((s, m) for s in SOLVER_SKILLS for m in SOLVER_MODELS)
    return VariantPool(
        (
            CellSpec("planner", "planner", (("planner", "fast"),)),
            CellSpec("memory", "memory", (("memory", "fast"),)),
            # search cells feed evidence, so they update beliefs like memory
            CellSpec("web_search_a", "memory", (("search_a", "tool"),)),
            CellSpec("web_search_b", "memory", (("search_b", "tool"),)),
            CellSpec("solver", "solver", solver),
            CellSpec("verifier", "verifier", (("verifier_standard", "fast"), ("verifier_strict", "haiku"))),
            CellSpec("evaluator", "evaluator", (("evaluator", "fast"),)),
        )
    )


@dataclass(frozen=True)
class GovernancePolicy:
    max_consecutive_failures: int = 3
    forbidden_cells: FrozenSet[str] = frozenset()
    hard_token_ceiling: int = 16000


@dataclass
class RouterConfig:
    max_steps: int = 16
    token_cap: int = 8000
    max_retries: int = 1
    reliability_weight: float = pg.DEFAULT_RELIABILITY_WEIGHT
    skip_enabled: bool = True
    learning_enabled: bool = True
    governance: GovernancePolicy = field(default_factory=GovernancePolicy)

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> "RouterConfig":
        data = dict(data or {})
        token_cap = int(data.get("token_cap", 8000))
        gov = dict(data.get("governance") or {})
        return cls(
            max_steps=int(data.get("max_steps", 16)),
            token_cap=token_cap,
            max_retries=int(data.get("max_retries", 1)),
            reliability_weight=float(data.get("reliability_weight", pg.DEFAULT_RELIABILITY_WEIGHT)),
            skip_enabled=bool(data.get("skip_enabled", True)),
            learning_enabled=bool(data.get("learning_enabled", True)),
            governance=GovernancePolicy(
                max_consecutive_failures=int(gov.get("max_consecutive_failures", 3)),
                forbidden_cells=frozenset(gov.get("forbidden_cells", ())),
                hard_token_ceiling=int(gov.get("hard_token_ceiling", 2 * token_cap)),
            ),
        )


@dataclass
class ActivationPlan:
    scheduled_cells: Tuple[str, ...]
    invoked: Set[str] = field(default_factory=set)
    skipped: Set[str] = field(default_factory=set)

    def pending(self) -> List[str]:
        return [c for c in self.scheduled_cells if c not in self.invoked and c not in self.skipped]

    def mark_invoked(self, cell: str) -> None:
        if cell not in self.pending():
            raise ValueError(f"cell {cell!r} is not pending")
        self.invoked.add(cell)

    def mark_skipped(self, cell: str) -> None:
        if cell not in self.pending():
            raise ValueError(f"cell {cell!r} is not pending")
        self.skipped.add(cell)


@dataclass
class BudgetState:
    max_steps: int = 16
    token_cap: int = 8000
    steps_used: int = 0
    tokens_used: int = 0
    retries: int = 0

    @property
    def exhausted(self) -> bool:
        return self.steps_used >= self.max_steps or self.tokens_used >= self.token_cap


@dataclass(frozen=True)
class CellOutcome:
    """What the environment reports back after executing one cell attempt."""

    writes: Mapping[str, object] = field(default_factory=dict)
    contribution: AgentContribution = field(default_factory=AgentContribution)
    tokens: int = 0
    failure_kind: Optional[str] = None
    completion: Optional[bool] = None
    latency_ms: float = 0.0
    # opaque to the router; carried into the trace for the environment's scorer
    quality_delta: object = None


class Environment(Protocol):
    def registered_cells(self) -> Sequence[str]: ...

    def execute_cell(self, task, cell: str, variant: Tuple[str, str], rng: np.random.Generator,
                     history: Sequence[ActionId] = ()) -> CellOutcome: ...


@dataclass
class TraceEvent:
    step: int
    signature: Signature
    action: ActionId
    writes: Tuple[str, ...] = ()
    tokens: int = 0
    attempts: int = 0
    failure_kind: Optional[str] = None
    ok: bool = True
    completion: Optional[bool] = None
    beliefs: BeliefVector = field(default_factory=BeliefVector)
    timestamp: float = 0.0
    quality_delta: object = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "signature": self.signature.canonical(),
            "action": self.action.canonical(),
            "writes": list(self.writes),
            "tokens": self.tokens,
            "attempts": self.attempts,
            "failure_kind": self.failure_kind,
            "ok": self.ok,
            "completion": self.completion,
            "beliefs": list(self.beliefs.as_tuple()),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TraceEvent":
        return cls(
            step=int(d["step"]),
            signature=Signature.parse(d["signature"]),
            action=ActionId.parse(d["action"]),
            writes=tuple(d.get("writes", ())),
            tokens=int(d.get("tokens", 0)),
            attempts=int(d.get("attempts", 0)),
            failure_kind=d.get("failure_kind"),
            ok=bool(d.get("ok", True)),
            completion=d.get("completion"),
            beliefs=BeliefVector(*d.get("beliefs", (0.5,) * 5)),
            timestamp=float(d.get("timestamp", 0.0)),
        )


@dataclass
class Trajectory:
    task_id: str
    class_tag: str
    events: List[TraceEvent] = field(default_factory=list)
    tokens: int = 0
    retries: int = 0
    termination_reason: Optional[str] = None
    uid: str = ""
    arm: str = ""
    epoch: int = 0
    # filled by the environment after the run, never read by routing
    latent: Optional[object] = None

    @property
    def visited_edges(self) -> List[Tuple[Signature, ActionId]]:
        return [(e.signature, e.action) for e in self.events]

    def skipped_cells(self) -> Set[str]:
        return {e.action.cell for e in self.events if e.action.kind == "skip"}

    def invoked_cells(self) -> Set[str]:
        return {e.action.cell for e in self.events if e.action.kind == "invoke"}

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "task_id": self.task_id,
            "class_tag": self.class_tag,
            "arm": self.arm,
            "epoch": self.epoch,
            "tokens": self.tokens,
            "retries": self.retries,
            "termination_reason": self.termination_reason,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Trajectory":
        return cls(
            task_id=d["task_id"],
            class_tag=d["class_tag"],
            events=[TraceEvent.from_dict(e) for e in d["events"]],
            tokens=int(d["tokens"]),
            retries=int(d["retries"]),
            termination_reason=d.get("termination_reason"),
            uid=d.get("uid", ""),
            arm=d.get("arm", ""),
            epoch=int(d.get("epoch", 0)),
        )


@dataclass
class RunReport:
    task_id: str
    termination_reason: str
    visited_edges: List[str]
    token_total: int
    retries: int
    class_tag: str
    governance_verdict: Optional[str] = None
    quality: Optional[float] = None
    cost_term: Optional[float] = None
    retry_term: Optional[float] = None
    total_reward: Optional[float] = None
    judged: bool = False

    def __post_init__(self):
        if self.termination_reason not in TERMINATION_REASONS:
            raise ValueError(f"unknown termination reason {self.termination_reason!r}")

    def to_dict(self) -> dict:
        # stable field order for serialized reports
        return {
            "task_id": self.task_id,
            "class_tag": self.class_tag,
            "termination_reason": self.termination_reason,
            "governance_verdict": self.governance_verdict,
            "token_total": self.token_total,
            "retries": self.retries,
            "reward": {
                "judged": self.judged,
                "quality": self.quality,
                "cost_term": self.cost_term,
                "retry_term": self.retry_term,
                "total": self.total_reward,
            },
            "visited_edges": list(self.visited_edges),
        }


@dataclass
class PreflightReport:
    issues: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> List[str]:
        return [code for code, _ in self.issues]


def preflight(config, env=None) -> PreflightReport:
    """Check config completeness and that every pool cell is registered in ``env``.

    ``config`` needs ``pool``, ``router``, ``signature`` and ``reward`` attributes.
    """
    report = PreflightReport()
    pool = getattr(config, "pool", None)
    if pool is None or len(pool) == 0:
        report.issues.append(("pool", "variant pool is empty"))
    else:
        for cell in pool.cells:
            if not cell.variants:
                report.issues.append(("pool", f"cell {cell.name} has no variants"))
    router = config.router
    if router.token_cap <= 0 or router.max_steps <= 0:
        report.issues.append(("budget", f"budget must be positive (token_cap={router.token_cap}, max_steps={router.max_steps})"))
    if config.signature.granularity < 1:
        report.issues.append(("granularity", "signature granularity must be >= 1"))
    weights = config.reward.weights
    values = [weights.w_quality, weights.w_cost, weights.w_retry, router.reliability_weight, *config.reward.axis_weights]
    if not all(math.isfinite(v) for v in values):
        report.issues.append(("weights", "reward or reliability weights are not finite"))
    if env is not None and pool is not None:
        registered = set(env.registered_cells())
        for name in pool.names:
            if name not in registered:
                report.issues.append(("missing cell", f"pool cell {name} is not registered in the environment"))
    return report


def build_plan(features: TaskFeatures, pool: VariantPool) -> ActivationPlan:
    """Linear plan in the canonical cell order; features do not change it."""
    if len(pool) == 0:
        raise ValueError("variant pool is empty")
    order = [c for c in DEFAULT_CELL_ORDER if c in pool]
    order += [c for c in pool.names if c not in order]
    return ActivationPlan(tuple(order))


def legal_actions(
    plan: ActivationPlan,
    budget: BudgetState,
    pool: VariantPool,
    skip_enabled: bool = True,
) -> Set[ActionId]:
    if budget.exhausted:
        return set()
    pending = plan.pending()
    if not pending:
        return set()
    actions = set(pool.cell(pending[0]).actions())
    # a skip must leave another pending cell, so the run can still finish
    if skip_enabled and len(pending) >= 2:
        actions.update(ActionId.skip(c) for c in pending if c not in pool.unskippable)
    return actions


@dataclass
class TerminationState:
    evaluator_complete: bool = False
    budget: BudgetState = field(default_factory=BudgetState)
    legal: Set[ActionId] = field(default_factory=set)
    governance_verdict: Optional[str] = None


def check_termination(state: TerminationState) -> Optional[str]:
    if state.evaluator_complete:
        return "evaluator_complete"
    if state.budget.exhausted:
        return "budget_exhausted"
    if not state.legal:
        return "no_legal_actions"
    if state.governance_verdict is not None:
        return "governance_halt"
    return None


def governance_check(trace: Sequence[TraceEvent], policy: GovernancePolicy) -> Optional[str]:
    run = 0
    tokens = 0
    for event in trace:
        tokens += event.tokens
        if event.action.kind == "invoke" and event.action.cell in policy.forbidden_cells:
            return f"forbidden cell invoked: {event.action.cell}"
        run = run + 1 if event.failure_kind else 0
        if run >= policy.max_consecutive_failures:
            return f"{run} consecutive failures (limit {policy.max_consecutive_failures})"
    if tokens > policy.hard_token_ceiling:
        return f"tokens {tokens} above hard ceiling {policy.hard_token_ceiling}"
    return None


def _default_action(plan: ActivationPlan, pool: VariantPool) -> ActionId:
    cell = pool.cell(plan.pending()[0])
    return ActionId.invoke(cell.name, *cell.default)


def run_task(
    task,
    graph: Optional[PolicyGraph],
    env: Environment,
    config: RouterConfig,
    rng: np.random.Generator,
    pool: Optional[VariantPool] = None,
    signature_config: Optional[SignatureConfig] = None,
) -> Tuple[Trajectory, RunReport]:
    """Route one task to termination. Reward and backup are left to the caller."""
    pool = pool if pool is not None else default_pool()
    sig_cfg = signature_config if signature_config is not None else SignatureConfig()
    learning = config.learning_enabled and graph is not None

    plan = build_plan(task.features, pool)
    regime = detect_regime(task.features, sig_cfg.regime_rules)
    handoff = HandoffState()
    beliefs = init_beliefs(sig_cfg)
    budget = BudgetState(max_steps=config.max_steps, token_cap=config.token_cap)
    traj = Trajectory(task_id=task.id, class_tag=task.class_tag)
    clock = 0.0
    complete = False
    verdict: Optional[str] = None
    history: List[ActionId] = []

    while True:
        legal = legal_actions(plan, budget, pool, skip_enabled=config.skip_enabled and learning)
        reason = check_termination(TerminationState(complete, budget, legal, verdict))
        if reason is not None:
            break
        sig = fold_signature(regime, handoff, beliefs, sig_cfg.granularity)
        if learning:
            action = pg.select_action(graph, sig, legal, rng, config.reliability_weight)
        else:
            action = _default_action(plan, pool)

        event = TraceEvent(step=budget.steps_used, signature=sig, action=action)
        if action.kind == "skip":
            plan.mark_skipped(action.cell)
        else:
            cell = pool.cell(action.cell)
            attempts, failure, outcome = 0, None, None
            while True:
                if learning:
                    pg.record_attempt(graph, sig, action)
                outcome = env.execute_cell(task, cell.name, (action.skill, action.model), rng, tuple(history))
                attempts += 1
                event.tokens += outcome.tokens
                clock += outcome.latency_ms
                if outcome.failure_kind is None:
                    break
                failure = outcome.failure_kind
                budget.retries += 1
                if learning:
                    pg.record_failure(graph, sig, action, failure)
                if attempts > config.max_retries:
                    break
            plan.mark_invoked(cell.name)
            history.append(action)
            event.attempts = attempts
            event.failure_kind = failure
            event.ok = outcome.failure_kind is None
            if event.ok:
                handoff = handoff.write(**dict(outcome.writes))
                beliefs = apply_contribution(beliefs, cell.role, outcome.contribution, sig_cfg.belief_deltas)
                event.writes = tuple(outcome.writes)
                event.completion = outcome.completion
                event.quality_delta = outcome.quality_delta
                complete = bool(outcome.completion)
            else:
                verdict = f"unrecoverable fault in {cell.name} after {attempts} attempts"
            if learning:
                pg.record_tokens(graph, sig, action, event.tokens)
            budget.tokens_used += event.tokens

        budget.steps_used += 1
        event.beliefs = beliefs
        event.timestamp = round(clock, 6)
        traj.events.append(event)
        verdict = verdict or governance_check(traj.events, config.governance)

    traj.tokens = budget.tokens_used
    traj.retries = budget.retries
    traj.termination_reason = reason
    report = RunReport(
        task_id=task.id,
        termination_reason=reason,
        visited_edges=[f"{s.canonical()} -> {a.canonical()}" for s, a in traj.visited_edges],
        token_total=traj.tokens,
        retries=traj.retries,
        class_tag=task.class_tag,
        governance_verdict=verdict,
    )
    return traj, report
