"""Synthetic multi-agent environment with planted per-class optima.

Tasks are numeric feature bundles tagged with one of eight scenario classes.
Cells are executed stochastically (tokens, failures, verdicts) but the latent
quality of a trajectory is a deterministic function of which cells ran with
which variants. Simulated judges read that latent quality through an additive
bias plus group-centred noise.

Routing code never imports this module; it only sees ``CellOutcome``.
"""
from __future__ import annotations

import copy
import itertools
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .graph import ActionId
from .reward import AXES, AxisScores, RewardWeights, compose_axes, hybrid_reward
from .router import CellOutcome, Trajectory, VariantPool, default_pool
from .signature import AgentContribution, TaskFeatures

CLASS_TAGS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8")
CLASS_NAMES = {
    "C1": "procedural",
    "C2": "single-doc",
    "C3": "cross-doc multi-vendor",
    "C4": "synthesis",
    "C5": "out-of-corpus",
    "C6": "procedural-derivative",
    "C7": "mitigation correctness",
    "C8": "cross-vendor pair",
}
PROCEDURAL = ("C1", "C6")
COORDINATION_HEAVY = ("C3", "C7", "C8")
OPTIONAL_CELLS = ("planner", "memory", "web_search_a", "web_search_b", "verifier")

# axis order: goal_achievement, grounding, coordination, recovery
_USEFUL = {
    "planner": (0.03, 0.00, 0.08, 0.10),
    "memory": (0.03, 0.25, 0.08, 0.00),
    "web_search_a": (0.03, 0.20, 0.08, 0.00),
    "web_search_b": (0.03, 0.20, 0.08, 0.00),
    "critic": (0.03, 0.00, 0.03, 0.05),
    "synthesiser": (0.03, 0.00, 0.03, 0.05),
}
_VERIFIER_USEFUL = {
    "verifier_standard@fast": (0.12, 0.05, 0.08, 0.30),
    "verifier_strict@haiku": (0.20, 0.10, 0.08, 0.40),
}
# coordination-heavy classes lean on evidence and verification much harder;
# per-axis sums stay near 1 at the optimum so no single cell saturates an axis
_CRITICAL_USEFUL = {
    "planner": (0.03, 0.00, 0.10, 0.05),
    "memory": (0.05, 0.30, 0.15, 0.05),
    "web_search_a": (0.05, 0.25, 0.15, 0.05),
    "web_search_b": (0.05, 0.25, 0.15, 0.05),
    "verifier_standard@fast": (0.08, 0.02, 0.08, 0.20),
    "verifier_strict@haiku": (0.30, 0.08, 0.20, 0.60),
}
_NEUTRAL = (0.0, 0.0, 0.0, 0.0)
_SOLVER_COORDINATION = 0.15
_MODEL_OFFSET = {"haiku": 0.0, "fast": -0.03, "mini": -0.06}
_EVIDENCE_GROUNDING = 0.10

_FEATURES = {
    # ambiguity, contradiction_risk, evidence_availability, verification_need
    "C1": (0.15, 0.15, 0.75, 0.12),
    "C2": (0.20, 0.20, 0.80, 0.10),
    "C3": (0.25, 0.30, 0.80, 0.50),
    "C4": (0.48, 0.30, 0.22, 0.40),
    "C5": (0.80, 0.20, 0.20, 0.30),
    "C6": (0.22, 0.15, 0.70, 0.12),
    "C7": (0.30, 0.30, 0.50, 0.85),
    "C8": (0.35, 0.50, 0.80, 0.50),
}

# quality of a trajectory that invokes nothing
_FLOORS = {
    "C1": (0.10, 0.15, 0.30, 0.30),
    "C2": (0.08, 0.13, 0.30, 0.30),
    "C3": (0.00, 0.00, 0.05, 0.05),
    "C4": (0.06, 0.10, 0.30, 0.30),
    "C5": (0.06, 0.10, 0.30, 0.30),
    "C6": (0.10, 0.15, 0.30, 0.30),
    "C7": (0.00, 0.00, 0.05, 0.05),
    "C8": (0.00, 0.00, 0.05, 0.05),
}

# goal-achievement gain of each solver skill on the haiku binding
_SOLVER_SKILL_QUALITY = {
    "C1": {"solver_concise": 0.50, "solver_evidence": 0.42, "solver_cot": 0.38},
    "C2": {"solver_concise": 0.50, "solver_evidence": 0.42, "solver_cot": 0.38},
    "C3": {"solver_concise": 0.55, "solver_evidence": 0.30, "solver_cot": 0.15},
    "C4": {"solver_concise": 0.50, "solver_evidence": 0.38, "solver_cot": 0.40},
    "C5": {"solver_concise": 0.50, "solver_evidence": 0.36, "solver_cot": 0.40},
    "C6": {"solver_concise": 0.50, "solver_evidence": 0.42, "solver_cot": 0.38},
    "C7": {"solver_concise": 0.15, "solver_evidence": 0.30, "solver_cot": 0.55},
    "C8": {"solver_concise": 0.55, "solver_evidence": 0.30, "solver_cot": 0.15},
}

_NEUTRAL_CELLS = {
    "C1": ("web_search_b", "verifier"),
    "C2": ("web_search_b", "verifier"),
    "C3": (),
    "C4": ("verifier",),
    "C5": ("memory",),
    "C6": ("web_search_b", "verifier"),
    "C7": ("web_search_b",),
    "C8": (),
}

_TOKENS = {
    "planner": {"*": 300},
    "memory": {"*": 500},
    "web_search_a": {"*": 800},
    "web_search_b": {"*": 800},
    "solver": {"solver_concise@*": 1500, "solver_evidence@*": 2000, "solver_cot@*": 2500},
    "verifier": {"verifier_standard@fast": 1100, "verifier_strict@haiku": 1300},
    "evaluator": {"*": 150},
    "critic": {"*": 700},
    "synthesiser": {"*": 600},
}


@dataclass(frozen=True)
class SyntheticTask:
    id: str
    class_tag: str
    features: TaskFeatures
    difficulty: float

    def to_dict(self) -> dict:
        f = self.features
        return {
            "id": self.id,
            "class_tag": self.class_tag,
            "features": [f.ambiguity, f.contradiction_risk, f.evidence_availability, f.verification_need],
            "difficulty": self.difficulty,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticTask":
        return cls(d["id"], d["class_tag"], TaskFeatures(*d["features"], class_tag=d["class_tag"]), float(d["difficulty"]))


@dataclass
class SimJudgeModel:
    judge_id: str
    seed: int = 0
    noise: float = 0.05
    bias: Dict[str, Dict[str, float]] = field(default_factory=dict)  # class -> axis -> bias
    arm_bias: Dict[str, float] = field(default_factory=dict)
    fault_rate: float = 0.0

    def axis_bias(self, class_tag: str) -> np.ndarray:
        table = {**self.bias.get("*", {}), **self.bias.get(class_tag, {})}
        return np.array([table.get(a, 0.0) for a in AXES])

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimJudgeModel":
        return cls(
            judge_id=d["judge_id"],
            seed=int(d.get("seed", 0)),
            noise=float(d.get("noise", 0.05)),
            bias={k: dict(v) for k, v in (d.get("bias") or {}).items()},
            arm_bias=dict(d.get("arm_bias") or {}),
            fault_rate=float(d.get("fault_rate", 0.0)),
        )

    def to_dict(self) -> dict:
        return {
            "judge_id": self.judge_id,
            "seed": self.seed,
            "noise": self.noise,
            "bias": self.bias,
            "arm_bias": self.arm_bias,
            "fault_rate": self.fault_rate,
        }


@dataclass(frozen=True)
class PlantedOptimum:
    class_tag: str
    solver: Tuple[str, str]
    verifier: Optional[Tuple[str, str]]
    skip_neutral: Tuple[str, ...]
    critical: Tuple[str, ...]
    expected_quality: float
    expected_tokens: float
    expected_reward: float


def _default_judges() -> Dict[str, SimJudgeModel]:
    return {
        "judge_a": SimJudgeModel("judge_a", seed=11, noise=0.06),
        "judge_b": SimJudgeModel("judge_b", seed=23, noise=0.06, bias={"*": {"grounding": 0.03}}),
        "judge_c": SimJudgeModel("judge_c", seed=37, noise=0.06, bias={"*": {"coordination": -0.03}}),
    }


def _build_prerequisites(neutral_cells) -> dict:
    """Cells whose absence the evaluator penalises when it validates the answer."""
    table = {}
    for tag in CLASS_TAGS:
        needed = ["solver"] + [c for c in ("memory", "web_search_a", "web_search_b") if c not in neutral_cells[tag]]
        if tag in COORDINATION_HEAVY and "verifier" not in neutral_cells[tag]:
            needed.append("verifier")
        table[tag] = {"evaluator": tuple(needed)}
    return table


def _build_deltas(skill_quality, neutral_cells, pool: VariantPool) -> dict:
    deltas: Dict[str, Dict[str, Dict[str, list]]] = {}
    for tag in CLASS_TAGS:
        table: Dict[str, Dict[str, list]] = {}
        for cell in pool.cells:
            rows = {}
            for skill, model in cell.variants:
                key = f"{skill}@{model}"
                if cell.name == "evaluator":
                    vec = (0.0, 0.0, 0.0, 0.0)
                elif cell.name in neutral_cells[tag]:
                    vec = _NEUTRAL
                elif cell.name == "solver":
                    q = skill_quality[tag][skill] + _MODEL_OFFSET[model]
                    recovery = 0.10 if tag in COORDINATION_HEAVY else 0.0
                    vec = (q, _EVIDENCE_GROUNDING if skill == "solver_evidence" else 0.0, _SOLVER_COORDINATION, recovery)
                elif tag in COORDINATION_HEAVY and key in _CRITICAL_USEFUL:
                    vec = _CRITICAL_USEFUL[key]
                elif tag in COORDINATION_HEAVY and cell.name in _CRITICAL_USEFUL:
                    vec = _CRITICAL_USEFUL[cell.name]
                elif cell.name == "verifier":
                    vec = _VERIFIER_USEFUL[key]
                else:
                    vec = _USEFUL[cell.name]
                rows[key] = [round(v, 10) for v in vec]
            table[cell.name] = rows
        deltas[tag] = table
    return deltas


def _build_evidence(neutral_cells) -> dict:
    counts = {}
    for tag in CLASS_TAGS:
        row = {}
        for cell in ("memory", "web_search_a", "web_search_b"):
            if cell in neutral_cells[tag]:
                # out-of-corpus memory finds nothing; a redundant search finds one item
                row[cell] = 0 if cell == "memory" else 1
            else:
                row[cell] = 2
        counts[tag] = row
    return counts


@dataclass
class EnvConfig:
    name: str = "default"
    # coordination-heavy classes are drawn twice as often as the rest
    class_mix: Dict[str, float] = field(
        default_factory=lambda: {t: 2.0 if t in COORDINATION_HEAVY else 1.0 for t in CLASS_TAGS})
    features: Dict[str, Tuple[float, ...]] = field(default_factory=lambda: dict(_FEATURES))
    feature_spread: float = 0.05
    difficulty_range: Tuple[float, float] = (0.2, 0.8)
    difficulty_weight: float = 0.1
    floors: Dict[str, Tuple[float, ...]] = field(default_factory=lambda: dict(_FLOORS))
    neutral_cells: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(_NEUTRAL_CELLS))
    # redundant work: a quality-neutral cell still reads and writes context
    neutral_tokens: float = 2000.0
    # class -> cell -> cells that must have run first; each missing one adds a validation-failure chance
    prerequisites: Optional[Dict[str, Dict[str, Tuple[str, ...]]]] = None
    prerequisite_failure: float = 0.0
    # extra tokens a cell burns per missing prerequisite, rebuilding the context itself
    prerequisite_tokens: float = 1000.0
    # per-axis quality lost for each prerequisite the final answer was built without
    prerequisite_quality: float = 0.0
    # supporting cells refine a draft; without a solver draft they add nothing
    support_needs_draft: bool = True
    skill_quality: Dict[str, Dict[str, float]] = field(default_factory=lambda: copy.deepcopy(_SOLVER_SKILL_QUALITY))
    deltas: Optional[dict] = None
    evidence_counts: Optional[dict] = None
    tokens: Dict[str, Dict[str, float]] = field(default_factory=lambda: copy.deepcopy(_TOKENS))
    token_spread: float = 0.1
    failure_prob: float = 0.05
    recoverable_fraction: float = 1.0
    retry_recovery_penalty: float = 0.10
    judges: Dict[str, SimJudgeModel] = field(default_factory=_default_judges)
    pool: VariantPool = field(default_factory=default_pool)

    def __post_init__(self):
        if self.deltas is None:
            self.deltas = _build_deltas(self.skill_quality, self.neutral_cells, self.pool)
        if self.prerequisites is None:
            self.prerequisites = _build_prerequisites(self.neutral_cells)
        for name in ("failure_prob", "prerequisite_failure", "recoverable_fraction"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.evidence_counts is None:
            self.evidence_counts = _build_evidence(self.neutral_cells)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "class_mix": self.class_mix,
            "features": {k: list(v) for k, v in self.features.items()},
            "feature_spread": self.feature_spread,
            "difficulty_range": list(self.difficulty_range),
            "difficulty_weight": self.difficulty_weight,
            "floors": {k: list(v) for k, v in self.floors.items()},
            "neutral_cells": {k: list(v) for k, v in self.neutral_cells.items()},
            "prerequisites": {k: {c: list(v) for c, v in row.items()} for k, row in self.prerequisites.items()},
            "neutral_tokens": self.neutral_tokens,
            "prerequisite_failure": self.prerequisite_failure,
            "prerequisite_tokens": self.prerequisite_tokens,
            "prerequisite_quality": self.prerequisite_quality,
            "support_needs_draft": self.support_needs_draft,
            "skill_quality": self.skill_quality,
            "deltas": self.deltas,
            "evidence_counts": self.evidence_counts,
            "tokens": self.tokens,
            "token_spread": self.token_spread,
            "failure_prob": self.failure_prob,
            "recoverable_fraction": self.recoverable_fraction,
            "retry_recovery_penalty": self.retry_recovery_penalty,
            "judges": {k: j.to_dict() for k, j in self.judges.items()},
            "pool": self.pool.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "EnvConfig":
        d = dict(d or {})
        kwargs = {}
        for key in ("name", "class_mix", "feature_spread", "difficulty_weight", "token_spread",
                    "failure_prob", "recoverable_fraction", "retry_recovery_penalty", "neutral_tokens",
                    "prerequisite_failure", "prerequisite_tokens", "prerequisite_quality", "support_needs_draft",
                    "skill_quality", "deltas", "evidence_counts", "tokens"):
            if key in d:
                kwargs[key] = d[key]
        for key in ("features", "floors", "neutral_cells"):
            if key in d:
                base = dict(getattr(cls(), key)) if key != "neutral_cells" else dict(_NEUTRAL_CELLS)
                base.update({k: tuple(v) for k, v in d[key].items()})
                kwargs[key] = base
        if "prerequisites" in d:
            kwargs["prerequisites"] = {k: {c: tuple(v) for c, v in row.items()} for k, row in d["prerequisites"].items()}
        if "difficulty_range" in d:
            kwargs["difficulty_range"] = tuple(d["difficulty_range"])
        if "judges" in d:
            kwargs["judges"] = {k: SimJudgeModel.from_dict({"judge_id": k, **v}) for k, v in d["judges"].items()}
        if "pool" in d:
            kwargs["pool"] = VariantPool.from_dict(d["pool"])
        return cls(**kwargs)


def default_env_config() -> EnvConfig:
    return EnvConfig()


def transfer_source_config() -> EnvConfig:
    """A related environment for warm-start sources: same taxonomy, shifted optima."""
    skill = copy.deepcopy(_SOLVER_SKILL_QUALITY)
    for tag in ("C1", "C2", "C6"):
        skill[tag] = {"solver_concise": 0.42, "solver_evidence": 0.50, "solver_cot": 0.38}
    skill["C4"] = {"solver_concise": 0.40, "solver_evidence": 0.38, "solver_cot": 0.50}
    neutral = dict(_NEUTRAL_CELLS)
    neutral["C4"] = ("web_search_b",)
    return EnvConfig(name="transfer_source", skill_quality=skill, neutral_cells=neutral)


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def _variant_key(table: Mapping, skill: str, model: str):
    for key in (f"{skill}@{model}", f"{skill}@*", "*"):
        if key in table:
            return table[key]
    raise KeyError(f"no entry for {skill}@{model}")


class SimEnv:
    """Immutable after construction; all randomness comes from caller rngs."""

    def __init__(self, config: Optional[EnvConfig] = None):
        self.config = config if config is not None else default_env_config()
        self._cells = tuple(self.config.pool.names)

    # -- corpus -----------------------------------------------------------

    def generate_corpus(self, count: int, seed: int) -> List[SyntheticTask]:
        if count < 1:
            raise ValueError("count must be >= 1")
        cfg = self.config
        rng = np.random.default_rng([seed, 7001])
        tags = [t for t in CLASS_TAGS if cfg.class_mix.get(t, 0) > 0]
        weights = np.array([cfg.class_mix[t] for t in tags], dtype=float)
        exact = weights / weights.sum() * count
        alloc = np.floor(exact).astype(int)
        # largest remainder, ties resolved in class order
        order = sorted(range(len(tags)), key=lambda i: (-(exact[i] - alloc[i]), i))
        for i in order[: count - int(alloc.sum())]:
            alloc[i] += 1
        labels = [t for t, n in zip(tags, alloc) for _ in range(n)]
        labels = [labels[i] for i in rng.permutation(len(labels))]
        tasks = []
        lo, hi = cfg.difficulty_range
        s = cfg.feature_spread
        for i, tag in enumerate(labels):
            center = np.array(cfg.features[tag])
            offset = np.clip(rng.normal(0.0, s, size=4), -2 * s, 2 * s)
            feats = np.clip(center + offset, 0.0, 1.0)
            tasks.append(
                SyntheticTask(
                    id=f"t{i:03d}",
                    class_tag=tag,
                    features=TaskFeatures(*(round(float(v), 6) for v in feats), class_tag=tag),
                    difficulty=round(float(rng.uniform(lo, hi)), 6),
                )
            )
        return tasks

    # -- cells --------------------------------------------------------------

    def registered_cells(self) -> Tuple[str, ...]:
        return self._cells

    def cell_delta(self, class_tag: str, cell: str, skill: str, model: str) -> np.ndarray:
        return np.array(_variant_key(self.config.deltas[class_tag][cell], skill, model), dtype=float)

    def mean_tokens(self, cell: str, skill: str, model: str) -> float:
        return float(_variant_key(self.config.tokens[cell], skill, model))

    def expected_tokens(self, class_tag: str, cell: str, skill: str, model: str,
                        history: Sequence[ActionId] = ()) -> float:
        missing = len(self.missing_prerequisites(class_tag, cell, history))
        extra = self.config.neutral_tokens if cell in self.config.neutral_cells.get(class_tag, ()) else 0.0
        return self.mean_tokens(cell, skill, model) + extra + self.config.prerequisite_tokens * missing

    def missing_prerequisites(self, class_tag: str, cell: str, history: Sequence[ActionId]) -> Tuple[str, ...]:
        ran = {a.cell for a in history if a.kind == "invoke"}
        return tuple(c for c in self.config.prerequisites.get(class_tag, {}).get(cell, ()) if c not in ran)

    def failure_probability(self, class_tag: str, cell: str, history: Sequence[ActionId]) -> float:
        """Chance that a single attempt of ``cell`` fails, given what ran before it."""
        cfg = self.config
        base = 0.0 if cell == "evaluator" else cfg.failure_prob
        missing = len(self.missing_prerequisites(class_tag, cell, history))
        return 1.0 - (1.0 - base) * (1.0 - cfg.prerequisite_failure) ** missing

    def execute_cell(self, task: SyntheticTask, cell: str, variant: Tuple[str, str],
                     rng: np.random.Generator, history: Sequence[ActionId] = ()) -> CellOutcome:
        if cell not in self._cells:
            raise KeyError(f"cell {cell!r} is not registered")
        cfg = self.config
        skill, model = variant
        mean = self.expected_tokens(task.class_tag, cell, skill, model, history)
        tokens = max(0, int(round(rng.normal(mean, cfg.token_spread * mean))))
        latency = 20.0 + 0.05 * tokens
        if cell != "evaluator" and rng.random() < cfg.failure_prob:
            kind = "recoverable_execution" if rng.random() < cfg.recoverable_fraction else "validation"
            return CellOutcome(tokens=tokens, failure_kind=kind, latency_ms=latency)
        missing = self.missing_prerequisites(task.class_tag, cell, history)
        if missing and rng.random() < 1.0 - (1.0 - cfg.prerequisite_failure) ** len(missing):
            return CellOutcome(tokens=tokens, failure_kind="validation", latency_ms=latency)

        delta = self.cell_delta(task.class_tag, cell, skill, model)
        writes: Dict[str, object] = {}
        contribution = AgentContribution()
        completion = None
        if cell == "planner":
            writes = {"goal": f"goal:{task.id}", "subproblem": f"sub:{task.id}"}
            contribution = AgentContribution(subproblem_set=True)
        elif cell in ("memory", "web_search_a", "web_search_b"):
            n = int(cfg.evidence_counts[task.class_tag].get(cell, 0))
            if n:
                writes = {"evidence": tuple(f"{cell}:{k}" for k in range(n))}
            contribution = AgentContribution(evidence_count=n)
        elif cell == "solver":
            writes = {"draft_answer": f"draft:{skill}@{model}"}
            contribution = AgentContribution(draft=True)
        elif cell == "verifier":
            goal = self._axes_from_actions(task, history)[0]
            u = rng.random()
            verdict = "supported" if u < goal else ("refuted" if u < goal + 0.6 * (1 - goal) else "inconclusive")
            writes = {"verification": verdict}
            contribution = AgentContribution(verdict=verdict)
        elif cell == "critic":
            writes = {"critique": "critique"}
            contribution = AgentContribution(critique=True)
        elif cell == "synthesiser":
            writes = {"merged_answer": "merged"}
            contribution = AgentContribution(merged=True)
        elif cell == "evaluator":
            q = compose_axes(AxisScores.from_array(self._axes_from_actions(task, history)))
            completion = bool(rng.random() < q)
            # slight token draw only; evaluator has no quality effect
        return CellOutcome(
            writes=writes,
            contribution=contribution,
            tokens=tokens,
            completion=completion,
            latency_ms=latency,
            quality_delta=tuple(float(v) for v in delta),
        )

    # -- latent quality -----------------------------------------------------

    def _floor(self, task: SyntheticTask) -> np.ndarray:
        base = np.array(self.config.floors[task.class_tag], dtype=float)
        base[0] -= self.config.difficulty_weight * (task.difficulty - 0.5)
        return base

    def _axes_from_actions(self, task: SyntheticTask, actions: Sequence[ActionId], retries: int = 0) -> np.ndarray:
        q = self._floor(task)
        ran = [a for a in actions if a.kind == "invoke"]
        drafted = any(a.cell == "solver" for a in ran)
        for a in ran:
            if self.config.support_needs_draft and not drafted and a.cell != "solver":
                continue
            q = q + self.cell_delta(task.class_tag, a.cell, a.skill, a.model)
        q[3] -= self.config.retry_recovery_penalty * retries
        if self.config.prerequisite_quality:
            q -= self.config.prerequisite_quality * len(self.missing_prerequisites(task.class_tag, "evaluator", actions))
        return np.clip(q, 0.0, 1.0)

    def latent_quality(self, trajectory: Trajectory, task: SyntheticTask) -> AxisScores:
        """Deterministic per-axis quality of a finished trajectory."""
        done = [e.action for e in trajectory.events if e.action.kind == "invoke" and e.ok]
        return AxisScores.from_array(self._axes_from_actions(task, done, trajectory.retries))

    def annotate(self, trajectory: Trajectory, task: SyntheticTask) -> Trajectory:
        trajectory.latent = self.latent_quality(trajectory, task)
        return trajectory

    def reference_trajectory(self, task: SyntheticTask, uid: str = "") -> Trajectory:
        """Empty trajectory at the class quality floor, used as a first judging peer."""
        ref = Trajectory(task_id=task.id, class_tag=task.class_tag, uid=uid or f"ref/{task.id}", arm="reference")
        return self.annotate(ref, task)

    # -- oracle ---------------------------------------------------------------

    def _expected_route(self, tag: str, solver, verifier, skipped: Sequence[str], weights: RewardWeights):
        """Expected (quality, tokens, reward) of a fixed route, one retry per cell.

        A cell that fails twice halts the run, so later cells only run when every
        earlier one succeeded. Retry effects on quality use the expected retry count.
        """
        cfg = self.config
        task = SyntheticTask("oracle", tag, TaskFeatures(*cfg.features[tag], class_tag=tag), 0.5)
        actions = []
        for cell in cfg.pool.cells:
            if cell.name in skipped:
                continue
            variant = solver if cell.name == "solver" else verifier if cell.name == "verifier" else cell.default
            actions.append(ActionId.invoke(cell.name, *variant))
        alive, tokens, retries = 1.0, 0.0, 0.0
        outcomes = []  # (probability, actions that completed)
        for i, a in enumerate(actions):
            f = self.failure_probability(tag, a.cell, actions[:i])
            tokens += alive * self.expected_tokens(tag, a.cell, a.skill, a.model, actions[:i]) * (1 + f)
            retries += alive * (f + f * f)
            outcomes.append((alive * f * f, actions[:i]))
            alive *= 1 - f * f
        outcomes.append((alive, actions))
        quality = sum(p * compose_axes(AxisScores.from_array(self._axes_from_actions(task, done, retries)))
                      for p, done in outcomes if p > 0)
        return quality, tokens, hybrid_reward(quality, tokens, retries, weights)

    def planted_optimum(self, class_tag: str, weights: RewardWeights = RewardWeights()) -> PlantedOptimum:
        if class_tag not in self.config.deltas:
            raise KeyError(f"unknown class {class_tag!r}")
        pool = self.config.pool
        solvers = pool.cell("solver").variants
        verifiers = pool.cell("verifier").variants
        optional = [c for c in OPTIONAL_CELLS if c in pool]
        best = None
        for r in range(len(optional) + 1):
            for skipped in itertools.combinations(optional, r):
                for solver in solvers:
                    for verifier in verifiers:
                        q, tok, rew = self._expected_route(class_tag, solver, verifier, skipped, weights)
                        key = (rew, -len(skipped))
                        if best is None or key > best[0]:
                            best = (key, solver, verifier, skipped, q, tok, rew)
        _, solver, verifier, skipped, q, tok, rew = best
        neutral = tuple(c for c in self.config.neutral_cells[class_tag] if c in pool)
        critical = tuple(c for c in ("memory", "web_search_a", "web_search_b", "verifier")
                         if c in pool and c not in neutral)
        return PlantedOptimum(
            class_tag=class_tag,
            solver=tuple(solver),
            verifier=None if "verifier" in skipped else tuple(verifier),
            skip_neutral=neutral,
            critical=critical,
            expected_quality=q,
            expected_tokens=tok,
            expected_reward=rew,
        )


# -- judges -------------------------------------------------------------------

class SimJudge:
    """Judge interface over a ``SimJudgeModel``.

    Per-trajectory noise is keyed by (run seed, judge seed, trajectory uid) so
    re-scoring the same group reproduces the same scores.
    """

    def __init__(self, model: SimJudgeModel, env: SimEnv, tasks: Mapping[str, SyntheticTask], seed: int = 0):
        self.model = model
        self.judge_id = model.judge_id
        self.env = env
        self.tasks = tasks
        self.seed = seed

    def _noise(self, uid: str) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.model.seed, _stable_hash(uid)])
        return rng.normal(0.0, self.model.noise, size=len(AXES))

    def score_group(self, trajectories: Sequence[Trajectory]) -> List[AxisScores]:
        from .reward import JudgeFault

        if self.model.fault_rate > 0:
            key = "|".join(sorted(t.uid for t in trajectories))
            u = np.random.default_rng([self.seed, self.model.seed, _stable_hash(key), 1]).random()
            if u < self.model.fault_rate:
                raise JudgeFault(f"{self.judge_id} failed on group")
        latent = []
        for t in trajectories:
            q = t.latent if t.latent is not None else self.env.latent_quality(t, self.tasks[t.task_id])
            latent.append(q.as_array())
        return sim_judge(trajectories, latent, self.model, [self._noise(t.uid) for t in trajectories])


def sim_judge(trajectories: Sequence[Trajectory], latent: Sequence[np.ndarray], judge: SimJudgeModel,
              noise: Sequence[np.ndarray]) -> List[AxisScores]:
    """clamp(latent + bias + group-centred noise), per axis."""
    if len(trajectories) < 2:
        raise ValueError("simulated judging needs a group of at least two")
    noise = np.asarray(noise, dtype=float)
    centred = noise - noise.mean(axis=0)
    out = []
    for t, q, n in zip(trajectories, latent, centred):
        raw = np.asarray(q) + judge.axis_bias(t.class_tag) + judge.arm_bias.get(t.arm, 0.0) + n
        out.append(AxisScores.from_array(np.clip(raw, 0.0, 1.0)))
    return out


def make_judges(env: SimEnv, tasks: Sequence[SyntheticTask], ids: Sequence[str], seed: int) -> List[SimJudge]:
    lookup = {t.id: t for t in tasks}
    missing = [j for j in ids if j not in env.config.judges]
    if missing:
        raise KeyError(f"unknown judges {missing}")
    return [SimJudge(env.config.judges[j], env, lookup, seed) for j in ids]


def save_corpus(tasks: Sequence[SyntheticTask], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"tasks": [t.to_dict() for t in tasks]}, indent=1, sort_keys=True) + "\n")
    return path


def load_corpus(path) -> List[SyntheticTask]:
    doc = json.loads(Path(path).read_text())
    rows = doc["tasks"] if isinstance(doc, dict) else doc
    return [SyntheticTask.from_dict(r) for r in rows]
