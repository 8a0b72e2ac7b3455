"""Relative group judging, cross-judge averaging and the hybrid reward."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Protocol, Sequence

import numpy as np

AXES = ("goal_achievement", "grounding", "coordination", "recovery")


class JudgeFault(RuntimeError):
    """A judge could not score a group."""


@dataclass(frozen=True)
class AxisScores:
    goal_achievement: float
    grounding: float
    coordination: float
    recovery: float

    def __post_init__(self):
        for name in AXES:
            v = getattr(self, name)
            if v is None or not (0.0 <= v <= 1.0):
                raise ValueError(f"axis {name} must lie in [0, 1], got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in AXES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "AxisScores":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class TrajectoryScore:
    trajectory_id: str
    scalar: float
    axes: AxisScores
    judge_id: str


@dataclass(frozen=True)
class RewardWeights:
    w_quality: float = 1.0
    w_cost: float = 0.3
    w_retry: float = 0.15
    token_cap: int = 8000

    def __post_init__(self):
        if min(self.w_quality, self.w_cost, self.w_retry) < 0:
            raise ValueError("reward weights must be nonnegative")
        if self.token_cap <= 0:
            raise ValueError("token_cap must be positive")


@dataclass
class RewardConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    axis_weights: tuple = (0.25, 0.25, 0.25, 0.25)
    sigma_max: float = 0.5
    judges: tuple = ("judge_a", "judge_b", "judge_c")

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> "RewardConfig":
        data = dict(data or {})
        weights = RewardWeights(
            w_quality=float(data.get("w_quality", 1.0)),
            w_cost=float(data.get("w_cost", 0.3)),
            w_retry=float(data.get("w_retry", 0.15)),
            token_cap=int(data.get("token_cap", 8000)),
        )
        axis = data.get("axis_weights", (0.25, 0.25, 0.25, 0.25))
        if isinstance(axis, Mapping):
            axis = tuple(float(axis[name]) for name in AXES)
        cfg = cls(
            weights=weights,
            axis_weights=tuple(float(w) for w in axis),
            sigma_max=float(data.get("sigma_max", 0.5)),
            judges=tuple(data.get("judges", ("judge_a", "judge_b", "judge_c"))),
        )
        _check_axis_weights(cfg.axis_weights)
        return cfg


class Judge(Protocol):
    judge_id: str

    def score_group(self, trajectories: Sequence) -> List[AxisScores]:
        """Score all trajectories of one group in a single comparative call."""


def _check_axis_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(AXES),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"axis weights must be {len(AXES)} nonnegative reals summing to 1, got {weights!r}")
    return w


def compose_axes(axes: AxisScores, weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25)) -> float:
    w = _check_axis_weights(weights)
    return float(min(1.0, max(0.0, float(axes.as_array() @ w))))


def judge_group(
    trajectories: Sequence, judge: Judge, axis_weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25)
) -> List[TrajectoryScore]:
    """Relative scores for a same-class group; raises ``JudgeFault`` on judge failure."""
    if len(trajectories) < 2:
        raise ValueError("relative judging needs at least two trajectories")
    tags = {t.class_tag for t in trajectories}
    if len(tags) != 1:
        raise ValueError(f"group mixes classes {sorted(tags)}")
    axes = judge.score_group(trajectories)
    if len(axes) != len(trajectories):
        raise JudgeFault(f"{judge.judge_id} returned {len(axes)} scores for {len(trajectories)} trajectories")
    return [
        TrajectoryScore(t.uid, compose_axes(a, axis_weights), a, judge.judge_id)
        for t, a in zip(trajectories, axes)
    ]


def confidence_from_disagreement(std: float, sigma_max: float = 0.5) -> float:
    if std < 0:
        raise ValueError("std must be nonnegative")
    if sigma_max <= 0:
        raise ValueError("sigma_max must be positive")
    return max(0.0, 1.0 - std / sigma_max)


@dataclass
class CrossJudgeResult:
    mean: float
    std: float
    confidence: float
    per_judge: Dict[str, float]
    axes: Dict[str, AxisScores]

    def mean_axes(self) -> AxisScores:
        return AxisScores.from_array(np.mean([a.as_array() for a in self.axes.values()], axis=0))


def cross_judge(
    trajectories: Sequence,
    judges: Sequence[Judge],
    axis_weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25),
    sigma_max: float = 0.5,
) -> Optional[Dict[str, CrossJudgeResult]]:
    """Per-trajectory mean, population std and confidence across judges.

    Judges that fault are dropped; returns ``None`` when every judge faults.
    """
    if not judges:
        raise ValueError("cross_judge needs at least one judge")
    scored: Dict[str, List[TrajectoryScore]] = {}
    for judge in sorted(judges, key=lambda j: j.judge_id):
        try:
            scored[judge.judge_id] = judge_group(trajectories, judge, axis_weights)
        except JudgeFault:
            continue
    if not scored:
        return None
    out = {}
    for i, t in enumerate(trajectories):
        per_judge = {jid: rows[i].scalar for jid, rows in scored.items()}
        values = np.array(list(per_judge.values()))
        std = float(values.std())  # population std
        out[t.uid] = CrossJudgeResult(
            mean=float(values.mean()),
            std=std,
            confidence=confidence_from_disagreement(std, sigma_max),
            per_judge=per_judge,
            axes={jid: rows[i].axes for jid, rows in scored.items()},
        )
    return out


def hybrid_reward(quality: float, tokens: int, retries: int, weights: RewardWeights = RewardWeights()) -> float:
    # the token term is deliberately not clamped at the cap
    return (
        weights.w_quality * quality
        - weights.w_cost * (tokens / weights.token_cap)
        - weights.w_retry * retries
    )
