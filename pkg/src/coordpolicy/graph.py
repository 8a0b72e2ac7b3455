"""Policy graph: per-(signature, action) statistics and reliability-aware UCB1.

The graph is an exact table keyed by folded signature. Scores follow

    mean + c(N_s) * sqrt(ln(N_s + 1) / N_sa) - lambda * failure_rate

with c(N_s) = max(0.5, 1.4 * 2 ** (-N_s / 50)). Unvisited edges score +inf.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .signature import Regime, Signature

FORMAT_VERSION = 1

EXPLORATION_START = 1.4
EXPLORATION_HALF_LIFE = 50.0
EXPLORATION_FLOOR = 0.5
DEFAULT_RELIABILITY_WEIGHT = 0.5

FAILURE_KINDS = ("validation", "recoverable_execution")


class GraphError(ValueError):
    pass


class GraphFormatError(GraphError):
    pass


@dataclass(frozen=True, order=True)
class ActionId:
    kind: str
    cell: str = ""
    skill: str = ""
    model: str = ""

    def __post_init__(self):
        if self.kind == "invoke":
            if not (self.skill and self.model and self.cell):
                raise ValueError("invoke needs a cell, skill and model")
        elif self.kind == "skip":
            if not self.cell or self.skill or self.model:
                raise ValueError("skip carries exactly one cell")
        elif self.kind == "terminate":
            if self.cell or self.skill or self.model:
                raise ValueError("terminate carries nothing")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")

    @classmethod
    def invoke(cls, cell: str, skill: str, model: str) -> "ActionId":
        return cls("invoke", cell, skill, model)

    @classmethod
    def skip(cls, cell: str) -> "ActionId":
        return cls("skip", cell)

    @classmethod
    def terminate(cls) -> "ActionId":
        return cls("terminate")

    def canonical(self) -> str:
        if self.kind == "invoke":
            return f"invoke:{self.cell}:{self.skill}@{self.model}"
        if self.kind == "skip":
            return f"skip:{self.cell}"
        return "terminate"

    @classmethod
    def parse(cls, text: str) -> "ActionId":
        if text == "terminate":
            return cls.terminate()
        kind, _, rest = text.partition(":")
        if kind == "skip" and rest:
            return cls.skip(rest)
        if kind == "invoke":
            cell, _, variant = rest.partition(":")
            skill, _, model = variant.partition("@")
            return cls.invoke(cell, skill, model)
        raise ValueError(f"malformed action {text!r}")

    def __str__(self) -> str:
        return self.canonical()


@dataclass
class EdgeStats:
    visits: float = 0.0
    mean_reward: float = 0.0
    variance_acc: float = 0.0
    token_sum: int = 0
    token_runs: int = 0
    failure_count: int = 0
    attempt_count: int = 0

    @property
    def mean_tokens(self) -> float:
        return self.token_sum / self.token_runs if self.token_runs else 0.0

    @property
    def variance(self) -> float:
        return self.variance_acc / self.visits if self.visits > 0 else 0.0


@dataclass
class Node:
    visits: float = 0.0
    edges: Dict[ActionId, EdgeStats] = field(default_factory=dict)


@dataclass
class PolicyGraph:
    nodes: Dict[Signature, Node] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __len__(self) -> int:
        return len(self.nodes)

    def edge(self, signature: Signature, action: ActionId) -> EdgeStats:
        try:
            return self.nodes[signature].edges[action]
        except KeyError:
            raise GraphError(f"unknown edge ({signature}, {action})") from None

    def touch(self, signature: Signature, actions: Iterable[ActionId]) -> Node:
        node = self.nodes.setdefault(signature, Node())
        for action in actions:
            node.edges.setdefault(action, EdgeStats())
        return node

    def iter_edges(self):
        for sig, node in self.nodes.items():
            for action, stats in node.edges.items():
                yield sig, action, stats

    def copy(self) -> "PolicyGraph":
        return loads_graph(dumps_graph(self))


def anneal_exploration(signature_visits: float) -> float:
    if signature_visits < 0:
        raise ValueError("signature_visits must be nonnegative")
    return max(EXPLORATION_FLOOR, EXPLORATION_START * 2.0 ** (-signature_visits / EXPLORATION_HALF_LIFE))


def failure_rate(edge: EdgeStats) -> float:
    if edge.attempt_count == 0:
        return 0.0
    return edge.failure_count / edge.attempt_count


def ucb_score(
    edge: EdgeStats,
    signature_visits: float,
    reliability_weight: float = DEFAULT_RELIABILITY_WEIGHT,
) -> float:
    if reliability_weight < 0:
        raise ValueError("reliability_weight must be nonnegative")
    if edge.visits <= 0:
        return math.inf
    bonus = anneal_exploration(signature_visits) * math.sqrt(math.log(signature_visits + 1.0) / edge.visits)
    return edge.mean_reward + bonus - reliability_weight * failure_rate(edge)


def select_action(
    graph: PolicyGraph,
    signature: Signature,
    legal: Iterable[ActionId],
    rng: np.random.Generator,
    reliability_weight: float = DEFAULT_RELIABILITY_WEIGHT,
) -> ActionId:
    """Argmax of ``ucb_score`` over ``legal``; exact ties are broken by ``rng``.

    Creates the node and any missing legal edges on first touch.
    """
    actions = sorted(set(legal))
    if not actions:
        raise GraphError("legal action set is empty")
    node = graph.touch(signature, actions)
    scores = [ucb_score(node.edges[a], node.visits, reliability_weight) for a in actions]
    best = max(scores)
    if math.isinf(best):
        tied = [a for a, s in zip(actions, scores) if math.isinf(s)]
    else:
        tied = [a for a, s in zip(actions, scores) if s >= best - 1e-12]
    if len(tied) == 1:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def backup(
    graph: PolicyGraph,
    visited_edges: Sequence[Tuple[Signature, ActionId]],
    reward: float,
    confidence: float = 1.0,
) -> PolicyGraph:
    """Confidence-weighted incremental mean/variance update along a trajectory."""
    if not (0.0 <= confidence <= 1.0):
        raise GraphError(f"confidence must lie in [0, 1], got {confidence}")
    if not math.isfinite(reward):
        raise GraphError(f"reward must be finite, got {reward}")
    # validate every edge before touching any statistic
    edges = [(graph.nodes.get(sig), graph.edge(sig, action)) for sig, action in visited_edges]
    if confidence == 0.0:
        return graph
    for node, stats in edges:
        total = stats.visits + confidence
        delta = reward - stats.mean_reward
        stats.mean_reward += (confidence / total) * delta
        stats.variance_acc += confidence * delta * (reward - stats.mean_reward)
        stats.visits = total
        node.visits += confidence
    return graph


def record_attempt(graph: PolicyGraph, signature: Signature, action: ActionId, attempts: int = 1) -> PolicyGraph:
    graph.edge(signature, action).attempt_count += attempts
    return graph


def record_failure(graph: PolicyGraph, signature: Signature, action: ActionId, kind: str) -> PolicyGraph:
    if kind not in FAILURE_KINDS:
        raise GraphError(f"unknown failure kind {kind!r}")
    stats = graph.edge(signature, action)
    stats.failure_count += 1
    stats.attempt_count = max(stats.attempt_count, stats.failure_count)
    return graph


def record_tokens(graph: PolicyGraph, signature: Signature, action: ActionId, tokens: int) -> PolicyGraph:
    if tokens < 0:
        raise GraphError("tokens must be nonnegative")
    stats = graph.edge(signature, action)
    stats.token_sum += int(tokens)
    stats.token_runs += 1
    return graph


def warm_start(graph: PolicyGraph, discount: float = 1.0) -> PolicyGraph:
    """Copy of ``graph`` with every visit count scaled by ``discount``."""
    if not (0.0 <= discount <= 1.0):
        raise GraphError("discount must lie in [0, 1]")
    out = graph.copy()
    if discount == 1.0:
        return out
    for node in out.nodes.values():
        node.visits *= discount
        for stats in node.edges.values():
            stats.visits *= discount
            stats.variance_acc *= discount
            if stats.visits == 0.0:
                stats.mean_reward = 0.0
                stats.variance_acc = 0.0
    return out


# --- persistence -----------------------------------------------------------

_EDGE_FIELDS = (
    "visits",
    "mean_reward",
    "variance_acc",
    "token_sum",
    "token_runs",
    "failure_count",
    "attempt_count",
)


def graph_to_document(graph: PolicyGraph) -> dict:
    nodes = []
    for sig in sorted(graph.nodes, key=Signature.canonical):
        node = graph.nodes[sig]
        edges = []
        for action in sorted(node.edges, key=ActionId.canonical):
            stats = node.edges[action]
            row = {"action": action.canonical()}
            row.update({name: getattr(stats, name) for name in _EDGE_FIELDS})
            edges.append(row)
        nodes.append(
            {
                "signature": {
                    "regime": sig.regime.value,
                    "mask": sig.handoff_mask,
                    "buckets": list(sig.belief_buckets),
                },
                "visits": node.visits,
                "edges": edges,
            }
        )
    return {"format_version": graph.format_version, "nodes": nodes}


def dumps_graph(graph: PolicyGraph) -> str:
    return json.dumps(graph_to_document(graph), sort_keys=True, indent=1) + "\n"


def graph_from_document(doc) -> PolicyGraph:
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    graph = PolicyGraph()
    try:
        for entry in doc["nodes"]:
            s = entry["signature"]
            mask = str(s["mask"])
            buckets = tuple(int(b) for b in s["buckets"])
            if len(mask) != 7 or set(mask) - {"0", "1"} or len(buckets) != 4:
                raise GraphFormatError(f"malformed signature {s!r}")
            sig = Signature(Regime(s["regime"]), mask, buckets)
            if sig in graph.nodes:
                raise GraphFormatError(f"duplicate node {sig}")
            node = Node(visits=float(entry["visits"]))
            for row in entry["edges"]:
                action = ActionId.parse(row["action"])
                stats = EdgeStats(
                    visits=float(row["visits"]),
                    mean_reward=float(row["mean_reward"]),
                    variance_acc=float(row["variance_acc"]),
                    token_sum=int(row["token_sum"]),
                    token_runs=int(row["token_runs"]),
                    failure_count=int(row["failure_count"]),
                    attempt_count=int(row["attempt_count"]),
                )
                if stats.visits < 0 or stats.failure_count > stats.attempt_count:
                    raise GraphFormatError(f"inconsistent edge statistics for {action}")
                node.edges[action] = stats
            graph.nodes[sig] = node
    except GraphFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph document: {exc}") from exc
    return graph


def loads_graph(text: str) -> PolicyGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"not a graph document: {exc}") from exc
    return graph_from_document(doc)


def save_graph(graph: PolicyGraph, destination: Union[str, os.PathLike]) -> Path:
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_graph(graph))
    return path


def load_graph(source: Union[str, os.PathLike]) -> PolicyGraph:
    return loads_graph(Path(source).read_text())


# --- inspection --------------------------------------------------------------

def inspect_signature(graph: PolicyGraph, signature: Signature) -> List[dict]:
    """Per-edge visits, mean and failure rate, best mean first."""
    node = graph.nodes.get(signature)
    if node is None:
        raise GraphError(f"signature {signature} not in graph")
    rows = [
        {
            "action": a.canonical(),
            "visits": s.visits,
            "mean_reward": s.mean_reward,
            "failure_rate": failure_rate(s),
            "mean_tokens": s.mean_tokens,
        }
        for a, s in node.edges.items()
    ]
    rows.sort(key=lambda r: (-r["mean_reward"], r["action"]))
    return rows


def top_signatures(graph: PolicyGraph, k: int = 10) -> List[Tuple[Signature, Node, Optional[ActionId]]]:
    """The ``k`` most visited signatures with their best-mean visited action."""
    ranked = sorted(graph.nodes.items(), key=lambda kv: (-kv[1].visits, kv[0].canonical()))
    out = []
    for sig, node in ranked[:k]:
        visited = [(s.mean_reward, a) for a, s in node.edges.items() if s.visits > 0]
        best = max(visited, key=lambda t: (t[0], t[1].canonical()))[1] if visited else None
        out.append((sig, node, best))
    return out
