"""Four-arm learning protocol, post-hoc cross-judge audit and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from . import graph as pg
from .config import Config
from .graph import PolicyGraph
from .reward import AXES, cross_judge, hybrid_reward
from .router import RouterConfig, RunReport, Trajectory, preflight, run_task
from .sim import CLASS_NAMES, CLASS_TAGS, SimEnv, SyntheticTask, make_judges, save_corpus

log = logging.getLogger(__name__)

ARMS = ("baseline", "no_skip", "main", "warm_start")
PLATEAU_EPOCHS = 3


class ExperimentError(RuntimeError):
    pass


@dataclass
class ArmConfig:
    arm: str
    epochs: int = 8
    skip_enabled: bool = True
    learning_enabled: bool = True
    warm_start_source: Optional[object] = None  # path or PolicyGraph
    seed: int = 0

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.arm == "baseline" and (self.learning_enabled or self.skip_enabled or self.epochs != 1):
            raise ValueError("baseline is a single pass with learning and skips off")
        if self.arm == "no_skip" and self.skip_enabled:
            raise ValueError("no_skip arm must disable skips")
        if self.arm == "warm_start" and self.warm_start_source is None:
            raise ValueError("warm_start arm needs a source graph")

    @classmethod
    def for_arm(cls, arm: str, epochs: int = 8, seed: int = 0, source=None) -> "ArmConfig":
        if arm == "baseline":
            return cls(arm, 1, skip_enabled=False, learning_enabled=False, seed=seed)
        if arm == "no_skip":
            return cls(arm, epochs, skip_enabled=False, seed=seed)
        return cls(arm, epochs, warm_start_source=source if arm == "warm_start" else None, seed=seed)


@dataclass
class RunRow:
    uid: str
    arm: str
    epoch: int
    task_id: str
    class_tag: str
    tokens: int
    retries: int
    termination: str
    skipped: tuple
    judged: bool
    live_score: float
    live_reward: float
    confidence: float

    CSV_FIELDS = ("uid", "arm", "epoch", "task_id", "class_tag", "tokens", "retries", "termination",
                  "skipped", "judged", "live_score", "live_reward", "confidence")


@dataclass
class AuditRow:
    uid: str
    arm: str
    epoch: int
    task_id: str
    class_tag: str
    per_judge: Dict[str, float]
    axes: Dict[str, float]
    mean: float
    std: float
    confidence: float
    tokens: int
    retries: int
    reward: float


@dataclass
class EpochStats:
    epoch: int
    runs: int
    mean_live_score: float
    mean_live_reward: float
    mean_tokens: float
    skip_rate: Dict[str, float]
    mean_audited_score: Optional[float] = None
    mean_audited_reward: Optional[float] = None
    mean_single_judge_score: Optional[float] = None


@dataclass
class ArmResult:
    arm: str
    rows: List[RunRow] = field(default_factory=list)
    trajectories: List[Trajectory] = field(default_factory=list)
    reports: List[RunReport] = field(default_factory=list)
    graph: Optional[PolicyGraph] = None
    cells: tuple = ()
    judge_faults: int = 0
    audit: Dict[str, AuditRow] = field(default_factory=dict)
    single_judge: Optional[str] = None

    @property
    def n_epochs(self) -> int:
        return max((r.epoch for r in self.rows), default=0)

    def epoch_rows(self, epoch: int) -> List[RunRow]:
        return [r for r in self.rows if r.epoch == epoch]

    def epoch_stats(self) -> List[EpochStats]:
        out = []
        for e in range(1, self.n_epochs + 1):
            rows = self.epoch_rows(e)
            judged = [r for r in rows if r.judged]
            stats = EpochStats(
                epoch=e,
                runs=len(rows),
                mean_live_score=_mean(r.live_score for r in judged),
                mean_live_reward=_mean(r.live_reward for r in judged),
                mean_tokens=_mean(r.tokens for r in rows),
                skip_rate={c: _mean(c in r.skipped for r in rows) for c in self.cells},
            )
            audited = [self.audit[r.uid] for r in rows if r.uid in self.audit]
            if audited:
                stats.mean_audited_score = _mean(a.mean for a in audited)
                stats.mean_audited_reward = _mean(a.reward for a in audited)
                if self.single_judge is not None:
                    stats.mean_single_judge_score = _mean(a.per_judge[self.single_judge] for a in audited)
            out.append(stats)
        return out

    def plateau(self, metric: str) -> float:
        """Mean of the final three epoch means of ``metric`` (all epochs if fewer)."""
        values = [getattr(s, metric) for s in self.epoch_stats()]
        tail = values[-PLATEAU_EPOCHS:]
        if any(v is None for v in tail):
            raise ExperimentError(f"{metric} missing for arm {self.arm}; run the audit first")
        return float(np.mean(tail))

    def plateau_epochs(self) -> List[int]:
        n = self.n_epochs
        return list(range(max(1, n - PLATEAU_EPOCHS + 1), n + 1))

    def class_scores(self, epochs: Optional[Iterable[int]] = None) -> Dict[str, Optional[float]]:
        epochs = set(epochs if epochs is not None else self.plateau_epochs())
        by_class = defaultdict(list)
        for r in self.rows:
            if r.epoch in epochs and r.uid in self.audit:
                by_class[r.class_tag].append(self.audit[r.uid].mean)
        return {tag: (float(np.mean(v)) if v else None) for tag, v in ((t, by_class.get(t, [])) for t in CLASS_TAGS)}

    def skip_rates(self, class_tags: Sequence[str], cells: Sequence[str], epochs=None) -> Dict[str, float]:
        epochs = set(epochs if epochs is not None else self.plateau_epochs())
        rows = [r for r in self.rows if r.epoch in epochs and r.class_tag in class_tags]
        return {c: _mean(c in r.skipped for r in rows) for c in cells}


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return float(np.mean(values)) if values else float("nan")


def _run_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    # shared across arms so arm comparisons see common random numbers
    return np.random.default_rng([seed, epoch, index, 1009])


def run_arm(
    arm: ArmConfig,
    corpus: Sequence[SyntheticTask],
    env: SimEnv,
    config: Config,
    out_dir: Optional[Path] = None,
) -> ArmResult:
    """Run every task for every epoch, judge each run against its best peer, back up."""
    report = preflight(config, env)
    if not report.ok:
        raise ExperimentError(f"pre-flight blocked: {report.issues}")
    graph: Optional[PolicyGraph] = None
    if arm.learning_enabled:
        if arm.warm_start_source is not None:
            source = arm.warm_start_source
            try:
                source = source if isinstance(source, PolicyGraph) else pg.load_graph(source)
            except (OSError, pg.GraphError) as exc:
                raise ExperimentError(f"cannot load warm-start source: {exc}") from exc
            graph = pg.warm_start(source, config.experiment.warm_discount)
        else:
            graph = PolicyGraph()
    router = RouterConfig(
        max_steps=config.router.max_steps,
        token_cap=config.router.token_cap,
        max_retries=config.router.max_retries,
        reliability_weight=config.router.reliability_weight,
        skip_enabled=arm.skip_enabled,
        learning_enabled=arm.learning_enabled,
        governance=config.router.governance,
    )
    live = make_judges(env, corpus, [config.experiment.live_judge], arm.seed)
    weights = config.reward.weights
    result = ArmResult(arm=arm.arm, graph=graph, cells=config.pool.names)
    best: Dict[str, tuple] = {}

    for epoch in range(1, arm.epochs + 1):
        for i, task in enumerate(corpus):
            traj, rep = run_task(task, graph, env, router, _run_rng(arm.seed, epoch, i),
                                 pool=config.pool, signature_config=config.signature)
            traj.uid, traj.arm, traj.epoch = f"{arm.arm}/e{epoch}/{task.id}", arm.arm, epoch
            env.annotate(traj, task)
            peer = best[task.id][1] if task.id in best else env.reference_trajectory(task)
            scores = cross_judge([traj, peer], live, config.reward.axis_weights, config.reward.sigma_max)
            row = RunRow(traj.uid, arm.arm, epoch, task.id, task.class_tag, traj.tokens, traj.retries,
                         traj.termination_reason, tuple(sorted(traj.skipped_cells())), False,
                         float("nan"), float("nan"), 0.0)
            if scores is None:
                result.judge_faults += 1
            else:
                s = scores[traj.uid]
                reward = hybrid_reward(s.mean, traj.tokens, traj.retries, weights)
                row.judged, row.live_score, row.live_reward, row.confidence = True, s.mean, reward, s.confidence
                rep.judged, rep.quality, rep.total_reward = True, s.mean, reward
                rep.cost_term = weights.w_cost * traj.tokens / weights.token_cap
                rep.retry_term = weights.w_retry * traj.retries
                if graph is not None:
                    pg.backup(graph, traj.visited_edges, reward, s.confidence)
                if task.id not in best or s.mean > best[task.id][0]:
                    best[task.id] = (s.mean, traj)
            result.rows.append(row)
            result.trajectories.append(traj)
            result.reports.append(rep)
        if out_dir is not None and graph is not None:
            pg.save_graph(graph, Path(out_dir) / "graphs" / f"{arm.arm}_e{epoch}.json")
    return result


def audit(
    results: Sequence[ArmResult],
    env: SimEnv,
    corpus: Sequence[SyntheticTask],
    judge_ids: Sequence[str],
    config: Config,
    seed: int,
) -> List[AuditRow]:
    """Re-score every stored trajectory, grouped per task across arms and epochs.

    Read-only with respect to policy graphs. Attaches rows to each result.
    """
    if not judge_ids:
        raise ValueError("audit needs at least one judge")
    judges = make_judges(env, corpus, judge_ids, seed)
    groups: Dict[str, List[Trajectory]] = defaultdict(list)
    for res in results:
        for t in res.trajectories:
            groups[t.task_id].append(t)
    rows: List[AuditRow] = []
    weights = config.reward.weights
    for task in corpus:
        group = groups.get(task.id, [])
        if len(group) < 2:
            group = group + [env.reference_trajectory(task, uid=f"audit-ref/{task.id}")]
        if len(group) < 2:
            continue
        scored = cross_judge(group, judges, config.reward.axis_weights, config.reward.sigma_max)
        if scored is None:
            continue
        for t in group:
            if t.arm == "reference":
                continue
            s = scored[t.uid]
            axes = s.mean_axes()
            rows.append(AuditRow(
                uid=t.uid, arm=t.arm, epoch=t.epoch, task_id=t.task_id, class_tag=t.class_tag,
                per_judge=dict(s.per_judge), axes={a: getattr(axes, a) for a in AXES},
                mean=s.mean, std=s.std, confidence=s.confidence, tokens=t.tokens, retries=t.retries,
                reward=hybrid_reward(s.mean, t.tokens, t.retries, weights),
            ))
    by_uid = {r.uid: r for r in rows}
    for res in results:
        res.audit = {uid: r for uid, r in by_uid.items() if r.arm == res.arm}
        res.single_judge = config.experiment.live_judge if config.experiment.live_judge in judge_ids else None
    return rows


def per_class_report(baseline: ArmResult, arm: ArmResult) -> List[dict]:
    """One row per class: baseline audited mean, arm plateau audited mean, delta."""
    base = baseline.class_scores(epochs=[baseline.n_epochs] if baseline.n_epochs else [])
    other = arm.class_scores()
    rows = []
    for tag in CLASS_TAGS:
        b, a = base.get(tag), other.get(tag)
        absent = b is None or a is None
        rows.append({
            "class": tag,
            "name": CLASS_NAMES[tag],
            "baseline": b,
            "arm": a,
            "delta": None if absent else a - b,
            "absent": absent,
        })
    return rows


def warm_start_comparison(cold: ArmResult, warm: ArmResult) -> dict:
    if cold.n_epochs != warm.n_epochs:
        raise ExperimentError(f"epoch mismatch: cold {cold.n_epochs} vs warm {warm.n_epochs}")
    cs, ws = cold.epoch_stats(), warm.epoch_stats()
    rows = []
    cum_cold = cum_warm = 0.0
    for c, w in zip(cs, ws):
        cum_cold += c.mean_tokens * c.runs
        cum_warm += w.mean_tokens * w.runs
        rows.append({
            "epoch": c.epoch,
            "cold_audited": c.mean_audited_score,
            "warm_audited": w.mean_audited_score,
            "delta_audited": _sub(w.mean_audited_score, c.mean_audited_score),
            "cold_single": c.mean_single_judge_score,
            "warm_single": w.mean_single_judge_score,
            "delta_single": _sub(w.mean_single_judge_score, c.mean_single_judge_score),
            "cold_live": c.mean_live_score,
            "warm_live": w.mean_live_score,
            "cold_tokens": c.mean_tokens,
            "warm_tokens": w.mean_tokens,
            "cum_cold_tokens": cum_cold,
            "cum_warm_tokens": cum_warm,
            "cum_token_delta": cum_warm - cum_cold,
        })

    def summary(sel):
        pick = [r for r in rows if r["epoch"] in sel]
        out = {}
        for key in ("cold_audited", "warm_audited", "delta_audited", "cold_single", "warm_single",
                    "delta_single", "cold_tokens", "warm_tokens"):
            vals = [r[key] for r in pick]
            out[key] = None if any(v is None for v in vals) else float(np.mean(vals))
        return out

    plateau = cold.plateau_epochs()
    return {
        "epochs": rows,
        "plateau": summary(plateau),
        "full_run": summary([r["epoch"] for r in rows]),
        "plateau_epochs": plateau,
    }


def _sub(a, b):
    return None if a is None or b is None else a - b


def retry_pipeline_success(p: float, n: int, k: int) -> float:
    """End-to-end success of a k-stage pipeline, each stage retried up to n times."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    if int(n) != n or int(k) != k or n < 1 or k < 1:
        raise ValueError("n and k must be positive integers")
    return (1.0 - (1.0 - p) ** int(n)) ** int(k)


# --- protocol ---------------------------------------------------------------

@dataclass
class ProtocolResult:
    seed: int
    corpus: List[SyntheticTask]
    results: Dict[str, ArmResult]
    audit_rows: List[AuditRow]
    source_graph: Optional[PolicyGraph] = None


def train_source_graph(config: Config, seed: int) -> PolicyGraph:
    """Main-arm learning on the related source environment, for warm starts."""
    env = SimEnv(config.source_env)
    corpus = env.generate_corpus(config.experiment.tasks, seed + 100_003)
    arm = ArmConfig.for_arm("main", config.experiment.source_epochs, seed + 100_003)
    return run_arm(arm, corpus, env, config).graph


def run_protocol(
    config: Config,
    seed: int,
    arms: Optional[Sequence[str]] = None,
    out_dir: Optional[Path] = None,
    audit_judges: Optional[Sequence[str]] = None,
) -> ProtocolResult:
    arms = tuple(arms or config.experiment.arms)
    env = SimEnv(config.env)
    corpus = env.generate_corpus(config.experiment.tasks, seed)
    source = None
    if "warm_start" in arms:
        if config.experiment.warm_source:
            source = pg.load_graph(config.experiment.warm_source)
        else:
            source = train_source_graph(config, seed)
    results = {}
    for name in arms:
        arm = ArmConfig.for_arm(name, config.experiment.epochs, seed, source)
        log.info("arm %s: %d epochs", name, arm.epochs)
        results[name] = run_arm(arm, corpus, env, config, out_dir)
    judge_ids = list(audit_judges or config.reward.judges[: config.experiment.audit_judges])
    rows = audit(list(results.values()), env, corpus, judge_ids, config, seed)
    proto = ProtocolResult(seed, list(corpus), results, rows, source)
    if out_dir is not None:
        emit_outputs(proto, config, out_dir)
    return proto


def _parse_row(d: Mapping[str, str]) -> RunRow:
    def num(v):
        return float(v) if v not in ("", None) else float("nan")

    return RunRow(
        uid=d["uid"], arm=d["arm"], epoch=int(d["epoch"]), task_id=d["task_id"], class_tag=d["class_tag"],
        tokens=int(d["tokens"]), retries=int(d["retries"]), termination=d["termination"],
        skipped=tuple(c for c in d["skipped"].split(";") if c), judged=d["judged"] == "True",
        live_score=num(d["live_score"]), live_reward=num(d["live_reward"]), confidence=num(d["confidence"]),
    )


def load_protocol(out_dir) -> tuple:
    """Rebuild a ``ProtocolResult`` and its ``Config`` from an ``experiment run`` directory."""
    from .sim import load_corpus

    out_dir = Path(out_dir)
    try:
        config = Config.from_dict(json.loads((out_dir / "config.json").read_text()))
        manifest = json.loads((out_dir / "manifest.json").read_text())
        corpus = load_corpus(out_dir / "corpus.json")
        with open(out_dir / "runs.csv", newline="") as fh:
            rows = [_parse_row(d) for d in csv.DictReader(fh)]
        with open(out_dir / "trajectories.jsonl") as fh:
            trajectories = [Trajectory.from_dict(json.loads(line)) for line in fh if line.strip()]
    except (OSError, ValueError, KeyError) as exc:
        raise ExperimentError(f"cannot load experiment outputs from {out_dir}: {exc}") from exc
    env = SimEnv(config.env)
    lookup = {t.id: t for t in corpus}
    results: Dict[str, ArmResult] = {}
    for name in manifest["arms"]:
        path = out_dir / "graphs" / f"{name}_final.json"
        results[name] = ArmResult(arm=name, cells=config.pool.names,
                                  graph=pg.load_graph(path) if path.exists() else None)
    for r in rows:
        results[r.arm].rows.append(r)
    for t in trajectories:
        results[t.arm].trajectories.append(env.annotate(t, lookup[t.task_id]))
    source_path = out_dir / "graphs" / "warm_source.json"
    source = pg.load_graph(source_path) if source_path.exists() else None
    proto = ProtocolResult(int(manifest["seed"]), corpus, results, [], source)
    return proto, config


def reaudit(proto: ProtocolResult, config: Config, judge_ids: Sequence[str]) -> List[AuditRow]:
    env = SimEnv(config.env)
    proto.audit_rows = audit(list(proto.results.values()), env, proto.corpus, judge_ids, config, proto.seed)
    return proto.audit_rows


# --- outputs ------------------------------------------------------------------

def curve_fields(cells: Sequence[str]) -> List[str]:
    return ["arm", "epoch", "mean_live_score", "mean_audited_score", "mean_single_judge_score",
            "mean_live_reward", "mean_audited_reward", "mean_tokens"] + [f"skip_rate_{c}" for c in cells]


def learning_curve_rows(results: Mapping[str, ArmResult]) -> List[dict]:
    rows = []
    for name, res in results.items():
        for s in res.epoch_stats():
            row = {
                "arm": name,
                "epoch": s.epoch,
                "mean_live_score": s.mean_live_score,
                "mean_audited_score": s.mean_audited_score,
                "mean_single_judge_score": s.mean_single_judge_score,
                "mean_live_reward": s.mean_live_reward,
                "mean_audited_reward": s.mean_audited_reward,
                "mean_tokens": s.mean_tokens,
            }
            row.update({f"skip_rate_{c}": s.skip_rate[c] for c in res.cells})
            rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return v


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[Mapping]) -> Path:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in fields})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_audit_csv(path: Path, rows: Sequence[AuditRow], judge_ids: Sequence[str]) -> Path:
    fields = ["uid", "task_id", "arm", "epoch", "class_tag"] + [f"judge_{j}" for j in judge_ids] + \
             [f"axis_{a}" for a in AXES] + ["mean", "std", "confidence", "tokens", "retries", "reward"]
    out = []
    for r in rows:
        d = {"uid": r.uid, "task_id": r.task_id, "arm": r.arm, "epoch": r.epoch, "class_tag": r.class_tag,
             "mean": r.mean, "std": r.std, "confidence": r.confidence, "tokens": r.tokens,
             "retries": r.retries, "reward": r.reward}
        d.update({f"judge_{j}": r.per_judge.get(j) for j in judge_ids})
        d.update({f"axis_{a}": r.axes[a] for a in AXES})
        out.append(d)
    return write_csv(path, fields, out)


def _plot(results: Mapping[str, ArmResult], out_dir: Path) -> List[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, res in results.items():
        stats = res.epoch_stats()
        xs = [s.epoch for s in stats]
        ax.plot(xs, [s.mean_audited_score if s.mean_audited_score is not None else np.nan for s in stats],
                marker="o", label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("audited score")
    ax.legend()
    fig.tight_layout()
    paths.append(out_dir / "score_vs_epoch.png")
    fig.savefig(paths[-1], metadata={"Software": None})
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, res in results.items():
        stats = res.epoch_stats()
        ax.plot([s.epoch for s in stats], [float(np.mean(list(s.skip_rate.values()))) for s in stats],
                marker="o", label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean skip rate per cell")
    ax.legend()
    fig.tight_layout()
    paths.append(out_dir / "skip_rate_vs_epoch.png")
    fig.savefig(paths[-1], metadata={"Software": None})
    plt.close(fig)
    return paths


def emit_outputs(proto: ProtocolResult, config: Config, out_dir) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExperimentError(f"cannot write to {out_dir}: {exc}") from exc
    results = proto.results
    cells = config.pool.names
    paths = {}
    paths["learning_curves"] = write_csv(out_dir / "learning_curves.csv", curve_fields(cells),
                                         learning_curve_rows(results))
    paths["runs"] = write_csv(out_dir / "runs.csv", RunRow.CSV_FIELDS, [
        {**r.__dict__, "skipped": ";".join(r.skipped)} for res in results.values() for r in res.rows
    ])
    judge_ids = sorted({j for r in proto.audit_rows for j in r.per_judge})
    paths["audit"] = write_audit_csv(out_dir / "audit.csv", proto.audit_rows, judge_ids)
    with open(out_dir / "trajectories.jsonl", "w") as fh:
        for res in results.values():
            for t in res.trajectories:
                fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
    paths["trajectories"] = out_dir / "trajectories.jsonl"
    reports = out_dir / "reports"
    for res in results.values():
        for t, rep in zip(res.trajectories, res.reports):
            p = reports / res.arm / f"e{t.epoch}" / f"{t.task_id}.json"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(json.dumps(rep.to_dict(), indent=1) + "\n")
    paths["reports"] = reports
    save_corpus(proto.corpus, out_dir / "corpus.json")
    for name, res in results.items():
        if res.graph is not None:
            pg.save_graph(res.graph, out_dir / "graphs" / f"{name}_final.json")
    if proto.source_graph is not None:
        pg.save_graph(proto.source_graph, out_dir / "graphs" / "warm_source.json")
    if "baseline" in results:
        for name, res in results.items():
            if name != "baseline":
                write_csv(out_dir / f"per_class_{name}.csv", ["class", "name", "baseline", "arm", "delta", "absent"],
                          per_class_report(results["baseline"], res))
    if "main" in results and "warm_start" in results:
        cmp = warm_start_comparison(results["main"], results["warm_start"])
        (out_dir / "warm_start.json").write_text(json.dumps(cmp, indent=1, sort_keys=True) + "\n")
    try:
        paths["plots"] = _plot(results, out_dir)
    except Exception as exc:  # plotting is best-effort
        log.warning("plotting failed: %s", exc)
    manifest = {
        "seed": proto.seed,
        "config_hash": config.digest(),
        "arms": list(results),
        "tasks": len(proto.corpus),
        "epochs": config.experiment.epochs,
        "audit_judges": judge_ids,
        "files": sorted(str(p.relative_to(out_dir)) for p in out_dir.glob("*.*")),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True, default=str) + "\n")
    return paths
