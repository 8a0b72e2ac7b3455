"""Exit criteria for the routing substrate and its planted testbed.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts the criterion at its stated tolerance.
"""
import copy
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from coordpolicy import graph as pg
from coordpolicy.cli import main as cli_main
from coordpolicy.config import Config
from coordpolicy.experiments import (
    per_class_report,
    reaudit,
    retry_pipeline_success,
    run_protocol,
    warm_start_comparison,
)
from coordpolicy.reward import hybrid_reward
from coordpolicy.signature import Regime, Signature
from coordpolicy.sim import COORDINATION_HEAVY, PROCEDURAL, SimEnv

SEEDS = (0, 1, 2, 3, 4)
TESTS = Path(__file__).parent


@pytest.fixture(scope="module")
def protocols():
    """The default four-arm protocol at five seeds, with the wall time of each run."""
    cfg = Config()
    out = {}
    for seed in SEEDS:
        t0 = time.perf_counter()
        proto = run_protocol(cfg, seed)
        out[seed] = (proto, time.perf_counter() - t0)
    return cfg, out


# --- formula exactness ---------------------------------------------------------------

def test_c01_annealing_exact(acceptance_log):
    t0 = time.perf_counter()
    got = [pg.anneal_exploration(n) for n in (0, 50, 100)]
    elapsed = time.perf_counter() - t0
    ok = all(abs(g - e) <= 1e-12 for g, e in zip(got, (1.4, 0.7, 0.5))) and elapsed < 1.0
    acceptance_log(1, ok, f"anneal(0, 50, 100) = {got}")
    assert ok


def _closed_form(mean, visits, n_s, failures, attempts, lam=0.5):
    c = 1.4 * 0.5 ** (n_s / 50.0)
    if c < 0.5:
        c = 0.5
    f = failures / attempts if attempts else 0.0
    return mean + c * math.sqrt(math.log(n_s + 1.0) / visits) - lam * f


def test_c02_ucb_closed_form(acceptance_log):
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for _ in range(50):
        visits = float(rng.uniform(0.5, 200))
        n_s = visits + float(rng.uniform(0, 400))
        attempts = int(rng.integers(0, 60))
        failures = int(rng.integers(0, attempts + 1))
        edge = pg.EdgeStats(visits=visits, mean_reward=float(rng.uniform(-1, 1)),
                            failure_count=failures, attempt_count=attempts)
        worst = max(worst, abs(pg.ucb_score(edge, n_s) - _closed_form(edge.mean_reward, visits, n_s,
                                                                       failures, attempts)))
    unvisited = pg.ucb_score(pg.EdgeStats(), 10.0) == math.inf
    clean = pg.EdgeStats(visits=4, mean_reward=0.3, failure_count=0, attempt_count=4)
    broken = pg.EdgeStats(visits=4, mean_reward=0.3, failure_count=4, attempt_count=4)
    gap = pg.ucb_score(clean, 9.0) - pg.ucb_score(broken, 9.0)
    ok = worst <= 1e-9 and unvisited and abs(gap - 0.5) <= 1e-12
    acceptance_log(2, ok, f"max |err| {worst:.2e} on 50 tuples, unvisited inf {unvisited}, f gap {gap!r}")
    assert ok


def test_c03_hybrid_reward_exact(acceptance_log):
    a, b = hybrid_reward(0.8, 4000, 1), hybrid_reward(1.0, 8000, 0)
    ok = abs(a - 0.5) <= 1e-12 and abs(b - 0.7) <= 1e-12
    acceptance_log(3, ok, f"R(0.8, 4000, 1) = {a!r}, R(1.0, 8000, 0) = {b!r}")
    assert ok


def test_c04_two_action_bandit_converges(acceptance_log):
    sig = Signature(Regime.AMBIGUOUS, "1000000", (1, 3, 2, 0))
    good = pg.ActionId.invoke("solver", "solver_cot", "sonnet")
    bad = pg.ActionId.invoke("solver", "solver_concise", "fast")
    means = {good: 0.65, bad: 0.35}
    t0 = time.perf_counter()
    freqs = []
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        g = pg.PolicyGraph()
        picks = []
        for _ in range(500):
            a = pg.select_action(g, sig, [good, bad], rng)
            pg.backup(g, [(sig, a)], float(rng.random() < means[a]))
            picks.append(a == good)
        freqs.append(float(np.mean(picks[400:])))
    elapsed = time.perf_counter() - t0
    ok = sum(f >= 0.9 for f in freqs) >= 4 and elapsed < 10.0
    acceptance_log(4, ok, f"optimal frequency over steps 401-500 {freqs}, {elapsed:.2f} s")
    assert ok


# --- planted-environment patterns ---------------------------------------------------------

@pytest.mark.slow
def test_c05_skip_learning(protocols, acceptance_log):
    cfg, runs = protocols
    proto, elapsed = runs[0]
    env = SimEnv(cfg.env)
    main = proto.results["main"]
    neutral, critical = [], []
    for tag in PROCEDURAL:
        neutral += list(main.skip_rates([tag], env.planted_optimum(tag).skip_neutral).values())
    for tag in COORDINATION_HEAVY:
        critical += list(main.skip_rates([tag], env.planted_optimum(tag).critical).values())
    n_rate, c_rate = float(np.mean(neutral)), float(np.mean(critical))
    ok = n_rate >= 0.8 and c_rate <= 0.2 and elapsed < 300
    acceptance_log(5, ok, f"plateau skip rate neutral {n_rate:.3f} (>= 0.8), critical {c_rate:.3f} (<= 0.2), "
                          f"protocol {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_c06_substrate_beats_baseline(protocols, acceptance_log):
    _, runs = protocols
    wins = []
    details = []
    for seed in SEEDS:
        proto, _ = runs[seed]
        base, main = proto.results["baseline"], proto.results["main"]
        gain = main.plateau("mean_audited_reward") - base.plateau("mean_audited_reward")
        deltas = {r["class"]: r["delta"] for r in per_class_report(base, main)}
        heavy = [deltas[t] for t in COORDINATION_HEAVY]
        wins.append(gain >= 0.03 and all(d is not None and d > 0 for d in heavy))
        details.append(f"s{seed}: {gain:+.3f} [" + " ".join("n/a" if d is None else f"{d:+.3f}" for d in heavy)
                       + "]")
    ok = sum(wins) >= 4
    acceptance_log(6, ok, f"{sum(wins)}/5 seeds; reward gain [C3 C7 C8 deltas] " + "; ".join(details))
    assert ok


@pytest.mark.slow
def test_c07_no_skip_costs_more_tokens(protocols, acceptance_log):
    _, runs = protocols
    proto, _ = runs[0]
    ns, main = proto.results["no_skip"].plateau("mean_tokens"), proto.results["main"].plateau("mean_tokens")
    ok = ns >= 1.2 * main
    acceptance_log(7, ok, f"plateau tokens no_skip {ns:.0f} vs main {main:.0f} (ratio {ns / main:.3f})")
    assert ok


@pytest.mark.slow
def test_c08_warm_start_saves_early_tokens(protocols, acceptance_log):
    _, runs = protocols
    wins, details = [], []
    for seed in SEEDS:
        proto, _ = runs[seed]
        cmp = warm_start_comparison(proto.results["main"], proto.results["warm_start"])
        e2 = cmp["epochs"][1]
        ratio = e2["cum_warm_tokens"] / e2["cum_cold_tokens"]
        gap = cmp["plateau"]["delta_audited"]
        wins.append(ratio <= 0.95 and abs(gap) <= 0.02)
        details.append(f"s{seed}: tokens {ratio:.3f}, quality {gap:+.3f}")
    ok = sum(wins) >= 4
    acceptance_log(8, ok, f"{sum(wins)}/5 seeds; " + "; ".join(details))
    assert ok


@pytest.mark.slow
def test_c09_biased_single_judge_inflates_warm_gain(protocols, acceptance_log):
    cfg, runs = protocols
    biased = copy.deepcopy(cfg)
    live = biased.experiment.live_judge
    biased.env.judges[live].arm_bias = {"warm_start": 0.05}
    judges = list(biased.reward.judges[:3])
    excess = []
    for seed in SEEDS:
        proto = copy.deepcopy(runs[seed][0])
        reaudit(proto, biased, judges)
        s = warm_start_comparison(proto.results["main"], proto.results["warm_start"])["plateau"]
        excess.append(s["delta_single"] - s["delta_audited"])
    mean = float(np.mean(excess))
    ok = mean >= 0.02
    acceptance_log(9, ok, f"single-judge minus ensemble warm delta, mean {mean:.4f} over 5 seeds "
                          f"{[round(x, 4) for x in excess]}")
    assert ok


# --- plumbing ------------------------------------------------------------------------------

def test_c10_retry_formula(acceptance_log):
    v = retry_pipeline_success(0.5, 2, 2)
    lo, hi = retry_pipeline_success(0.0, 2, 2), retry_pipeline_success(1.0, 2, 2)
    ok = v == 0.5625 and lo == 0.0 and hi == 1.0
    acceptance_log(10, ok, f"(0.5, 2, 2) -> {v!r}; p=0 -> {lo}, p=1 -> {hi}")
    assert ok


def _random_graph(n_nodes, seed):
    rng = np.random.default_rng(seed)
    actions = [pg.ActionId.invoke("solver", s, m) for s in ("solver_cot", "solver_concise", "solver_debate")
               for m in ("fast", "haiku", "sonnet")] + [pg.ActionId.skip("verifier"), pg.ActionId.terminate()]
    g = pg.PolicyGraph()
    regimes = list(Regime)
    while len(g) < n_nodes:
        sig = Signature(regimes[int(rng.integers(len(regimes)))], format(int(rng.integers(128)), "07b"),
                        tuple(int(v) for v in rng.integers(0, 5, size=4)))
        chosen = [actions[i] for i in rng.choice(len(actions), size=int(rng.integers(1, 6)), replace=False)]
        g.touch(sig, chosen)
        for a in chosen:
            for _ in range(int(rng.integers(0, 4))):
                pg.backup(g, [(sig, a)], float(rng.normal(0.3, 0.4)), float(rng.uniform(0, 1)))
                pg.record_tokens(g, sig, a, int(rng.integers(0, 5000)))
            attempts = int(rng.integers(0, 5))
            pg.record_attempt(g, sig, a, attempts)
            for _ in range(int(rng.integers(0, attempts + 1))):
                pg.record_failure(g, sig, a, "validation")
    return g


def test_c11_persistence_round_trip(tmp_path, acceptance_log):
    g = _random_graph(500, 11)
    first = pg.save_graph(g, tmp_path / "a.json")
    back = pg.load_graph(first)
    second = pg.save_graph(back, tmp_path / "b.json")
    stats_equal = all(back.edge(sig, a) == e and back.nodes[sig].visits == g.nodes[sig].visits
                      for sig, a, e in g.iter_edges())
    ucb_equal = all(pg.ucb_score(back.edge(sig, a), back.nodes[sig].visits) == pg.ucb_score(e, g.nodes[sig].visits)
                    for sig, a, e in g.iter_edges())
    identical = first.read_bytes() == second.read_bytes()
    ok = len(back) == 500 and stats_equal and ucb_equal and identical
    acceptance_log(11, ok, f"{len(back)} nodes, {sum(1 for _ in g.iter_edges())} edges; stats exact {stats_equal}, "
                           f"ucb exact {ucb_equal}, bytes identical {identical}")
    assert ok


def test_c12_experiment_run_is_deterministic(tmp_path, acceptance_log, capsys):
    codes = []
    for d in ("first", "second"):
        codes.append(cli_main(["experiment", "run", "--seed", "7", "--out", str(tmp_path / d)]))
    capsys.readouterr()
    a = (tmp_path / "first" / "learning_curves.csv").read_bytes()
    b = (tmp_path / "second" / "learning_curves.csv").read_bytes()
    ok = codes == [0, 0] and a == b
    acceptance_log(12, ok, f"exit codes {codes}, learning_curves.csv identical {a == b} ({len(a)} bytes)")
    assert ok


INVARIANT_TESTS = [
    "test_signature.py::test_fold_is_pure_and_hashable",
    "test_signature.py::test_handoff_quality_never_changes_signature",
    "test_signature.py::test_fold_is_stable_across_processes",
    "test_signature.py::test_beliefs_stay_clamped",
    "test_signature.py::test_bucketing_monotone_and_in_range",
    "test_router.py::test_skips_never_empty_the_legal_set",
    "test_router.py::test_runs_are_total_sound_and_conserve_the_plan",
    "test_reward.py::test_confidence_monotone",
    "test_reward.py::test_composed_score_in_unit_interval",
    "test_graph.py::test_node_visits_equal_sum_of_edge_visits",
    "test_sim.py::test_latent_quality_stays_clamped",
    "test_sim.py::test_policy_layers_never_see_the_oracle",
]


def test_c13_invariant_suite(acceptance_log):
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *(str(TESTS / t) for t in INVARIANT_TESTS)],
        capture_output=True, text=True, cwd=TESTS.parent,
    )
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 120
    acceptance_log(13, ok, f"{len(INVARIANT_TESTS)} invariant groups: {tail} ({elapsed:.1f} s)")
    assert ok, proc.stdout[-3000:]
