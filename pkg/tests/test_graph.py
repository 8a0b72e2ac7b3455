import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordpolicy.graph import (
    ActionId,
    EdgeStats,
    GraphError,
    GraphFormatError,
    PolicyGraph,
    anneal_exploration,
    backup,
    dumps_graph,
    failure_rate,
    inspect_signature,
    load_graph,
    loads_graph,
    record_attempt,
    record_failure,
    record_tokens,
    save_graph,
    select_action,
    top_signatures,
    ucb_score,
    warm_start,
)
from coordpolicy.signature import Regime, Signature

SIG = Signature(Regime.STRAIGHTFORWARD, "0000000", (2, 2, 2, 2))
A = ActionId.invoke("solver", "solver_cot", "haiku")
B = ActionId.invoke("solver", "solver_concise", "fast")
SKIP = ActionId.skip("verifier")


def _graph_with(*actions, sig=SIG):
    g = PolicyGraph()
    g.touch(sig, actions)
    return g


def test_action_id_shapes():
    assert A.canonical() == "invoke:solver:solver_cot@haiku"
    assert SKIP.canonical() == "skip:verifier"
    assert ActionId.terminate().canonical() == "terminate"
    for a in (A, SKIP, ActionId.terminate()):
        assert ActionId.parse(a.canonical()) == a
    with pytest.raises(ValueError):
        ActionId("invoke", "solver", "solver_cot", "")
    with pytest.raises(ValueError):
        ActionId("skip", "verifier", "x", "")
    with pytest.raises(ValueError):
        ActionId("terminate", "verifier")
    with pytest.raises(ValueError):
        ActionId("jump")
    assert len({A, ActionId.invoke("solver", "solver_cot", "haiku")}) == 1


# --- exploration schedule ---------------------------------------------------------

@pytest.mark.parametrize("n, expected", [(0, 1.4), (50, 0.7), (100, 0.5), (75, 0.5), (1000, 0.5)])
def test_anneal_values(n, expected):
    assert anneal_exploration(n) == pytest.approx(expected, abs=1e-12)


def test_anneal_rejects_negative():
    with pytest.raises(ValueError):
        anneal_exploration(-1)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_anneal_bounded_and_nonincreasing(n1, n2):
    lo, hi = sorted((n1, n2))
    assert 0.5 <= anneal_exploration(hi) <= anneal_exploration(lo) <= 1.4


@given(st.floats(0, 40))
def test_coefficient_halves_every_fifty_visits(n):
    # above the floor the coefficient halves per 50 signature visits
    assert anneal_exploration(n + 50) == pytest.approx(max(0.5, anneal_exploration(n) / 2), rel=1e-12)


# --- scoring ------------------------------------------------------------------------

@pytest.mark.parametrize("failures, attempts, expected", [(0, 0, 0.0), (1, 4, 0.25), (3, 3, 1.0)])
def test_failure_rate(failures, attempts, expected):
    assert failure_rate(EdgeStats(failure_count=failures, attempt_count=attempts)) == expected


def test_ucb_worked_example():
    edge = EdgeStats(visits=3, mean_reward=0.6)
    coeff = 1.4 * 2 ** (-10 / 50)
    expected = 0.6 + coeff * math.sqrt(math.log(11) / 3)
    assert ucb_score(edge, 10, 0.5) == pytest.approx(expected, abs=1e-12)
    assert ucb_score(edge, 10, 0.5) == pytest.approx(1.6896236350, abs=1e-9)


def test_unvisited_scores_infinite():
    assert ucb_score(EdgeStats(), 10) == math.inf
    assert ucb_score(EdgeStats(failure_count=1, attempt_count=1), 0) == math.inf


def test_failure_penalty_is_lambda():
    good = EdgeStats(visits=4, mean_reward=0.3, failure_count=0, attempt_count=4)
    bad = EdgeStats(visits=4, mean_reward=0.3, failure_count=4, attempt_count=4)
    assert ucb_score(good, 20, 0.5) - ucb_score(bad, 20, 0.5) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        ucb_score(good, 20, -0.1)


@given(
    st.floats(0.01, 100), st.floats(-2, 2), st.floats(0, 500),
    st.integers(0, 20), st.integers(0, 20), st.floats(0, 2),
)
def test_penalty_linear_in_failure_rate(visits, mean, n_s, fails, extra, lam):
    attempts = fails + extra
    edge = EdgeStats(visits=visits, mean_reward=mean, failure_count=fails, attempt_count=attempts)
    clean = EdgeStats(visits=visits, mean_reward=mean)
    f = fails / attempts if attempts else 0.0
    assert ucb_score(edge, n_s, lam) == pytest.approx(ucb_score(clean, n_s, lam) - lam * f, abs=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 50))
def test_tokens_never_enter_score(tokens, runs):
    g = _graph_with(A)
    backup(g, [(SIG, A)], 0.4)
    before = ucb_score(g.edge(SIG, A), g.nodes[SIG].visits)
    for _ in range(runs):
        record_tokens(g, SIG, A, tokens)
    assert ucb_score(g.edge(SIG, A), g.nodes[SIG].visits) == before


# --- selection -------------------------------------------------------------------------

def test_select_creates_node_and_rejects_empty():
    g = PolicyGraph()
    rng = np.random.default_rng(0)
    choice = select_action(g, SIG, [A, B], rng)
    assert choice in (A, B)
    assert set(g.nodes[SIG].edges) == {A, B}
    with pytest.raises(GraphError):
        select_action(g, SIG, [], rng)


def test_unvisited_ties_are_uniform():
    rng = np.random.default_rng(1)
    actions = [A, B, SKIP]
    counts = {a: 0 for a in actions}
    for _ in range(3000):
        counts[select_action(PolicyGraph(), SIG, actions, rng)] += 1
    for c in counts.values():
        assert abs(c / 3000 - 1 / 3) < 0.04


def test_select_prefers_higher_mean_at_equal_visits():
    g = _graph_with(A, B)
    g.nodes[SIG].visits = 100
    g.nodes[SIG].edges[A] = EdgeStats(visits=50, mean_reward=0.9)
    g.nodes[SIG].edges[B] = EdgeStats(visits=50, mean_reward=0.1)
    assert select_action(g, SIG, [A, B], np.random.default_rng(0)) == A


def test_select_avoids_failing_twin():
    g = _graph_with(A, B)
    g.nodes[SIG].visits = 20
    g.nodes[SIG].edges[A] = EdgeStats(visits=10, mean_reward=0.5, failure_count=10, attempt_count=10)
    g.nodes[SIG].edges[B] = EdgeStats(visits=10, mean_reward=0.5, attempt_count=10)
    assert select_action(g, SIG, [A, B], np.random.default_rng(0)) == B


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=5), st.integers(0, 2**32 - 1))
def test_unvisited_action_always_selected_first(means, seed):
    g = PolicyGraph()
    visited = [ActionId.skip(f"c{i}") for i in range(len(means))]
    fresh = ActionId.invoke("solver", "solver_cot", "mini")
    g.touch(SIG, visited + [fresh])
    for a, m in zip(visited, means):
        g.nodes[SIG].edges[a] = EdgeStats(visits=1.0, mean_reward=m)
    g.nodes[SIG].visits = float(len(means))
    assert select_action(g, SIG, visited + [fresh], np.random.default_rng(seed)) == fresh


# --- backup ------------------------------------------------------------------------------

def test_backup_examples():
    g = _graph_with(A)
    backup(g, [(SIG, A)], 0.8, 1.0)
    e = g.edge(SIG, A)
    assert (e.visits, e.mean_reward, e.variance_acc) == (1.0, 0.8, 0.0)

    g = _graph_with(A)
    backup(g, [(SIG, A)], 0.6)
    backup(g, [(SIG, A)], 1.0)
    e = g.edge(SIG, A)
    assert e.visits == 2 and e.mean_reward == pytest.approx(0.8, abs=1e-12)
    assert g.nodes[SIG].visits == 2


def test_zero_confidence_is_noop():
    g = _graph_with(A)
    backup(g, [(SIG, A)], 0.4)
    before = dumps_graph(g)
    backup(g, [(SIG, A)], 123.0, 0.0)
    assert dumps_graph(g) == before


def test_backup_rejects_foreign_edges_and_bad_inputs():
    g = _graph_with(A)
    with pytest.raises(GraphError):
        backup(g, [(SIG, A), (SIG, B)], 0.5)
    # validation happens before any statistic moves
    assert g.edge(SIG, A).visits == 0
    with pytest.raises(GraphError):
        backup(g, [(SIG, A)], 0.5, 1.5)
    with pytest.raises(GraphError):
        backup(g, [(SIG, A)], math.nan)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60))
def test_backup_matches_two_pass_oracle(rewards):
    g = _graph_with(A)
    for r in rewards:
        backup(g, [(SIG, A)], r)
    e = g.edge(SIG, A)
    mean = sum(rewards) / len(rewards)
    ssd = sum((r - mean) ** 2 for r in rewards)
    assert e.visits == len(rewards)
    assert e.mean_reward == pytest.approx(mean, abs=1e-9)
    assert e.variance_acc == pytest.approx(ssd, abs=1e-9)


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0, 1)), min_size=1, max_size=40))
def test_weighted_backup_matches_weighted_mean(samples):
    g = _graph_with(A)
    for r, c in samples:
        backup(g, [(SIG, A)], r, c)
    total = sum(c for _, c in samples)
    e = g.edge(SIG, A)
    assert e.visits == pytest.approx(total, abs=1e-9)
    if total > 1e-6:
        assert e.mean_reward == pytest.approx(sum(r * c for r, c in samples) / total, abs=1e-6)
    assert e.variance_acc >= -1e-9


@given(st.lists(st.tuples(st.sampled_from([A, B, SKIP]), st.floats(-1, 1), st.floats(0, 1)), max_size=40))
def test_node_visits_equal_sum_of_edge_visits(steps):
    g = _graph_with(A, B, SKIP)
    for a, r, c in steps:
        backup(g, [(SIG, a)], r, c)
    node = g.nodes[SIG]
    assert node.visits == pytest.approx(sum(e.visits for e in node.edges.values()), abs=1e-9)


def test_failures_and_attempts():
    g = _graph_with(A)
    record_attempt(g, SIG, A, 4)
    record_failure(g, SIG, A, "validation")
    assert failure_rate(g.edge(SIG, A)) == 0.25
    record_failure(g, SIG, A, "recoverable_execution")
    assert failure_rate(g.edge(SIG, A)) == 0.5
    with pytest.raises(GraphError):
        record_failure(g, SIG, A, "cosmic_ray")
    with pytest.raises(GraphError):
        record_failure(g, SIG, B, "validation")


def test_token_statistics():
    g = _graph_with(A)
    for _ in range(3):
        record_tokens(g, SIG, A, 100)
    assert g.edge(SIG, A).mean_tokens == 100
    record_tokens(g, SIG, A, 0)
    assert (g.edge(SIG, A).token_sum, g.edge(SIG, A).token_runs) == (300, 4)
    with pytest.raises(GraphError):
        record_tokens(g, SIG, A, -1)


# --- regret sanity ---------------------------------------------------------------------------

def _two_arm_run(seed, gap=0.3, steps=500):
    rng = np.random.default_rng(seed)
    g = PolicyGraph()
    p = {A: 0.5 + gap / 2, B: 0.5 - gap / 2}
    chosen = []
    for _ in range(steps):
        a = select_action(g, SIG, [A, B], rng)
        backup(g, [(SIG, a)], float(rng.random() < p[a]))
        chosen.append(a)
    return sum(a == A for a in chosen[-100:]) / 100


def test_two_arm_bandit_converges():
    freqs = [_two_arm_run(seed) for seed in range(5)]
    assert sum(f >= 0.9 for f in freqs) >= 4, freqs


# --- warm start ------------------------------------------------------------------------------

def _trained():
    g = _graph_with(A, B)
    for r in (0.2, 0.4, 0.9, 0.7):
        backup(g, [(SIG, A)], r)
    backup(g, [(SIG, B)], 0.1)
    record_attempt(g, SIG, A, 4)
    record_failure(g, SIG, A, "validation")
    return g


def test_warm_start_discounts():
    g = _trained()
    assert dumps_graph(warm_start(g, 1.0)) == dumps_graph(g)
    half = warm_start(g, 0.5)
    assert half.edge(SIG, A).visits == 2 and half.edge(SIG, A).mean_reward == g.edge(SIG, A).mean_reward
    assert failure_rate(half.edge(SIG, A)) == failure_rate(g.edge(SIG, A))
    assert half.nodes[SIG].visits == 2.5
    zero = warm_start(g, 0.0)
    assert all(ucb_score(e, 0) == math.inf for _, _, e in zero.iter_edges())
    assert all(e.mean_reward == 0 for _, _, e in zero.iter_edges())
    with pytest.raises(GraphError):
        warm_start(g, 1.5)


def test_warm_start_copies():
    g = _trained()
    w = warm_start(g)
    backup(w, [(SIG, B)], 1.0)
    assert g.edge(SIG, B).visits == 1


# --- persistence -------------------------------------------------------------------------------

def test_round_trip_and_empty(tmp_path):
    g = _trained()
    path = save_graph(g, tmp_path / "g.json")
    back = load_graph(path)
    assert dumps_graph(back) == path.read_text()
    for sig, a, e in g.iter_edges():
        assert back.edge(sig, a) == e
    assert len(loads_graph(dumps_graph(PolicyGraph()))) == 0


@pytest.mark.parametrize(
    "text",
    [
        "not json",
        "[]",
        '{"format_version": 99, "nodes": []}',
        '{"format_version": 1}',
        '{"format_version": 1, "nodes": [{"signature": {"regime": "x", "mask": "0000000", "buckets": [0,0,0,0]},'
        ' "visits": 0, "edges": []}]}',
        '{"format_version": 1, "nodes": [{"signature": {"regime": "ambiguous", "mask": "000", "buckets": [0,0,0,0]},'
        ' "visits": 0, "edges": []}]}',
    ],
)
def test_malformed_documents_rejected(text):
    with pytest.raises(GraphFormatError):
        loads_graph(text)


def test_inconsistent_edge_rejected():
    doc = dumps_graph(_trained()).replace('"failure_count": 1', '"failure_count": 9')
    with pytest.raises(GraphFormatError):
        loads_graph(doc)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.sampled_from(list(Regime)), st.integers(0, 127), st.integers(0, 4),
                          st.sampled_from([A, B, SKIP]), st.floats(-3, 3), st.floats(0, 1)), max_size=30))
def test_save_load_save_is_byte_identical(entries):
    g = PolicyGraph()
    for regime, bits, b, action, r, c in entries:
        sig = Signature(regime, format(bits, "07b"), (b, 4 - b, b, 0))
        g.touch(sig, [action])
        backup(g, [(sig, action)], r, c)
        record_tokens(g, sig, action, int(abs(r) * 1000))
    text = dumps_graph(g)
    back = loads_graph(text)
    assert dumps_graph(back) == text
    for sig, a, e in g.iter_edges():
        assert ucb_score(back.edge(sig, a), back.nodes[sig].visits) == ucb_score(e, g.nodes[sig].visits)


def test_inspection_helpers():
    g = _trained()
    rows = inspect_signature(g, SIG)
    assert [r["action"] for r in rows] == [A.canonical(), B.canonical()]
    assert rows[0]["failure_rate"] == 0.25
    top = top_signatures(g, 5)
    assert top[0][0] == SIG and top[0][2] == A
    with pytest.raises(GraphError):
        inspect_signature(g, Signature(Regime.AMBIGUOUS, "0000000", (0, 0, 0, 0)))
