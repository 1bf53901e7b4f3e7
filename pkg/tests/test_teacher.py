import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from lgts.graph import build_dag
from lgts.student import TaskStats
from lgts.teacher import (NEG_INF, EmptyActiveSet, InactiveTask, InsufficientHistory,
                          NotConverged, TeacherConfig, TeacherState, check_convergence,
                          on_converged, run_lgts, sample_task, sampling_distribution,
                          update_teacher)

from conftest import E, Q0, Q1, Q2, Q3, Q4, S

GOAL = S("At(Green_Goal)")
START = S("At(OutsideRoom)")


def _state(edges, eps=0.1):
    st_ = TeacherState(epsilon=eps, policy_factory=lambda e: object())
    st_.activate(edges)
    return st_


# -- teacher value update ---------------------------------------------------

def test_update_substitution():
    s = _state([E(Q0, Q1)])
    assert update_teacher(s, E(Q0, Q1), 0.8) == pytest.approx(0.08, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.37, 1.0])
def test_update_fixed_point(alpha):
    s = _state([E(Q0, Q1)])
    s.alpha = alpha
    s.qvals[E(Q0, Q1)] = 0.5
    assert update_teacher(s, E(Q0, Q1), 0.5) == pytest.approx(0.5, abs=1e-12)


def test_update_closed_form():
    s = _state([E(Q0, Q1)])
    for k in range(1, 60):
        q = update_teacher(s, E(Q0, Q1), 1.0)
        assert q == pytest.approx(1 - 0.9 ** k, abs=1e-12)


def test_update_inactive():
    s = _state([E(Q0, Q1)])
    with pytest.raises(InactiveTask):
        update_teacher(s, E(Q0, Q2), 1.0)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1))
def test_update_stays_in_return_range(gs, alpha):
    s = _state([E(Q0, Q1)])
    s.alpha = alpha
    for g in gs:
        q = update_teacher(s, E(Q0, Q1), g)
        assert -1e-12 <= q <= 1 + 1e-12


# -- convergence ------------------------------------------------------------

def _stats(rate, *gs):
    s = TaskStats()
    s.g_history = list(gs)
    s.success_rate = rate
    return s


@pytest.mark.parametrize("rate,gs,expected", [
    (0.95, (0.800, 0.805), True),
    (0.95, (0.80, 0.85), False),
    (0.85, (0.8, 0.8), False),
    (0.90, (0.8, 0.8), True),
    (None, (0.8, 0.8), False),
])
def test_convergence(rate, gs, expected):
    assert check_convergence(_stats(rate, *gs), 0.9, 0.01) is expected


def test_convergence_needs_history():
    with pytest.raises(InsufficientHistory):
        check_convergence(_stats(1.0, 0.9), 0.9, 0.01)


# -- sampling ---------------------------------------------------------------

def test_greedy_sampling_takes_argmax():
    s = _state([E(Q0, Q1), E(Q0, Q2)], eps=0.0)
    s.qvals[E(Q0, Q1)], s.qvals[E(Q0, Q2)] = 0.5, 0.1
    rng = random.Random(0)
    assert {sample_task(s, rng) for _ in range(100)} == {E(Q0, Q1)}


def test_fresh_run_is_near_uniform():
    s = _state([E(Q0, Q1), E(Q0, Q2), E(Q0, Q3)])
    rng = random.Random(0)
    c = Counter(sample_task(s, rng) for _ in range(9000))
    assert all(abs(v / 9000 - 1 / 3) < 0.03 for v in c.values()) and len(c) == 3
    assert all(p == pytest.approx(1 / 3) for p in sampling_distribution(s).values())


def test_retired_tasks_never_sampled(four_path_dag):
    s = _state([E(Q0, Q1), E(Q0, Q2), E(Q0, Q3)], eps=0.5)
    on_converged(s, four_path_dag, E(Q0, Q3))
    rng = random.Random(1)
    c = Counter(sample_task(s, rng) for _ in range(10_000))
    assert c[E(Q0, Q3)] == 0
    assert E(Q0, Q3) not in sampling_distribution(s)


def test_sampling_distribution_matches_frequencies():
    s = _state([E(Q0, Q1), E(Q0, Q2), E(Q0, Q3)], eps=0.3)
    s.qvals[E(Q0, Q2)] = 0.4
    dist = sampling_distribution(s)
    assert dist[E(Q0, Q2)] == pytest.approx(0.1 + 0.7)
    assert sum(dist.values()) == pytest.approx(1.0)
    rng = random.Random(2)
    c = Counter(sample_task(s, rng) for _ in range(20_000))
    for e, p in dist.items():
        assert abs(c[e] / 20_000 - p) < 0.015


def test_empty_active_set():
    s = _state([])
    with pytest.raises(EmptyActiveSet):
        sample_task(s, random.Random(0))
    with pytest.raises(EmptyActiveSet):
        sampling_distribution(s)


# -- frontier updates -------------------------------------------------------

def _four_path_state():
    return _state([E(Q0, Q1), E(Q0, Q2), E(Q0, Q3)])


def test_converge_first_key(four_path_dag):
    s = _four_path_state()
    fresh, dropped = on_converged(s, four_path_dag, E(Q0, Q1))
    assert fresh == {E(Q1, Q3)} and dropped == set()
    assert set(s.active) == {E(Q0, Q2), E(Q0, Q3), E(Q1, Q3)}
    assert s.qvals[E(Q1, Q3)] == 0.0 and s.qvals[E(Q0, Q1)] == NEG_INF
    s.check_invariants()


def test_converge_door_via_second_key(four_path_dag):
    s = _four_path_state()
    on_converged(s, four_path_dag, E(Q0, Q2))
    assert set(s.active) == {E(Q0, Q1), E(Q0, Q3), E(Q2, Q3), E(Q2, Q4)}
    fresh, dropped = on_converged(s, four_path_dag, E(Q2, Q3))
    assert fresh == {E(Q3, Q4)}
    # q1->q3 was never active but is still retired
    assert dropped == {E(Q0, Q1), E(Q0, Q3), E(Q1, Q3)} == set(s.discarded)
    assert set(s.active) == {E(Q2, Q4), E(Q3, Q4)}
    assert [l.task for l in s.chains[Q3]] == [None, None]  # no task factory here
    s.check_invariants()
    fresh, _ = on_converged(s, four_path_dag, E(Q3, Q4))
    assert fresh == set()
    s.check_invariants()


def test_converge_requires_flag_and_membership(four_path_dag):
    s = _four_path_state()
    with pytest.raises(NotConverged):
        on_converged(s, four_path_dag, E(Q0, Q1), converged=False)
    with pytest.raises(InactiveTask):
        on_converged(s, four_path_dag, E(Q3, Q4))


@given(st.permutations(range(7)), st.integers(0, 10_000))
def test_invariants_under_random_convergence_orders(order, seed):
    dag = build_dag([[Q0, Q1, Q3, Q4], [Q0, Q2, Q3, Q4], [Q0, Q3, Q4], [Q0, Q2, Q4]])
    s = _four_path_state()
    rng = random.Random(seed)
    while s.active:
        e = s.active[rng.randrange(len(s.active))]
        on_converged(s, dag, e)
        s.check_invariants()
        if e.dst == Q4:
            break
    # learned edges chained per node form a start-to-goal path
    if Q4 in s.chains:
        assert len(s.chains[Q4]) >= 1


# -- full runs --------------------------------------------------------------

def _cfg(**kw):
    base = dict(budget=200_000, x=500, seed=0, final_eval_episodes=20)
    base.update(kw)
    return TeacherConfig(**base)


def test_unreachable_edge_exhausts_budget(walled_env):
    dag = build_dag([[START, GOAL]])
    r = run_lgts(dag, walled_env, _cfg(budget=5000))
    assert r.status == "budget_exhausted" and not r.success
    assert r.total_interactions == 5000 == r.ledger.total
    assert r.policy_list == [] and r.final_success_rate == 0.0
    assert r.metrics.rows[-1]["event"] == "end:budget_exhausted"


def test_corridor_run_succeeds(corridor_env):
    dag = build_dag([[START, GOAL]])
    r = run_lgts(dag, corridor_env, _cfg())
    assert r.success and r.final_success_rate == 1.0
    assert r.chain_edges == [E(START, GOAL)]
    assert r.ledger.balanced()


def test_runs_are_deterministic_per_seed(corridor_env):
    dag = build_dag([[START, GOAL]])
    a = run_lgts(dag, corridor_env, _cfg(seed=1), "r").metrics.to_csv()
    b = run_lgts(dag, corridor_env, _cfg(seed=1), "r").metrics.to_csv()
    c = run_lgts(dag, corridor_env, _cfg(seed=2), "r").metrics.to_csv()
    assert a == b and a != c


@pytest.fixture(scope="module")
def doorkey_run():
    from lgts.envs import make_env
    dag = build_dag([[Q0, Q1, Q3, Q4], [Q0, Q2, Q3, Q4], [Q0, Q3, Q4], [Q0, Q2, Q4]])
    return dag, run_lgts(dag, make_env("doorkey_8x8"), TeacherConfig(seed=0), "dk")


def test_doorkey_learns_a_dag_path(doorkey_run):
    dag, r = doorkey_run
    assert r.success
    chain = r.chain_edges
    assert chain[0].src == dag.start and chain[-1].dst == dag.goal
    assert all(a.dst == b.src for a, b in zip(chain, chain[1:]))
    assert all(dag.has_edge(e) for e in chain)
    assert r.final_success_rate >= 0.9


def test_doorkey_ledger_balances(doorkey_run):
    _, r = doorkey_run
    led = r.ledger
    assert led.balanced()
    assert r.total_interactions == sum(led.by_kind.values())
    assert sum(led.edge_total(e) for e in led.by_edge) == led.total
    assert r.metrics.rows[-1]["cum_interactions"] == led.total


def test_doorkey_discarded_tasks_never_retrained(doorkey_run):
    _, r = doorkey_run
    gone = {}
    for row in r.metrics.rows:
        if row["event"] == "discarded":
            gone.setdefault(row["edge"], row["teacher_step"])
        elif row["event"] == "train" and row["edge"] in gone:
            pytest.fail(f"{row['edge']} trained after being discarded")
    t = r.teacher
    assert not set(t.discarded) & set(t.active)
    t.check_invariants()
