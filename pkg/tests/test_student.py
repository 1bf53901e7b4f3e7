import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from lgts.graph import build_dag
from lgts.ledger import BudgetExhausted, InteractionLedger
from lgts.student import (TabularQPolicy, TaskStats, evaluate, select_action, train_for,
                          update)
from lgts.subtask import make_task

from conftest import E, S

GOAL = S("At(Green_Goal)")
START = S("At(OutsideRoom)")


def test_greedy_picks_argmax_and_is_stable():
    p = TabularQPolicy(seed=3)
    p.q["s"] = [0.0, 0.5, 0.2, 0.5, -1.0, 0.1]
    a = p.greedy_action("s")
    assert a in (1, 3)
    assert all(p.greedy_action("s") == a for _ in range(20))
    p.q["s"][3] = 0.6
    assert select_action(p, "s", "greedy") == 3
    with pytest.raises(ValueError):
        select_action(p, "s", "sideways")


def test_uniform_at_full_exploration():
    # chi-square against uniform over 6 actions, 1e4 draws, p = 0.001 critical value 20.5
    p = TabularQPolicy(eps_start=1.0, eps_end=1.0, seed=1)
    p.q["s"] = [1.0, 0, 0, 0, 0, 0]
    c = Counter(p.act("s") for _ in range(10_000))
    exp = 10_000 / 6
    chi2 = sum((c[a] - exp) ** 2 / exp for a in range(6))
    assert chi2 < 20.5


def test_unseen_state_random_walks_while_exploring():
    p = TabularQPolicy(eps_start=0.0, eps_end=0.0, seed=1)
    assert len({p.act(("new", i)) for i in range(200)}) == 6


def test_epsilon_schedule():
    p = TabularQPolicy(eps_decay_steps=100)
    assert p.epsilon == 1.0
    for _ in range(50):
        p.update("a", 0, 0.0, "b", False)
    assert p.epsilon == pytest.approx(0.525)
    for _ in range(60):
        p.update("a", 0, 0.0, "b", False)
    assert p.epsilon == 0.05


@pytest.mark.parametrize("terminal,expected", [(True, 0.1), (False, 0.1 + 0.1 * 0.95 * 2.0)])
def test_update_rule(terminal, expected):
    p = TabularQPolicy()
    p.q["t"] = [2.0, 0, 0, 0, 0, 0]
    update(p, "s", 4, 1.0, "t", terminal)
    assert p.q["s"][4] == pytest.approx(expected, abs=1e-12)
    assert p.q["s"][:4] == [0.0] * 4


def test_update_from_nonzero():
    p = TabularQPolicy(alpha=0.5, gamma=0.9)
    p.q["s"] = [1.0] * 6
    p.q["t"] = [0.0, 3.0, 0, 0, 0, 0]
    p.update("s", 0, 0.5, "t", False)
    assert p.q["s"][0] == pytest.approx(1.0 + 0.5 * (0.5 + 0.9 * 3.0 - 1.0))


def test_two_state_chain_closed_form():
    # s0 -a0-> s1 (r=0), s1 -a0-> end (r=1): Q*(s1)=1, Q*(s0)=gamma
    p = TabularQPolicy(alpha=0.5, gamma=0.9, n_actions=1)
    for _ in range(200):
        p.update("s0", 0, 0.0, "s1", False)
        p.update("s1", 0, 1.0, None, True)
    assert p.q["s1"][0] == pytest.approx(1.0, abs=1e-9)
    assert p.q["s0"][0] == pytest.approx(0.9, abs=1e-9)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5), st.floats(0, 1),
                          st.integers(0, 4), st.booleans()), max_size=300))
@settings(max_examples=60)
def test_q_bounded_by_max_return(transitions):
    p = TabularQPolicy(alpha=0.3, gamma=0.95)
    for s, a, r, s2, term in transitions:
        p.update(s, a, r, s2, term)
    bound = 1.0 / (1 - 0.95)
    assert all(0.0 <= v <= bound + 1e-9 for row in p.q.values() for v in row)


def test_save_load_round_trip(tmp_path):
    p = TabularQPolicy(seed=7)
    rng = random.Random(0)
    for _ in range(500):
        p.update((rng.randrange(9), "k"), rng.randrange(6), rng.random(), (rng.randrange(9), "k"),
                 rng.random() < 0.2)
    p.save(tmp_path / "q.txt")
    back = TabularQPolicy.load(tmp_path / "q.txt")
    assert back.q == p.q and back.steps == p.steps and back.seed == 7
    assert all(back.greedy_action(k) == p.greedy_action(k) for k in p.q)


def test_gamma_out_of_range():
    with pytest.raises(ValueError):
        TabularQPolicy(gamma=1.5)


def test_task_stats():
    st_ = TaskStats(window=3)
    assert st_.g_last is None and st_.train_success_rate == 0.0
    st_.g_history += [0.1, 0.4]
    for s in (True, False, True, True):
        st_.successes.append(s)
    assert (st_.g_prev, st_.g_last) == (0.1, 0.4)
    assert st_.train_success_rate == pytest.approx(2 / 3)


def _corridor_task(env, allocated=100):
    dag = build_dag([[START, GOAL]])
    return make_task(dag, E(START, GOAL), env, allocated=allocated)


def test_train_for_charges_exactly_x(corridor_env):
    task = _corridor_task(corridor_env)
    ledger = InteractionLedger(10_000)
    stats = TaskStats()
    res = train_for(TabularQPolicy(seed=0), task, [], 1000, ledger, stats)
    assert res.steps == 1000 == ledger.by_edge[task.name]["train"]
    assert ledger.total == 1000 + res.reset_steps and res.reset_steps == 0
    assert stats.interactions == 1000
    assert res.g > 0 and res.successes > 0


def test_unreachable_goal_gives_zero_return(walled_env):
    task = _corridor_task(walled_env)
    res = train_for(TabularQPolicy(seed=0), task, [], 1000, InteractionLedger(10_000))
    assert res.g == 0.0 and res.successes == 0 and res.episodes == 10


def test_budget_exhaustion_midburst(corridor_env):
    task = _corridor_task(corridor_env)
    ledger = InteractionLedger(300)
    with pytest.raises(BudgetExhausted):
        train_for(TabularQPolicy(seed=0), task, [], 1000, ledger)
    assert ledger.total == 300


def test_corridor_learns_and_evaluates(corridor_env):
    task = _corridor_task(corridor_env)
    pol = TabularQPolicy(seed=0, eps_decay_steps=5000)
    ledger = InteractionLedger(100_000)
    for _ in range(20):
        train_for(pol, task, [], 1000, ledger)
    before = ledger.total
    rate = evaluate(pol, task, [], 20, ledger)
    assert rate == 1.0
    # greedy path is 4 steps; eval charges are per step
    assert ledger.total - before == 20 * 4
    assert ledger.by_edge[task.name]["eval"] == 80


def test_evaluate_is_deterministic(corridor_env):
    task = _corridor_task(corridor_env)
    pol = TabularQPolicy(seed=5)
    train_for(pol, task, [], 300, InteractionLedger(10_000))
    r1 = evaluate(pol, task, [], 10)
    r2 = evaluate(pol, task, [], 10)
    assert r1 == r2
    with pytest.raises(ValueError):
        evaluate(pol, task, [], 0)


def test_training_is_reproducible(corridor_env):
    task = _corridor_task(corridor_env)
    runs = []
    for _ in range(2):
        pol = TabularQPolicy(seed=11)
        res = train_for(pol, task, [], 2000, InteractionLedger(10_000))
        runs.append((res, pol.q))
    assert runs[0] == runs[1]


def test_train_for_rejects_nonpositive_x(corridor_env):
    with pytest.raises(ValueError):
        train_for(TabularQPolicy(), _corridor_task(corridor_env), [], 0, InteractionLedger(10))
