import pytest
from hypothesis import given, strategies as st

from lgts.envs import Action, make_env
from lgts.graph import UnknownEdge, build_dag
from lgts.ledger import InteractionLedger
from lgts.subtask import (ChainLink, ResetFailure, SubTask, SubTaskOutcome, make_task,
                          rollout, task_reset, task_step)

from conftest import E, Q0, Q1, Q2, Q3, Q4, S, ScriptedPolicy, plan


def test_avoid_sets(four_path_dag, doorkey_env):
    assert set(make_task(four_path_dag, E(Q0, Q1), doorkey_env).avoid) == {Q2, Q3}
    assert set(make_task(four_path_dag, E(Q3, Q4), doorkey_env).avoid) == set()
    assert set(make_task(four_path_dag, E(Q0, Q2), doorkey_env).avoid) == {Q1, Q3}
    with pytest.raises(UnknownEdge):
        make_task(four_path_dag, E(Q1, Q2), doorkey_env)


def test_subtask_invariants(doorkey_env):
    with pytest.raises(ValueError):
        SubTask(E(Q0, Q1), (Q1,), doorkey_env)
    with pytest.raises(ValueError):
        SubTask(E(Q0, Q1), (), doorkey_env, allocated=0)
    t = SubTask(E(Q0, Q1), (), doorkey_env, allocated=37)
    assert t.env.max_steps == 37 and doorkey_env.max_steps == 100


@pytest.mark.parametrize("steps,reward", [(10, 0.91), (100, 0.10), (1, 0.991), (50, 0.55)])
def test_success_reward(doorkey_env, steps, reward):
    t = SubTask(E(Q0, Q1), (), doorkey_env)
    assert t.success_reward(steps) == pytest.approx(reward, abs=1e-12)


def _walk_to(env, s, steps):
    # burn steps with a toggle facing nothing toggleable
    for _ in range(steps):
        s = env.step(s, Action.TOGGLE).next
    return s


def test_success_at_step_ten(four_path_dag, doorkey_env):
    task = make_task(four_path_dag, E(Q0, Q2), doorkey_env)
    s = doorkey_env.reset()
    acts = plan(task.env, s, Q2, avoid=(Q1, Q3))
    s = _walk_to(task.env, s, 10 - len(acts))
    verdicts, rewards = [], []
    for a in acts:
        out, r, v = task_step(task, s, a)
        s = out.next
        verdicts.append(v)
        rewards.append(r)
    assert s.step_count == 10
    assert verdicts[-1] is SubTaskOutcome.SUCCESS
    assert all(v is SubTaskOutcome.RUNNING for v in verdicts[:-1])
    assert rewards[-1] == pytest.approx(0.91, abs=0)
    assert rewards[:-1] == [0.0] * (len(rewards) - 1)


def test_picking_wrong_key_is_avoid_violation(four_path_dag, doorkey_env):
    task = make_task(four_path_dag, E(Q0, Q1), doorkey_env)
    s = doorkey_env.reset()
    acts = plan(task.env, s, Q2)
    for a in acts[:-1]:
        out, r, v = task_step(task, s, a)
        assert v is SubTaskOutcome.RUNNING
        s = out.next
    out, r, v = task_step(task, s, acts[-1])
    assert v is SubTaskOutcome.AVOID_VIOLATION and r == 0.0


def test_lava_and_timeout_are_env_terminal(four_path_dag):
    env = make_env("doorkey_8x8")
    task = make_task(four_path_dag, E(Q0, Q1), env, allocated=5)
    s = env.reset()._replace(agent_pos=2 * 8 + 1, agent_dir=0)
    _, r, v = task_step(task, s, Action.FORWARD)
    assert v is SubTaskOutcome.ENV_TERMINAL and r == 0.0
    s = env.reset()
    for k in range(5):
        out, r, v = task_step(task, s, Action.LEFT)
        s = out.next
    assert v is SubTaskOutcome.ENV_TERMINAL and s.step_count == 5


def test_labels_outside_successors_do_not_terminate(doorkey_env):
    dag = build_dag([[Q0, Q2, Q3, Q4]])
    task = make_task(dag, E(Q0, Q2), doorkey_env)
    # Holding(Key_1) is not a successor of q0 here, so it is harmless
    assert task.classify(S("At(OutsideRoom) & Holding(Key_1)")) is SubTaskOutcome.RUNNING


def test_success_wins_over_avoid(doorkey_env):
    dag = build_dag([[Q0, Q2, Q3, Q4], [Q0, Q3, Q4]])
    task = make_task(dag, E(Q0, Q2), doorkey_env)
    assert task.classify(S("Holding(Key_2) & Unlocked(Door)")) is SubTaskOutcome.SUCCESS


def test_step_penalty(doorkey_env):
    task = SubTask(E(Q0, Q1), (), doorkey_env, step_penalty=-0.01)
    _, r, v = task_step(task, doorkey_env.reset(), Action.LEFT)
    assert v is SubTaskOutcome.RUNNING and r == -0.01


def test_reset_empty_chain(four_path_dag, doorkey_env):
    task = make_task(four_path_dag, E(Q0, Q2), doorkey_env)
    ledger = InteractionLedger(100)
    assert task_reset(task, [], ledger=ledger) == doorkey_env.reset()
    assert ledger.total == 0


def test_reset_through_chain(four_path_dag, doorkey_env):
    first = make_task(four_path_dag, E(Q0, Q2), doorkey_env)
    s0 = doorkey_env.reset()
    pol = ScriptedPolicy(doorkey_env, s0, plan(doorkey_env, s0, Q2, (Q1, Q3)))
    task = make_task(four_path_dag, E(Q2, Q3), doorkey_env)
    ledger = InteractionLedger(1000)
    s = task_reset(task, [ChainLink(first, pol)], ledger=ledger)
    assert Q2.literals <= doorkey_env.label(s).literals
    assert s.step_count == 0
    assert ledger.total == len(pol.table) == ledger.by_edge[task.name]["reset"]


def test_reset_failure_after_retries(four_path_dag, doorkey_env):
    first = make_task(four_path_dag, E(Q0, Q2), doorkey_env)
    pol = ScriptedPolicy(doorkey_env, doorkey_env.reset(), [])  # spins until timeout
    task = make_task(four_path_dag, E(Q2, Q3), doorkey_env)
    ledger = InteractionLedger(10_000)
    with pytest.raises(ResetFailure):
        task_reset(task, [ChainLink(first, pol)], retries=5, ledger=ledger)
    assert ledger.total == 5 * 100


def test_rollout_cap(four_path_dag, doorkey_env):
    task = make_task(four_path_dag, E(Q0, Q2), doorkey_env)
    pol = ScriptedPolicy(doorkey_env, doorkey_env.reset(), [])
    s, used, v = rollout(task, pol, doorkey_env.reset(), max_steps=7)
    assert used == 7 and v is SubTaskOutcome.RUNNING


@given(st.integers(1, 500), st.integers(1, 500))
def test_reward_bounds_and_monotone(allocated, k):
    env = make_env("doorkey_8x8")
    t = SubTask(E(Q0, Q1), (), env, allocated=allocated)
    k = min(k, allocated)
    r = t.success_reward(k)
    assert 0.1 - 1e-12 <= r <= 1.0
    if k > 1:
        assert t.success_reward(k - 1) > r


@given(st.lists(st.integers(0, 5), min_size=1, max_size=120))
def test_one_terminal_outcome_per_episode(actions):
    env = make_env("doorkey_8x8")
    dag = build_dag([[Q0, Q1, Q3, Q4], [Q0, Q2, Q3, Q4], [Q0, Q3, Q4], [Q0, Q2, Q4]])
    task = make_task(dag, E(Q0, Q1), env)
    s = env.reset()
    ended = 0
    for a in actions:
        out, r, v = task_step(task, s, a)
        if v is not SubTaskOutcome.RUNNING:
            ended += 1
            break
        assert r == 0.0
        s = out.next
    assert ended <= 1
    if ended and v is SubTaskOutcome.AVOID_VIOLATION:
        lab = env.label(out.next).literals
        assert any(x.literals <= lab for x in (Q2, Q3))
