"""The teacher loop: sample a sub-task, let the student train on it for a
burst, update the teacher's value for that task, and grow the frontier of
active tasks along the DAG as tasks converge."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .envs import GridEnv
from .graph import (SubgoalDag, TaskEdge, discarded_tasks, next_tasks,
                    outgoing_tasks)
from .ledger import BudgetExhausted, InteractionLedger
from .metrics import RunMetrics
from .student import TabularQPolicy, TaskStats, evaluate, train_for
from .subtask import ChainLink, ResetFailure, SubTask, SubTaskOutcome, make_task, rollout

NEG_INF = -math.inf


class TeacherError(RuntimeError):
    pass


class EmptyActiveSet(TeacherError):
    pass


class InactiveTask(TeacherError):
    pass


class InsufficientHistory(TeacherError):
    pass


class NotConverged(TeacherError):
    pass


@dataclass
class StudentConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 100_000


@dataclass
class TeacherConfig:
    alpha: float = 0.1
    epsilon: float = 0.1
    x: int = 1000
    eta: float = 0.9
    mu: float = 0.01
    eval_episodes: int = 20
    budget: int = 5_000_000
    seed: int = 0
    allocated: int = 100
    step_penalty: float = 0.0
    reset_retries: int = 5
    final_eval_episodes: int = 100
    max_reward: float = 1.0
    student: StudentConfig = field(default_factory=StudentConfig)

    @property
    def eval_trigger(self) -> float:
        return 0.5 * self.eta * self.max_reward


def derive_seed(*parts) -> int:
    return random.Random(":".join(str(p) for p in parts)).getrandbits(31)


def make_policy(cfg: TeacherConfig, edge) -> TabularQPolicy:
    st = cfg.student
    return TabularQPolicy(alpha=st.alpha, gamma=st.gamma, eps_start=st.eps_start,
                          eps_end=st.eps_end, eps_decay_steps=st.eps_decay_steps,
                          seed=derive_seed(cfg.seed, "policy", edge))


@dataclass
class TeacherState:
    """Active/learned/discarded sets plus teacher Q-values.

    Sets are kept as insertion-ordered lists so that iteration order never
    depends on hashing.
    """

    alpha: float = 0.1
    epsilon: float = 0.1
    active: list[TaskEdge] = field(default_factory=list)
    learned: list[TaskEdge] = field(default_factory=list)
    discarded: list[TaskEdge] = field(default_factory=list)
    qvals: dict[TaskEdge, float] = field(default_factory=dict)
    policies: dict[TaskEdge, object] = field(default_factory=dict)
    tasks: dict[TaskEdge, SubTask] = field(default_factory=dict)
    stats: dict[TaskEdge, TaskStats] = field(default_factory=dict)
    chains: dict = field(default_factory=dict)
    policy_factory: Callable[[TaskEdge], object] | None = None
    task_factory: Callable[[TaskEdge], SubTask] | None = None

    def activate(self, edges) -> None:
        for e in edges:
            if e in self.active or e in self.learned or e in self.discarded:
                continue
            self.active.append(e)
            self.qvals[e] = 0.0
            if e not in self.policies and self.policy_factory is not None:
                self.policies[e] = self.policy_factory(e)
            if e not in self.tasks and self.task_factory is not None:
                self.tasks[e] = self.task_factory(e)
            self.stats.setdefault(e, TaskStats())

    def check_invariants(self) -> None:
        a, l, d = set(self.active), set(self.learned), set(self.discarded)
        assert not (a & l) and not (a & d) and not (l & d), "task sets overlap"
        for e, v in self.qvals.items():
            assert (v == NEG_INF) == (e in l or e in d), f"qval/-inf mismatch on {e}"
        for e in a:
            assert e in self.policies, f"active task {e} has no policy"


def sampling_distribution(state: TeacherState) -> dict[TaskEdge, float]:
    """Exact epsilon-greedy probabilities over the active set."""
    cands = [e for e in state.active if state.qvals.get(e, NEG_INF) != NEG_INF]
    if not cands:
        raise EmptyActiveSet("no active tasks")
    best = max(state.qvals[e] for e in cands)
    ties = [e for e in cands if state.qvals[e] == best]
    eps = state.epsilon
    return {e: eps / len(cands) + ((1 - eps) / len(ties) if e in ties else 0.0)
            for e in cands}


def sample_task(state: TeacherState, rng: random.Random) -> TaskEdge:
    cands = [e for e in state.active if state.qvals.get(e, NEG_INF) != NEG_INF]
    if not cands:
        raise EmptyActiveSet("no active tasks")
    if rng.random() < state.epsilon:
        return cands[rng.randrange(len(cands))]
    best = max(state.qvals[e] for e in cands)
    ties = [e for e in cands if state.qvals[e] == best]
    return ties[rng.randrange(len(ties))]


def update_teacher(state: TeacherState, e: TaskEdge, g: float) -> float:
    if e not in state.active:
        raise InactiveTask(str(e))
    q = state.alpha * g + (1 - state.alpha) * state.qvals[e]
    state.qvals[e] = q
    return q


def check_convergence(stats: TaskStats, eta: float, mu: float) -> bool:
    """Greedy success rate at least ``eta`` and the last burst return moved
    by less than ``mu``."""
    if len(stats.g_history) < 2:
        raise InsufficientHistory("need two burst returns")
    if stats.success_rate is None:
        return False
    return stats.success_rate >= eta and abs(stats.g_history[-1] - stats.g_history[-2]) < mu


def on_converged(state: TeacherState, dag: SubgoalDag, e: TaskEdge,
                 converged: bool = True) -> tuple[set[TaskEdge], set[TaskEdge]]:
    """Move ``e`` to the learned set and update the frontier.

    Returns ``(activated, newly_discarded)``. Discards never touch already
    learned tasks.
    """
    if not converged:
        raise NotConverged(str(e))
    if e not in state.active:
        raise InactiveTask(str(e))
    state.active.remove(e)
    state.learned.append(e)
    state.qvals[e] = NEG_INF
    if e.dst not in state.chains:
        link = ChainLink(state.tasks.get(e), state.policies.get(e))
        state.chains[e.dst] = list(state.chains.get(e.src, [])) + [link]

    dropped = set()
    for d in sorted(discarded_tasks(dag, e), key=dag.edges.index):
        if d in state.learned or d in state.discarded:
            continue
        state.discarded.append(d)
        state.qvals[d] = NEG_INF
        if d in state.active:
            state.active.remove(d)
        dropped.add(d)

    fresh = next_tasks(dag, e, state.discarded, state.learned)
    fresh = [f for f in dag.edges if f in fresh and f not in state.active]
    state.activate(fresh)
    return set(fresh), dropped


@dataclass
class RunResult:
    status: str
    policy_list: list
    chain_edges: list[TaskEdge]
    edge_policy_map: dict
    total_interactions: int
    metrics: RunMetrics
    ledger: InteractionLedger
    final_success_rate: float = 0.0
    teacher: TeacherState | None = None

    @property
    def success(self) -> bool:
        return self.status == "success"


def evaluate_chain(env: GridEnv, chain: list[ChainLink], goal, episodes: int = 100) -> float:
    """Greedy execution of the whole chain from env reset; not charged."""
    if not chain:
        return 0.0
    wins = 0
    for _ in range(episodes):
        s = env.reset()
        ok = True
        for link in chain:
            s, _, verdict = rollout(link.task, link.policy, s)
            if verdict is not SubTaskOutcome.SUCCESS:
                ok = False
                break
            s = s._replace(step_count=0)
        wins += ok and goal.literals <= env.label(s).literals
    return wins / episodes


def run_lgts(dag: SubgoalDag, env: GridEnv, config: TeacherConfig | None = None,
             run_id: str = "", shaping=None) -> RunResult:
    """Teacher-student learning over the sub-goal DAG.

    Loops until a task into the goal converges (success), the budget runs
    out, or no active tasks remain.
    """
    cfg = config or TeacherConfig()
    rng = random.Random(f"teacher:{cfg.seed}")
    ledger = InteractionLedger(cfg.budget)
    metrics = RunMetrics(run_id)
    state = TeacherState(
        alpha=cfg.alpha, epsilon=cfg.epsilon,
        policy_factory=lambda e: make_policy(cfg, e),
        task_factory=lambda e: make_task(dag, e, env, cfg.allocated, cfg.step_penalty, shaping),
    )
    state.chains[dag.start] = []
    first = [e for e in dag.edges if e in outgoing_tasks(dag, dag.start)]
    state.activate(first)
    for e in first:
        metrics.event(0, str(e), "activated", 0)

    status = "running"
    step = 0
    while status == "running":
        if ledger.exhausted:
            status = "budget_exhausted"
            break
        try:
            e = sample_task(state, rng)
        except EmptyActiveSet:
            status = "stuck"
            break
        step += 1
        task, policy, stats = state.tasks[e], state.policies[e], state.stats[e]
        chain = state.chains[e.src]
        try:
            burst = train_for(policy, task, chain, cfg.x, ledger, stats, cfg.reset_retries)
            update_teacher(state, e, burst.g)
            stats.g_history.append(burst.g)
            rate = None
            g_hist = stats.g_history
            if (burst.g > cfg.eval_trigger and len(g_hist) >= 2
                    and abs(g_hist[-1] - g_hist[-2]) < cfg.mu):
                rate = evaluate(policy, task, chain, cfg.eval_episodes, ledger, cfg.reset_retries)
                stats.success_rate = rate
        except BudgetExhausted:
            status = "budget_exhausted"
            metrics.step(step, str(e), 0.0, None, ledger.total)
            break
        except ResetFailure:
            status = "reset_failure"
            break
        metrics.step(step, str(e), burst.g, rate, ledger.total,
                     {str(k): v for k, v in state.qvals.items()})
        if rate is not None and check_convergence(stats, cfg.eta, cfg.mu):
            fresh, dropped = on_converged(state, dag, e)
            metrics.event(step, str(e), "converged", ledger.total)
            for d in sorted(map(str, dropped)):
                metrics.event(step, d, "discarded", ledger.total)
            for f in sorted(map(str, fresh)):
                metrics.event(step, f, "activated", ledger.total)
            if e.dst == dag.goal:
                status = "success"
        state.check_invariants()

    chain = state.chains.get(dag.goal, [])
    final = evaluate_chain(env, chain, dag.goal, cfg.final_eval_episodes) if chain else 0.0
    metrics.finish(step, status, ledger.total, final, by_kind=dict(ledger.by_kind))
    return RunResult(
        status=status,
        policy_list=[link.policy for link in chain],
        chain_edges=[link.task.edge for link in chain],
        edge_policy_map=dict(state.policies),
        total_interactions=ledger.total,
        metrics=metrics,
        ledger=ledger,
        final_success_rate=final,
        teacher=state,
    )
