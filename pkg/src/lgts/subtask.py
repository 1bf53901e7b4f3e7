"""Reach-avoid sub-task MDPs built from DAG edges.

A sub-task for edge ``u -> v`` succeeds when the label satisfies ``v`` and
fails as soon as it satisfies any other successor of ``u``. Successful
episodes pay ``1 - 0.9 * steps / allocated``; every other step pays
``step_penalty`` (0 by default).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Sequence

from .envs import GridEnv, LowState, StepOutcome, Terminal, state_key
from .graph import SubgoalDag, TaskEdge, UnknownEdge
from .ledger import BudgetExhausted, InteractionLedger
from .symbolic import SymbolicState


class SubTaskOutcome(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    AVOID_VIOLATION = "avoid"
    ENV_TERMINAL = "env_terminal"


class ResetFailure(RuntimeError):
    """The policy chain could not bring the agent to the sub-task source."""


# label (before, after) -> shaping bonus
Shaping = Callable[[SymbolicState, SymbolicState], float]


@dataclass(eq=False)
class SubTask:
    edge: TaskEdge
    avoid: tuple[SymbolicState, ...]
    env: GridEnv
    allocated: int = 100
    step_penalty: float = 0.0
    shaping: Shaping | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.edge.dst in self.avoid:
            raise ValueError("destination cannot be in the avoid set")
        if self.allocated < 1:
            raise ValueError("allocated must be >= 1")
        if self.env.max_steps != self.allocated:
            self.env = copy.copy(self.env)
            self.env.max_steps = self.allocated

    @property
    def name(self) -> str:
        return str(self.edge)

    def success_reward(self, steps: int) -> float:
        return 1.0 - 0.9 * steps / self.allocated

    def classify(self, label: SymbolicState) -> SubTaskOutcome:
        """Success/avoid verdict for a label, ignoring env terminals."""
        out = self._cache.get(label)
        if out is None:
            lits = label.literals
            if self.edge.dst.literals <= lits:
                out = SubTaskOutcome.SUCCESS
            elif any(a.literals <= lits for a in self.avoid):
                out = SubTaskOutcome.AVOID_VIOLATION
            else:
                out = SubTaskOutcome.RUNNING
            self._cache[label] = out
        return out


class ChainLink(NamedTuple):
    task: SubTask
    policy: object


PolicyChain = Sequence[ChainLink]


def make_task(dag: SubgoalDag, edge: TaskEdge, env: GridEnv, allocated: int = 100,
              step_penalty: float = 0.0, shaping: Shaping | None = None) -> SubTask:
    if not dag.has_edge(edge):
        raise UnknownEdge(str(edge))
    others = [v for v in dag.adjacency()[edge.src] if v != edge.dst]
    return SubTask(edge, tuple(others), env, allocated, step_penalty, shaping)


def task_step(task: SubTask, state: LowState, action: int
              ) -> tuple[StepOutcome, float, SubTaskOutcome]:
    env = task.env
    before = env.label(state) if task.shaping is not None else None
    out = env.step(state, action)
    lab = env.label(out.next)
    verdict = task.classify(lab)
    if verdict is SubTaskOutcome.SUCCESS:
        reward = task.success_reward(out.next.step_count)
    else:
        reward = task.step_penalty
        if verdict is SubTaskOutcome.RUNNING and out.terminal is not Terminal.NONE:
            verdict = SubTaskOutcome.ENV_TERMINAL
    if before is not None:
        reward += task.shaping(before, lab)
    return out, reward, verdict


def rollout(task: SubTask, policy, state: LowState, max_steps: int | None = None
            ) -> tuple[LowState, int, SubTaskOutcome]:
    """Greedy rollout of ``policy`` on ``task`` from ``state``.

    Returns the final state, the number of steps taken and the verdict. Stops
    early (verdict RUNNING) if ``max_steps`` runs out first.
    """
    steps = 0
    s = state
    while True:
        if max_steps is not None and steps >= max_steps:
            return s, steps, SubTaskOutcome.RUNNING
        a = policy.act(state_key(s), greedy=True)
        out, _, verdict = task_step(task, s, a)
        steps += 1
        s = out.next
        if verdict is not SubTaskOutcome.RUNNING:
            return s, steps, verdict


def task_reset(task: SubTask, chain: PolicyChain, retries: int = 5,
               ledger: InteractionLedger | None = None, kind: str = "reset",
               charge_to: str | None = None, require_src: bool = True) -> LowState:
    """Reset the env and replay the learned chain up to ``task.edge.src``.

    Every step of the replay is charged to ``ledger``. Raises
    :class:`ResetFailure` after ``retries`` failed attempts and
    :class:`BudgetExhausted` if the ledger runs dry mid-replay. With
    ``require_src=False`` the final label is not checked (flat baselines
    start every task from the env reset).
    """
    env = task.env
    charge_to = charge_to or task.name
    for _ in range(max(1, retries)):
        s = env.reset()
        ok = True
        for link in chain:
            cap = ledger.remaining if ledger is not None else None
            s, used, verdict = rollout(link.task, link.policy, s, max_steps=cap)
            if ledger is not None:
                ledger.charge(used, kind, charge_to)
                if verdict is SubTaskOutcome.RUNNING:
                    raise BudgetExhausted("budget ran out during chain replay")
            if verdict is not SubTaskOutcome.SUCCESS:
                ok = False
                break
            s = s._replace(step_count=0)
        if ok and (not require_src or task.edge.src.literals <= env.label(s).literals):
            return s._replace(step_count=0)
    raise ResetFailure(f"could not reach {task.edge.src} after {retries} attempts")
