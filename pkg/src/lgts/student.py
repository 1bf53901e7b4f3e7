"""Tabular Q-learning student, burst training and greedy evaluation."""

from __future__ import annotations

import ast
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .envs import N_ACTIONS, Terminal, state_key
from .ledger import BudgetExhausted, InteractionLedger
from .subtask import PolicyChain, SubTask, SubTaskOutcome, task_reset, task_step


class Policy(Protocol):
    def act(self, key, greedy: bool = False) -> int: ...

    def update(self, s, a: int, r: float, s2, terminal: bool) -> None: ...


class TabularQPolicy:
    """epsilon-greedy Q-learning over hashed low-level states.

    Unseen state-action pairs read as 0. Greedy ties are broken by a hash of
    ``(seed, state)``, so greedy behaviour is a pure function of the table;
    during exploration ties are broken by the policy's own RNG.
    Exploration decays linearly from ``eps_start`` to ``eps_end`` over the
    first ``eps_decay_steps`` updates.
    """

    def __init__(self, alpha=0.1, gamma=0.95, eps_start=1.0, eps_end=0.05,
                 eps_decay_steps=100_000, seed=0, n_actions=N_ACTIONS):
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        self.alpha = alpha
        self.gamma = gamma
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_steps = eps_decay_steps
        self.seed = seed
        self.n_actions = n_actions
        self.q: dict[tuple, list[float]] = {}
        self.steps = 0
        self.rng = random.Random(seed)
        self._zero = [0.0] * n_actions
        self._all = tuple(range(n_actions))

    @property
    def epsilon(self) -> float:
        if self.eps_decay_steps <= 0 or self.steps >= self.eps_decay_steps:
            return self.eps_end
        frac = self.steps / self.eps_decay_steps
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def values(self, key) -> list[float]:
        return list(self.q.get(key, self._zero))

    def greedy_action(self, key) -> int:
        row = self.q.get(key)
        if row is None:
            ties = self._all
        else:
            m = max(row)
            ties = [a for a, v in enumerate(row) if v == m]
            if len(ties) == 1:
                return ties[0]
        return ties[hash((self.seed, key)) % len(ties)]

    def act(self, key, greedy: bool = False) -> int:
        if greedy:
            return self.greedy_action(key)
        rng = self.rng
        if rng.random() < self.epsilon:
            return rng.randrange(self.n_actions)
        # exploring: ties go to the RNG so unvisited states still random-walk
        row = self.q.get(key)
        if row is None:
            return rng.randrange(self.n_actions)
        m = max(row)
        ties = [a for a, v in enumerate(row) if v == m]
        return ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]

    def update(self, s, a: int, r: float, s2, terminal: bool) -> None:
        row = self.q.get(s)
        if row is None:
            row = self.q[s] = [0.0] * self.n_actions
        target = r
        if not terminal:
            target += self.gamma * max(self.q.get(s2, self._zero))
        row[a] += self.alpha * (target - row[a])
        self.steps += 1

    # -- checkpoints -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        lines = [f"# alpha={self.alpha} gamma={self.gamma} seed={self.seed} steps={self.steps}"]
        for key in sorted(self.q, key=repr):
            for a, v in enumerate(self.q[key]):
                if v != 0.0:
                    lines.append(f"{key!r}\t{a}\t{v!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TabularQPolicy":
        text = Path(path).read_text().splitlines()
        header = dict(kv.split("=") for kv in text[0].lstrip("# ").split())
        pol = cls(alpha=float(header["alpha"]), gamma=float(header["gamma"]),
                  seed=int(header["seed"]))
        pol.steps = int(header["steps"])
        for line in text[1:]:
            if not line.strip():
                continue
            k, a, v = line.split("\t")
            key = ast.literal_eval(k)
            row = pol.q.setdefault(key, [0.0] * pol.n_actions)
            row[int(a)] = float(v)
        return pol


def select_action(policy: TabularQPolicy, key, mode: str = "explore") -> int:
    if mode not in ("explore", "greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    return policy.act(key, greedy=mode == "greedy")


def update(policy: TabularQPolicy, s, a, r, s2, terminal) -> None:
    policy.update(s, a, r, s2, terminal)


@dataclass
class TaskStats:
    """Per-task learning record kept by the teacher."""

    window: int = 100
    returns: deque = field(default=None)
    successes: deque = field(default=None)
    interactions: int = 0
    g_history: list[float] = field(default_factory=list)
    success_rate: float | None = None

    def __post_init__(self):
        self.returns = deque(maxlen=self.window)
        self.successes = deque(maxlen=self.window)

    @property
    def g_last(self) -> float | None:
        return self.g_history[-1] if self.g_history else None

    @property
    def g_prev(self) -> float | None:
        return self.g_history[-2] if len(self.g_history) > 1 else None

    @property
    def train_success_rate(self) -> float:
        return sum(self.successes) / len(self.successes) if self.successes else 0.0


@dataclass
class BurstResult:
    g: float
    episodes: int
    successes: int
    steps: int
    reset_steps: int


def train_for(policy: TabularQPolicy, task: SubTask, chain: PolicyChain, x: int,
              ledger: InteractionLedger, stats: TaskStats | None = None,
              reset_retries: int = 5, require_src: bool = True) -> BurstResult:
    """Train on ``task`` for exactly ``x`` environment interactions.

    Episodes start from a chain replay (charged as ``reset``). An episode cut
    by the ``x`` boundary keeps its updates but is left out of ``g``, the mean
    undiscounted (unshaped) episode return over the burst.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    name = task.name
    reset_before = ledger.by_edge[name]["reset"] if name in ledger.by_edge else 0
    penalty = task.step_penalty
    steps = 0
    returns: list[float] = []
    successes = 0
    act = policy.act
    learn = policy.update
    while steps < x:
        s = task_reset(task, chain, reset_retries, ledger, charge_to=name,
                       require_src=require_src)
        key = state_key(s)
        ep_steps = 0
        base_return = 0.0
        verdict = SubTaskOutcome.RUNNING
        room = min(x - steps, ledger.remaining)
        while ep_steps < room:
            a = act(key)
            out, r, verdict = task_step(task, s, a)
            ep_steps += 1
            s = out.next
            key2 = state_key(s)
            if verdict is SubTaskOutcome.RUNNING:
                base_return += penalty
                learn(key, a, r, key2, False)
                key = key2
                continue
            if verdict is SubTaskOutcome.SUCCESS:
                base_return += task.success_reward(s.step_count)
                successes += 1
            else:
                base_return += penalty
            # a timeout is a truncation, so keep bootstrapping through it
            truncated = out.terminal is Terminal.TIMEOUT and verdict is SubTaskOutcome.ENV_TERMINAL
            learn(key, a, r, key2, not truncated)
            break
        ledger.charge(ep_steps, "train", name)
        steps += ep_steps
        if stats is not None:
            stats.interactions += ep_steps
        if verdict is not SubTaskOutcome.RUNNING:
            returns.append(base_return)
            if stats is not None:
                stats.returns.append(base_return)
                stats.successes.append(verdict is SubTaskOutcome.SUCCESS)
        if steps < x and ledger.exhausted:
            raise BudgetExhausted("budget ran out during training")
    g = sum(returns) / len(returns) if returns else 0.0
    reset_after = ledger.by_edge[name]["reset"]
    return BurstResult(g, len(returns), successes, steps, reset_after - reset_before)


def evaluate(policy: TabularQPolicy, task: SubTask, chain: PolicyChain, episodes: int,
             ledger: InteractionLedger | None = None, reset_retries: int = 5,
             require_src: bool = True) -> float:
    """Fraction of greedy episodes that end in Success."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    name = task.name
    wins = 0
    for _ in range(episodes):
        s = task_reset(task, chain, reset_retries, ledger, kind="eval",
                       charge_to=name, require_src=require_src)
        steps = 0
        while True:
            if ledger is not None and ledger.exhausted:
                raise BudgetExhausted("budget ran out during evaluation")
            a = policy.act(state_key(s), greedy=True)
            out, _, verdict = task_step(task, s, a)
            s = out.next
            steps += 1
            if ledger is not None:
                ledger.charge(1, "eval", name)
            if verdict is not SubTaskOutcome.RUNNING:
                break
        wins += verdict is SubTaskOutcome.SUCCESS
    return wins / episodes
