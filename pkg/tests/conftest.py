from importlib import resources

import pytest

from lgts.envs import make_env
from lgts.graph import build_dag, parse_dag
from lgts.symbolic import make_symbolic_info, parse_literal, parse_state_expr

DOORKEY_ENTITIES = ["Key_1", "Key_2", "Door", "OutsideRoom", "Green_Goal", "Lava"]
DOORKEY_PREDICATES = {"Holding": 1, "At": 1, "Unlocked": 1}


def S(text):
    return parse_state_expr(text)


# running-example node names
Q0 = S("At(OutsideRoom)")
Q1 = S("Holding(Key_1)")
Q2 = S("Holding(Key_2)")
Q3 = S("Unlocked(Door)")
Q4 = S("At(Green_Goal)")

FOUR_PATHS = [[Q0, Q1, Q3, Q4], [Q0, Q2, Q3, Q4], [Q0, Q3, Q4], [Q0, Q2, Q4]]


def E(a, b):
    from lgts.graph import TaskEdge
    return TaskEdge(a, b)


@pytest.fixture(scope="session")
def sigma():
    return make_symbolic_info(DOORKEY_ENTITIES, DOORKEY_PREDICATES,
                              [parse_literal("At(OutsideRoom)")], [parse_literal("At(Green_Goal)")])


@pytest.fixture
def four_path_dag():
    return build_dag(FOUR_PATHS)


@pytest.fixture
def oracle_dag():
    text = (resources.files("lgts.data.graphs") / "doorkey_oracle.dag").read_text()
    return parse_dag(text)


@pytest.fixture
def doorkey_env():
    return make_env("doorkey_8x8")


def plan(env, s, target, avoid=(), max_depth=60):
    """BFS shortest action list from s to a state whose label satisfies target."""
    from collections import deque
    from lgts.envs import Terminal, state_key
    start = s._replace(step_count=0)
    seen = {state_key(start)}
    queue = deque([(start, [])])
    env_steps = env.max_steps
    env.max_steps = 10 ** 9
    try:
        while queue:
            cur, acts = queue.popleft()
            if len(acts) >= max_depth:
                continue
            for a in range(6):
                out = env.step(cur, a)
                lab = env.label(out.next).literals
                if target.literals <= lab:
                    return acts + [a]
                if out.terminal is not Terminal.NONE or any(v.literals <= lab for v in avoid):
                    continue
                k = state_key(out.next)
                if k not in seen:
                    seen.add(k)
                    queue.append((out.next, acts + [a]))
    finally:
        env.max_steps = env_steps
    return None


class ScriptedPolicy:
    """Greedy lookup table that replays one planned trajectory."""

    def __init__(self, env, s, actions):
        from lgts.envs import state_key
        self.table = {}
        env_steps = env.max_steps
        env.max_steps = 10 ** 9
        try:
            for a in actions:
                self.table[state_key(s)] = a
                s = env.step(s, a).next
        finally:
            env.max_steps = env_steps
        self.end = s

    def act(self, key, greedy=False):
        return self.table.get(key, 1)  # spin in place off-script

    def update(self, *args):
        pass


CORRIDOR = """\
name: corridor
domain: doorkey
width: 7
height: 3
---
#######
#>...G#
#######
"""

WALLED = """\
name: walled
domain: doorkey
width: 7
height: 3
---
#######
#>.#.G#
#######
"""


@pytest.fixture
def corridor_env():
    from lgts.envs import GridEnv, parse_layout
    return GridEnv(parse_layout(CORRIDOR), seed=0, max_steps=100)


@pytest.fixture
def walled_env():
    from lgts.envs import GridEnv, parse_layout
    return GridEnv(parse_layout(WALLED), seed=0, max_steps=100)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
