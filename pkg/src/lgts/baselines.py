"""Comparison runners.

LFS and the shaped-reward runners train one policy on the whole task; they
reuse the teacher loop over a two-node graph, so the ledger and metrics are
the same as for LgTS. TSCL samples every edge of a graph with no gating and
no chains. AgTS is just :func:`run_lgts` fed an oracle graph.
"""

from __future__ import annotations

import dataclasses
import random

from .envs import GridEnv
from .graph import SubgoalDag, TaskEdge, UnknownNode, build_dag, shortest_hops
from .ledger import BudgetExhausted, InteractionLedger
from .metrics import RunMetrics
from .student import evaluate, train_for
from .subtask import ResetFailure, make_task
from .symbolic import SymbolicState
from .teacher import (RunResult, TeacherConfig, TeacherState, make_policy, run_lgts,
                      sample_task, update_teacher)


def flat_dag(dag_or_start, goal: SymbolicState | None = None) -> SubgoalDag:
    if isinstance(dag_or_start, SubgoalDag):
        start, goal = dag_or_start.start, dag_or_start.goal
    else:
        start = dag_or_start
    return build_dag([[start, goal]])


def _single_policy_eval(result: RunResult, dag: SubgoalDag, env: GridEnv,
                        cfg: TeacherConfig) -> RunResult:
    """Greedy success of the lone policy, whether or not it converged."""
    edge = dag.edges[0]
    policy = result.edge_policy_map[edge]
    task = make_task(dag, edge, env, cfg.allocated)
    result.final_success_rate = evaluate(policy, task, [], cfg.final_eval_episodes)
    result.metrics.set_final_success(result.final_success_rate)
    return result


def run_lfs(env: GridEnv, start: SymbolicState, goal: SymbolicState,
            config: TeacherConfig | None = None, run_id: str = "",
            allocated: int = 500) -> RunResult:
    """One policy on the full task with the sparse success reward."""
    cfg = dataclasses.replace(config or TeacherConfig(), allocated=allocated)
    dag = flat_dag(start, goal)
    return _single_policy_eval(run_lgts(dag, env, cfg, run_id), dag, env, cfg)


def shaping_potential(dag: SubgoalDag, node: SymbolicState) -> float:
    if node not in dag.nodes:
        raise UnknownNode(str(node))
    hops = shortest_hops(dag, dag.goal)
    d = hops[dag.start]
    if node not in hops:
        return 0.0
    return min(1.0, max(0.0, (d - hops[node]) / d))


def label_potential(dag: SubgoalDag):
    """phi over labels: the best potential among the nodes a label satisfies."""
    phis = [(n.literals, shaping_potential(dag, n)) for n in dag.nodes]
    cache: dict = {}

    def phi(label: SymbolicState) -> float:
        v = cache.get(label)
        if v is None:
            lits = label.literals
            v = cache[label] = max((p for need, p in phis if need <= lits), default=0.0)
        return v
    return phi


def make_shaping(dag: SubgoalDag, gamma: float = 0.95, potential_based: bool = True):
    phi = label_potential(dag)
    if potential_based:
        return lambda before, after: gamma * phi(after) - phi(before)
    # raw bonus proportional to closeness to the goal node
    return lambda before, after: phi(after)


def run_shaped(env: GridEnv, dag: SubgoalDag, config: TeacherConfig | None = None,
               run_id: str = "", allocated: int = 500,
               potential_based: bool = True) -> RunResult:
    """AgRS (oracle graph) or LgRS (LLM graph): one policy, graph-shaped reward."""
    cfg = dataclasses.replace(config or TeacherConfig(), allocated=allocated)
    flat = flat_dag(dag)
    shaping = make_shaping(dag, cfg.student.gamma, potential_based)
    result = run_lgts(flat, env, cfg, run_id, shaping=shaping)
    return _single_policy_eval(result, flat, env, cfg)


def run_agts(env: GridEnv, oracle: SubgoalDag, config: TeacherConfig | None = None,
             run_id: str = "") -> RunResult:
    return run_lgts(oracle, env, config, run_id)


def run_tscl(env: GridEnv, dag: SubgoalDag, config: TeacherConfig | None = None,
             run_id: str = "", task_set: list[TaskEdge] | None = None) -> RunResult:
    """Teacher over all tasks at once; every episode starts at env reset.

    Stops when a task into the goal converges, or the budget runs out. The
    reported success rate is the best greedy full-task success among the
    goal-bound policies.
    """
    cfg = config or TeacherConfig()
    tasks_all = list(task_set) if task_set is not None else list(dag.edges)
    rng = random.Random(f"teacher:{cfg.seed}")
    ledger = InteractionLedger(cfg.budget)
    metrics = RunMetrics(run_id)
    state = TeacherState(alpha=cfg.alpha, epsilon=cfg.epsilon,
                         policy_factory=lambda e: make_policy(cfg, e),
                         task_factory=lambda e: make_task(dag, e, env, cfg.allocated,
                                                          cfg.step_penalty))
    state.activate(tasks_all)
    status = "running"
    step = 0
    while status == "running":
        if ledger.exhausted:
            status = "budget_exhausted"
            break
        e = sample_task(state, rng)
        step += 1
        task, policy, stats = state.tasks[e], state.policies[e], state.stats[e]
        try:
            burst = train_for(policy, task, [], cfg.x, ledger, stats, cfg.reset_retries,
                              require_src=False)
            update_teacher(state, e, burst.g)
            stats.g_history.append(burst.g)
            rate = None
            h = stats.g_history
            if burst.g > cfg.eval_trigger and len(h) >= 2 and abs(h[-1] - h[-2]) < cfg.mu:
                rate = evaluate(policy, task, [], cfg.eval_episodes, ledger,
                                cfg.reset_retries, require_src=False)
                stats.success_rate = rate
        except BudgetExhausted:
            status = "budget_exhausted"
            metrics.step(step, str(e), 0.0, None, ledger.total)
            break
        except ResetFailure:  # pragma: no cover - resets without a chain cannot fail
            status = "reset_failure"
            break
        metrics.step(step, str(e), burst.g, rate, ledger.total,
                     {str(k): v for k, v in state.qvals.items()})
        if rate is not None and rate >= cfg.eta and e.dst == dag.goal:
            metrics.event(step, str(e), "converged", ledger.total)
            status = "success"

    final = 0.0
    for e in tasks_all:
        if e.dst == dag.goal:
            final = max(final, evaluate(state.policies[e], state.tasks[e], [],
                                        cfg.final_eval_episodes, require_src=False))
    metrics.finish(step, status, ledger.total, final, by_kind=dict(ledger.by_kind))
    return RunResult(status=status, policy_list=[], chain_edges=[],
                     edge_policy_map=dict(state.policies),
                     total_interactions=ledger.total, metrics=metrics, ledger=ledger,
                     final_success_rate=final, teacher=state)
