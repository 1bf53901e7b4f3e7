"""Sub-goal DAG construction, the graph queries used by the teacher, and
exact graph edit distance."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

from .symbolic import SymbolicInfo, SymbolicState, parse_state_expr


class GraphError(ValueError):
    pass


class NoGoalPath(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class UnknownEdge(GraphError, KeyError):
    pass


class TooLarge(GraphError):
    pass


class DagParseError(GraphError):
    pass


class TaskEdge(NamedTuple):
    src: SymbolicState
    dst: SymbolicState

    def __str__(self):
        return f"{self.src} -> {self.dst}"


@dataclass(frozen=True)
class SubgoalDag:
    nodes: tuple[SymbolicState, ...]
    edges: tuple[TaskEdge, ...]
    start: SymbolicState
    goal: SymbolicState

    def __post_init__(self):
        adj: dict[SymbolicState, list[SymbolicState]] = {v: [] for v in self.nodes}
        for e in self.edges:
            adj[e.src].append(e.dst)
        object.__setattr__(self, "_adj", {k: tuple(v) for k, v in adj.items()})
        object.__setattr__(self, "_edge_set", frozenset(self.edges))
        if topological_order(self.nodes, self._adj) is None:
            raise GraphError("graph has a cycle")

    def adjacency(self) -> dict[SymbolicState, tuple[SymbolicState, ...]]:
        """Out-neighbour lists per node (insertion order)."""
        return dict(self._adj)

    def has_edge(self, edge: TaskEdge) -> bool:
        return edge in self._edge_set

    def node_index(self, v: SymbolicState) -> int:
        try:
            return self.nodes.index(v)
        except ValueError:
            raise UnknownNode(str(v)) from None

    def name(self, v: SymbolicState) -> str:
        """Short ``qK`` name by insertion order; handy in logs and plots."""
        return f"q{self.node_index(v)}"

    def edge_name(self, e: TaskEdge) -> str:
        return f"{self.name(e.src)}->{self.name(e.dst)}"


def topological_order(nodes, adj) -> list | None:
    indeg = {v: 0 for v in nodes}
    for v in nodes:
        for w in adj.get(v, ()):
            indeg[w] += 1
    queue = deque(v for v in nodes if indeg[v] == 0)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in adj.get(v, ()):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return order if len(order) == len(indeg) else None


def _reachable(adj, src, blocked=None) -> set:
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        for w in adj.get(v, ()):
            if w not in seen and w != blocked:
                seen.add(w)
                stack.append(w)
    return seen


def build_dag(paths: Iterable, start: SymbolicState | None = None,
              goal: SymbolicState | None = None) -> SubgoalDag:
    """Merge ordered sub-goal paths into a DAG.

    Each path's first and last elements are identified with the start and
    goal nodes (defaulting to the first path's endpoints). Edges are inserted
    in path order; self-loops and edges closing a cycle are skipped, then
    nodes off every start-to-goal path are pruned.
    """
    seqs = [list(getattr(p, "states", p)) for p in paths]
    if not seqs:
        raise NoGoalPath("no paths given")
    start = seqs[0][0] if start is None else start
    goal = seqs[0][-1] if goal is None else goal

    nodes: list[SymbolicState] = [start]
    adj: dict[SymbolicState, list[SymbolicState]] = {start: []}
    edges: list[TaskEdge] = []
    for seq in seqs:
        if len(seq) < 2:
            continue
        seq = [start] + seq[1:-1] + [goal]
        for v in seq:
            if v not in adj:
                adj[v] = []
                nodes.append(v)
        for u, v in zip(seq, seq[1:]):
            if u == v or v in adj[u]:
                continue
            if u in _reachable(adj, v):
                continue
            adj[u].append(v)
            edges.append(TaskEdge(u, v))

    if goal not in adj:
        raise NoGoalPath("goal never appears")
    fwd = _reachable(adj, start)
    radj: dict[SymbolicState, list[SymbolicState]] = {v: [] for v in nodes}
    for e in edges:
        radj[e.dst].append(e.src)
    bwd = _reachable(radj, goal)
    keep = fwd & bwd
    if start not in keep or goal not in keep:
        raise NoGoalPath("no directed path from start to goal")
    kept_nodes = tuple(v for v in nodes if v in keep)
    kept_edges = tuple(e for e in edges if e.src in keep and e.dst in keep)
    return SubgoalDag(kept_nodes, kept_edges, start, goal)


def successors(dag: SubgoalDag, v: SymbolicState) -> set[SymbolicState]:
    if v not in dag._adj:
        raise UnknownNode(str(v))
    return set(dag._adj[v])


def outgoing_tasks(dag: SubgoalDag, v: SymbolicState) -> set[TaskEdge]:
    if v not in dag._adj:
        raise UnknownNode(str(v))
    return {TaskEdge(v, w) for w in dag._adj[v]}


def discarded_tasks(dag: SubgoalDag, learned: TaskEdge) -> set[TaskEdge]:
    """Edges made redundant once ``learned.dst`` is reachable.

    An edge is discarded when every start-to-goal path through it goes on
    to visit ``learned.dst`` afterwards, i.e. its head is ``learned.dst`` or
    cannot reach the goal without passing ``learned.dst``.
    """
    if not dag.has_edge(learned):
        raise UnknownEdge(str(learned))
    p = learned.dst
    # nodes that reach the goal while avoiding p
    radj: dict[SymbolicState, list[SymbolicState]] = {v: [] for v in dag.nodes}
    for e in dag.edges:
        radj[e.dst].append(e.src)
    avoid_p = _reachable(radj, dag.goal, blocked=p) if p != dag.goal else set()
    return {e for e in dag.edges
            if e != learned and (e.dst == p or e.dst not in avoid_p)}


def next_tasks(dag: SubgoalDag, learned: TaskEdge, discarded: Iterable[TaskEdge],
               learned_set: Iterable[TaskEdge] = ()) -> set[TaskEdge]:
    if not dag.has_edge(learned):
        raise UnknownEdge(str(learned))
    return outgoing_tasks(dag, learned.dst) - set(discarded) - set(learned_set)


def shortest_hops(dag: SubgoalDag, target: SymbolicState) -> dict[SymbolicState, int]:
    """BFS hop counts from every node that can reach ``target``."""
    radj: dict[SymbolicState, list[SymbolicState]] = {v: [] for v in dag.nodes}
    for e in dag.edges:
        radj[e.dst].append(e.src)
    dist = {target: 0}
    queue = deque([target])
    while queue:
        v = queue.popleft()
        for u in radj[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


# -- graph edit distance ---------------------------------------------------

MAX_GED_NODES = 12


def ged(labels1: Sequence[Hashable], edges1: Iterable[tuple[int, int]],
        labels2: Sequence[Hashable], edges2: Iterable[tuple[int, int]],
        node_match: Callable[[Hashable, Hashable], bool] | None = None,
        max_nodes: int = MAX_GED_NODES) -> int:
    """Exact edit distance between two directed graphs.

    Unit costs for node insertion/deletion and edge insertion/deletion;
    nodes may only be substituted when ``node_match`` accepts the pair
    (default: equal labels). Depth-first branch and bound over partial
    injections of graph-1 nodes into graph-2 nodes.
    """
    n1, n2 = len(labels1), len(labels2)
    if n1 > max_nodes or n2 > max_nodes:
        raise TooLarge(f"exact GED limited to {max_nodes} nodes")
    match = node_match or (lambda a, b: a == b)
    E1 = set(edges1)
    E2 = set(edges2)
    compat = [[match(labels1[i], labels2[j]) for j in range(n2)] for i in range(n1)]

    # assign high-degree nodes first so edge costs show up early
    deg1 = [0] * n1
    for a, b in E1:
        deg1[a] += 1
        deg1[b] += 1
    order = sorted(range(n1), key=lambda i: -deg1[i])

    best = n1 + n2 + len(E1) + len(E2)
    mapping: dict[int, int] = {}
    used = [False] * n2

    def remaining_bound(k: int) -> int:
        assigned = set(order[:k])
        rem1 = n1 - k
        free2 = n2 - len([1 for u in used if u])
        e1 = sum(1 for a, b in E1 if a not in assigned or b not in assigned)
        e2 = sum(1 for a, b in E2 if not used[a] or not used[b])
        return abs(rem1 - free2) + abs(e1 - e2)

    def edge_cost(i: int, j: int | None) -> int:
        # edges between node i and already-assigned nodes
        cost = 0
        for other, img in mapping.items():
            for a, b, x, y in ((i, other, j, img), (other, i, img, j)):
                in1 = (a, b) in E1
                if x is None or y is None:
                    cost += in1
                else:
                    cost += in1 != ((x, y) in E2)
        if (i, i) in E1:
            cost += not (j is not None and (j, j) in E2)
        elif j is not None and (j, j) in E2:
            cost += 1
        return cost

    def finish() -> int:
        cost = 0
        for j in range(n2):
            if not used[j]:
                cost += 1
        for a, b in E2:
            if not used[a] or not used[b]:
                cost += 1
        return cost

    def search(k: int, cost: int) -> None:
        nonlocal best
        if cost + remaining_bound(k) >= best:
            return
        if k == n1:
            best = min(best, cost + finish())
            return
        i = order[k]
        for j in range(n2):
            if used[j] or not compat[i][j]:
                continue
            c = edge_cost(i, j)
            mapping[i] = j
            used[j] = True
            search(k + 1, cost + c)
            used[j] = False
            del mapping[i]
        c = 1 + edge_cost(i, None)
        mapping[i] = None
        search(k + 1, cost + c)
        del mapping[i]

    search(0, 0)
    return best


def _as_indexed(dag: SubgoalDag):
    idx = {v: i for i, v in enumerate(dag.nodes)}
    return list(dag.nodes), [(idx[e.src], idx[e.dst]) for e in dag.edges]


def graph_edit_distance(g1: SubgoalDag, g2: SubgoalDag, structural: bool = False) -> int:
    """Node/edge edits needed to make the two DAGs isomorphic.

    By default nodes only match when their symbolic states are equal;
    ``structural=True`` ignores labels entirely.
    """
    l1, e1 = _as_indexed(g1)
    l2, e2 = _as_indexed(g2)
    match = (lambda a, b: True) if structural else None
    return ged(l1, e1, l2, e2, node_match=match)


# -- edge-list files -------------------------------------------------------

def dump_dag(dag: SubgoalDag) -> str:
    lines = ["# subgoal dag", f"start: {dag.start}", f"goal: {dag.goal}"]
    lines += [f"{e.src} -> {e.dst}" for e in dag.edges]
    return "\n".join(lines) + "\n"


def save_dag(dag: SubgoalDag, path: str | Path) -> None:
    Path(path).write_text(dump_dag(dag))


def parse_dag(text: str, sigma: SymbolicInfo | None = None) -> SubgoalDag:
    start = goal = None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("start:"):
                start = parse_state_expr(line[6:], sigma)
            elif line.startswith("goal:"):
                goal = parse_state_expr(line[5:], sigma)
            elif "->" in line:
                a, b = line.split("->", 1)
                pairs.append((parse_state_expr(a, sigma), parse_state_expr(b, sigma)))
            else:
                raise DagParseError(f"line {lineno}: cannot parse {raw!r}")
        except ValueError as exc:
            if isinstance(exc, DagParseError):
                raise
            raise DagParseError(f"line {lineno}: {exc}") from exc
    if start is None or goal is None:
        raise DagParseError("missing start/goal header")
    if not pairs:
        raise DagParseError("no edges")
    nodes: list[SymbolicState] = []
    for a, b in pairs:
        for v in (a, b):
            if v not in nodes:
                nodes.append(v)
    try:
        dag = SubgoalDag(tuple(nodes), tuple(TaskEdge(a, b) for a, b in pairs), start, goal)
    except GraphError as exc:
        raise DagParseError(str(exc)) from exc
    if start not in nodes or goal not in nodes:
        raise DagParseError("start/goal not among edge endpoints")
    return dag


def load_dag(path: str | Path, sigma: SymbolicInfo | None = None) -> SubgoalDag:
    return parse_dag(Path(path).read_text(), sigma)
