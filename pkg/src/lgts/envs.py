"""Deterministic grid worlds with labeling functions.

Three domains share one engine: DoorKey (two keys, a locked door, lava and a
goal), DoorKey with pickupable distractor objects, and Search-and-Rescue
(key, door, extinguisher, fire, survivor).

Low-level states are small immutable tuples so they hash cheaply; the tabular
learner keys its table on :func:`state_key`.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .symbolic import Literal, SymbolicState


class EnvError(ValueError):
    pass


class LayoutParseError(EnvError):
    pass


class InvariantViolation(EnvError):
    pass


class InvalidState(EnvError):
    pass


class Action(IntEnum):
    FORWARD = 0
    LEFT = 1
    RIGHT = 2
    PICKUP = 3
    DROP = 4
    TOGGLE = 5


N_ACTIONS = len(Action)


class Terminal(Enum):
    NONE = "none"
    LAVA = "lava"
    GOAL = "goal"
    TIMEOUT = "timeout"


# cell codes
EMPTY, WALL, LAVA, GOAL, DOOR, FIRE = range(6)

# east, south, west, north
DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
_FACING = {">": 0, "v": 1, "<": 2, "^": 3}

# object chars -> (entity name, kind)
OBJECT_CHARS = {
    "1": ("Key_1", "key"),
    "2": ("Key_2", "key"),
    "K": ("Key", "key"),
    "X": ("Extinguisher", "tool"),
    "S": ("Survivor", "survivor"),
    "a": ("Apple", "distractor"),
    "p": ("Plate", "distractor"),
    "f": ("Fruit", "distractor"),
}
CELL_CHARS = {".": EMPTY, "#": WALL, "L": LAVA, "G": GOAL, "D": DOOR, "F": FIRE}
_CELL_OUT = {EMPTY: ".", WALL: "#", LAVA: "L", GOAL: "G", DOOR: "D", FIRE: "F"}


class LowState(NamedTuple):
    agent_pos: int               # cell index y * width + x
    agent_dir: int               # index into DIRS
    carrying: int                # object index, -1 when empty
    doors: tuple[bool, ...]      # open flag per door
    objects: tuple[int, ...]     # cell per object, -1 when held or removed
    fire_out: bool
    rescued: bool
    step_count: int


class StepOutcome(NamedTuple):
    next: LowState
    terminal: Terminal


def state_key(s: LowState) -> tuple:
    """Everything but the step counter; hashes reproducibly across processes."""
    return s[:7]


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    cells: tuple[int, ...]
    agent_start: tuple[int, int]              # (cell index, facing)
    objects: tuple[tuple[str, str, int], ...]  # (entity, kind, cell)
    domain: str = "doorkey"
    outside: str = "OutsideRoom"
    goal_name: str = "Green_Goal"
    door_names: tuple[str, ...] = ("Door",)
    fire_name: str = "Fire"
    distractors: tuple[str, ...] = ()
    distractor_count: tuple[int, int] = (1, 3)
    name: str = ""

    def cell(self, x: int, y: int) -> int:
        return self.cells[y * self.width + x]

    def xy(self, idx: int) -> tuple[int, int]:
        return idx % self.width, idx // self.width

    def render(self) -> str:
        """ASCII dump of the static layout in the file format."""
        chars = [_CELL_OUT[c] for c in self.cells]
        by_name = {v[0]: k for k, v in OBJECT_CHARS.items()}
        for name, _, cell in self.objects:
            chars[cell] = by_name[name]
        pos, facing = self.agent_start
        chars[pos] = ">v<^"[facing]
        rows = ["".join(chars[y * self.width:(y + 1) * self.width]) for y in range(self.height)]
        return "\n".join(rows)


def parse_layout(text: str, name: str = "") -> GridLayout:
    """Parse the layout text format.

    ``key: value`` header lines, a ``---`` separator, then one character per
    cell. ``width`` and ``height`` are required header keys.
    """
    if "---" not in text:
        raise LayoutParseError("missing '---' between header and grid")
    head, body = text.split("---", 1)
    meta: dict[str, str] = {}
    for raw in head.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise LayoutParseError(f"bad header line {raw!r}")
        k, v = line.split(":", 1)
        meta[k.strip()] = v.strip()
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except (KeyError, ValueError) as exc:
        raise LayoutParseError("header needs integer width and height") from exc

    rows = [r.rstrip("\n") for r in body.strip("\n").splitlines()]
    rows = [r.strip() for r in rows if r.strip()]
    if len(rows) != height or any(len(r) != width for r in rows):
        raise LayoutParseError(f"grid is not {width}x{height}")

    cells: list[int] = []
    objects: list[tuple[str, str, int]] = []
    start = None
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            idx = y * width + x
            if ch in CELL_CHARS:
                cells.append(CELL_CHARS[ch])
            elif ch in OBJECT_CHARS:
                cells.append(EMPTY)
                ent, kind = OBJECT_CHARS[ch]
                objects.append((ent, kind, idx))
            elif ch in _FACING:
                cells.append(EMPTY)
                if start is not None:
                    raise InvariantViolation("more than one agent start")
                start = (idx, _FACING[ch])
            else:
                raise LayoutParseError(f"unknown cell char {ch!r} at ({x},{y})")
    if start is None:
        raise InvariantViolation("no agent start")

    domain = meta.get("domain", "doorkey")
    n_doors = cells.count(DOOR)
    if "doors" in meta:
        door_names = tuple(d.strip() for d in meta["doors"].split(","))
    else:
        door_names = ("Door",) if n_doors == 1 else tuple(f"Door_{i + 1}" for i in range(n_doors))
    distractors = tuple(d.strip() for d in meta.get("distractors", "").split(",") if d.strip())
    lo, _, hi = meta.get("distractor_count", "1-3").partition("-")
    layout = GridLayout(
        width=width, height=height, cells=tuple(cells), agent_start=start,
        objects=tuple(objects), domain=domain,
        outside=meta.get("outside", "OutsideRoom"),
        goal_name=meta.get("goal", "Green_Goal"),
        door_names=door_names,
        fire_name=meta.get("fire", "Fire"),
        distractors=distractors,
        distractor_count=(int(lo), int(hi or lo)),
        name=meta.get("name", name),
    )
    validate_layout(layout)
    return layout


def validate_layout(layout: GridLayout) -> None:
    w, h = layout.width, layout.height
    if len(layout.cells) != w * h:
        raise InvariantViolation("cell count does not match size")
    for i, c in enumerate(layout.cells):
        x, y = i % w, i // w
        if (x in (0, w - 1) or y in (0, h - 1)) and c != WALL:
            raise InvariantViolation("layout border must be walls")
    n_goal = layout.cells.count(GOAL)
    if layout.domain in ("doorkey", "doorkey_distractors") and n_goal != 1:
        raise InvariantViolation(f"DoorKey needs exactly one goal cell, found {n_goal}")
    if layout.domain == "search_rescue":
        kinds = {k for _, k, _ in layout.objects}
        if FIRE not in layout.cells or "survivor" not in kinds or "tool" not in kinds:
            raise InvariantViolation("search_rescue needs fire, survivor and extinguisher")
    if len(layout.door_names) != layout.cells.count(DOOR):
        raise InvariantViolation("door names do not match door cells")
    if layout.cells[layout.agent_start[0]] != EMPTY:
        raise InvariantViolation("agent must start on an empty cell")
    names = [o[0] for o in layout.objects]
    if len(set(names)) != len(names):
        raise InvariantViolation("duplicate object entity")


def load_layout(path: str | Path) -> GridLayout:
    """Load a layout file, or a bundled layout by bare name (``doorkey_8x8``)."""
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".layout") and len(p.parts) == 1:
        res = resources.files("lgts.data.layouts") / f"{p.stem}.layout"
        if res.is_file():
            return parse_layout(res.read_text(), name=p.stem)
    try:
        text = p.read_text()
    except OSError as exc:
        raise LayoutParseError(f"cannot read layout {path}: {exc}") from exc
    return parse_layout(text, name=p.stem)


def _region(layout: GridLayout, seed_cell: int) -> frozenset[int]:
    w = layout.width
    seen = {seed_cell}
    stack = [seed_cell]
    while stack:
        c = stack.pop()
        x, y = c % w, c // w
        for dx, dy in DIRS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < layout.height:
                n = ny * w + nx
                if n not in seen and layout.cells[n] not in (WALL, DOOR):
                    seen.add(n)
                    stack.append(n)
    return frozenset(seen)


@dataclass
class GridEnv:
    """A labeled, deterministic grid MDP.

    ``seed`` only drives the optional placement of distractor objects;
    ``max_steps`` is the episode horizon T.
    """

    layout: GridLayout
    seed: int = 0
    max_steps: int = 100
    object_names: tuple[str, ...] = field(init=False)
    object_kinds: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        self._place_objects(self.seed)
        lay = self.layout
        self.width = lay.width
        self._cells = lay.cells
        self._door_at = {c: i for i, c in enumerate(i for i, v in enumerate(lay.cells) if v == DOOR)}
        self._deltas = tuple(dy * lay.width + dx for dx, dy in DIRS)
        self._outside = _region(lay, lay.agent_start[0])
        self._label_cache: dict[tuple, SymbolicState] = {}
        goal_cells = [i for i, v in enumerate(lay.cells) if v == GOAL]
        self._goal_cells = frozenset(goal_cells)

    def _place_objects(self, seed: int) -> None:
        lay = self.layout
        objs = list(lay.objects)
        if lay.distractors:
            rng = random.Random(f"distractors:{seed}")
            lo, hi = lay.distractor_count
            count = rng.randint(lo, min(hi, len(lay.distractors)))
            taken = {o[2] for o in objs} | {lay.agent_start[0]}
            outside = _region(lay, lay.agent_start[0])
            free = sorted(c for c in outside
                          if lay.cells[c] == EMPTY and c not in taken)
            names = rng.sample(list(lay.distractors), count)
            cells = rng.sample(free, count)
            objs += [(n, "distractor", c) for n, c in zip(names, cells)]
        self.object_names = tuple(o[0] for o in objs)
        self.object_kinds = tuple(o[1] for o in objs)
        self._object_start = tuple(o[2] for o in objs)
        self._pickupable = tuple(k != "survivor" for k in self.object_kinds)
        self._is_key = tuple(k == "key" for k in self.object_kinds)
        self._is_tool = tuple(k == "tool" for k in self.object_kinds)
        self._is_survivor = tuple(k == "survivor" for k in self.object_kinds)

    # -- MDP interface -----------------------------------------------------

    def reset(self, seed: int | None = None) -> LowState:
        if seed is not None and seed != self.seed and self.layout.distractors:
            self.seed = seed
            self._place_objects(seed)
            self._label_cache.clear()
        pos, facing = self.layout.agent_start
        return LowState(pos, facing, -1, (False,) * len(self._door_at),
                        self._object_start, False, False, 0)

    def is_terminal(self, s: LowState) -> bool:
        c = self._cells[s.agent_pos]
        return c == LAVA or c == GOAL or s.rescued or s.step_count >= self.max_steps

    def step(self, s: LowState, action: int) -> StepOutcome:
        cells = self._cells
        pos = s.agent_pos
        here = cells[pos]
        if here == LAVA or here == GOAL or s.rescued or s.step_count >= self.max_steps:
            raise InvalidState("cannot step a terminal state")
        d = s.agent_dir
        carrying = s.carrying
        doors = s.doors
        objects = s.objects
        fire_out = s.fire_out
        rescued = s.rescued
        terminal = Terminal.NONE

        if action == 1:
            d = (d - 1) % 4
        elif action == 2:
            d = (d + 1) % 4
        else:
            front = pos + self._deltas[d]
            fc = cells[front]
            occupant = -1
            for i, c in enumerate(objects):
                if c == front:
                    occupant = i
                    break
            if action == 0:
                if fc == WALL or occupant >= 0:
                    pass
                elif fc == DOOR and not doors[self._door_at[front]]:
                    pass
                elif fc == FIRE and not fire_out:
                    pass
                else:
                    pos = front
                    if fc == LAVA:
                        terminal = Terminal.LAVA
                    elif fc == GOAL:
                        terminal = Terminal.GOAL
            elif action == 3:
                if carrying < 0 and occupant >= 0 and self._pickupable[occupant]:
                    carrying = occupant
                    objects = objects[:occupant] + (-1,) + objects[occupant + 1:]
            elif action == 4:
                if carrying >= 0 and occupant < 0 and fc == EMPTY:
                    objects = objects[:carrying] + (front,) + objects[carrying + 1:]
                    carrying = -1
            elif action == 5:
                if fc == DOOR:
                    if carrying >= 0 and self._is_key[carrying]:
                        k = self._door_at[front]
                        doors = doors[:k] + (not doors[k],) + doors[k + 1:]
                elif fc == FIRE:
                    if not fire_out and carrying >= 0 and self._is_tool[carrying]:
                        fire_out = True
                elif occupant >= 0 and self._is_survivor[occupant] and fire_out:
                    rescued = True
                    objects = objects[:occupant] + (-1,) + objects[occupant + 1:]
                    terminal = Terminal.GOAL

        n = s.step_count + 1
        nxt = LowState(pos, d, carrying, doors, objects, fire_out, rescued, n)
        if terminal is Terminal.NONE and n >= self.max_steps:
            terminal = Terminal.TIMEOUT
        return StepOutcome(nxt, terminal)

    # -- labeling ----------------------------------------------------------

    def label(self, s: LowState) -> SymbolicState:
        pos = s.agent_pos
        sig = (s.carrying, s.doors, pos in self._outside, pos in self._goal_cells,
               s.fire_out, s.rescued)
        lab = self._label_cache.get(sig)
        if lab is None:
            lab = self._label_cache[sig] = self._compute_label(*sig)
        return lab

    def _compute_label(self, carrying, doors, outside, on_goal, fire_out, rescued) -> SymbolicState:
        lay = self.layout
        lits = []
        if carrying >= 0:
            lits.append(Literal("Holding", (self.object_names[carrying],)))
        for name, is_open in zip(lay.door_names, doors):
            if is_open:
                lits.append(Literal("Unlocked", (name,)))
        if outside:
            lits.append(Literal("At", (lay.outside,)))
        if on_goal:
            lits.append(Literal("At", (lay.goal_name,)))
        if fire_out:
            lits.append(Literal("Extinguished", (lay.fire_name,)))
        if rescued:
            lits.append(Literal("Rescued", ("Survivor",)))
        return SymbolicState(frozenset(lits))

    # -- debugging ---------------------------------------------------------

    def render(self, s: LowState) -> str:
        lay = self.layout
        chars = [_CELL_OUT[c] for c in lay.cells]
        if s.fire_out:
            chars = ["." if c == "F" else c for c in chars]
        for d, k in self._door_at.items():
            if s.doors[k]:
                chars[d] = "_"
        by_name = {v[0]: k for k, v in OBJECT_CHARS.items()}
        for name, cell in zip(self.object_names, s.objects):
            if cell >= 0:
                chars[cell] = by_name[name]
        chars[s.agent_pos] = ">v<^"[s.agent_dir]
        rows = ["".join(chars[y * lay.width:(y + 1) * lay.width]) for y in range(lay.height)]
        held = self.object_names[s.carrying] if s.carrying >= 0 else "-"
        return "\n".join(rows) + f"\nholding: {held}  step: {s.step_count}"


def make_env(layout: str | Path | GridLayout, seed: int = 0, max_steps: int = 100) -> GridEnv:
    lay = layout if isinstance(layout, GridLayout) else load_layout(layout)
    return GridEnv(lay, seed=seed, max_steps=max_steps)
