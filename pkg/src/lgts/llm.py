"""Prompting an LLM for sub-goal paths and turning its answer into states.

Providers are anything with ``complete(prompt: PromptText) -> str``. Two
ship here: :class:`FixtureProvider` replays canned answers from a YAML file
and :class:`HttpChatProvider` talks to a chat-completion style endpoint.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol

import httpx
import yaml

from .symbolic import (SymbolicError, SymbolicInfo, SymbolicState, parse_state_expr,
                       state_satisfies)


class LlmError(RuntimeError):
    pass


class UnknownTemplate(LlmError, KeyError):
    pass


class NoPathsFound(LlmError):
    pass


class LlmUnavailable(LlmError):
    pass


class NoValidPaths(LlmError):
    pass


class UnknownScenario(LlmError, KeyError):
    pass


@dataclass(frozen=True)
class PromptText:
    text: str
    n: int

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class SubgoalPath:
    states: tuple[SymbolicState, ...]

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __str__(self):
        return " -> ".join(str(s) for s in self.states)

    def renamed(self, mapping: Mapping[str, str]) -> "SubgoalPath":
        return SubgoalPath(tuple(s.renamed(mapping) for s in self.states))


class PathCheck(Enum):
    OK = "ok"
    START_VIOLATION = "start_violation"
    GOAL_VIOLATION = "goal_violation"


class LlmProvider(Protocol):
    def complete(self, prompt: PromptText) -> str: ...


# -- prompt ------------------------------------------------------------------

_FORMAT_RULES = """\
Answer format:
- Write each sequence as a numbered list, one high-level state per line.
- Put a header line "Path k:" before the k-th list.
- A state is a conjunction of atoms such as Pred(Arg) joined with "&".
- Use only the entities and predicates listed above.
- The first state of every list must be the initial state and the last state
  must be the goal state."""


def _inventory(sigma: SymbolicInfo) -> list[str]:
    lines = ["Entities:"]
    lines += [f"  {name}" for name in sigma.entity_names]
    lines.append("Predicates:")
    lines += [f"  {p.name}/{p.arity}" for p in sigma.predicates]
    return lines


def _typing_hints(sigma: SymbolicInfo) -> list[str]:
    lines = ["Argument types:"]
    for p in sigma.predicates:
        allowed = (sigma.applicable or {}).get(p.name)
        if allowed:
            lines.append(f"  {p.name} takes one of: " + ", ".join(allowed))
        else:
            lines.append(f"  {p.name} takes {p.arity} entity argument(s)")
    return lines


def build_prompt(sigma: SymbolicInfo, n: int, template: str = "default") -> PromptText:
    """Deterministic prompt asking for ``n`` ordered sub-goal sequences."""
    if template not in ("default", "typed"):
        raise UnknownTemplate(template)
    if n < 1:
        raise ValueError("n must be >= 1")
    noun = "sequence" if n == 1 else "sequences"
    lines = [
        f"Give {n} distinct {noun} of high-level states that lead from the "
        "initial state to the goal state.",
        "Make no assumptions about predicates whose truth value is unknown.",
        "",
        f"Initial state: {sigma.q0}",
        f"Goal state: {sigma.qg}",
        "",
        *_inventory(sigma),
        "",
        *(_typing_hints(sigma) + [""] if template == "typed" else []),
        _FORMAT_RULES,
    ]
    return PromptText("\n".join(lines) + "\n", n)


def build_reprompt(sigma: SymbolicInfo, missing: int, problems: list[str],
                   template: str = "default") -> PromptText:
    base = build_prompt(sigma, missing, template)
    notes = ["Some of your previous sequences were rejected:"]
    notes += [f"- {p}" for p in problems] or ["- no sequence could be read"]
    notes.append(f"Please give {missing} new sequence{'s' if missing != 1 else ''}.")
    return PromptText("\n".join(notes) + "\n\n" + base.text, missing)


# -- parsing -----------------------------------------------------------------

_ITEM = re.compile(r"^\s*(?:(\d+)[.)]|[-*•])\s+(.*?)\s*$")
_HEADER = re.compile(r"^\s*(?:\*\*)?\s*(?:path|sequence|plan|option)\s*\d*\s*[:.)]?\s*(?:\*\*)?\s*",
                     re.IGNORECASE)
_ARROW = re.compile(r"\s*(?:->|→|=>)\s*")


def _clean(item: str) -> str:
    item = item.strip().strip("`").strip()
    return item.rstrip(".,;").strip()


def _parse_items(items: list[str], sigma: SymbolicInfo | None) -> SubgoalPath | None:
    try:
        states = tuple(parse_state_expr(_clean(i), sigma) for i in items)
    except SymbolicError:
        return None
    if len(states) < 2 or any(not s.literals for s in states):
        return None
    return SubgoalPath(states)


def parse_response(text: str, sigma: SymbolicInfo | None = None) -> list[SubgoalPath]:
    """Pull every sub-goal list out of free LLM text.

    A list is a run of numbered (or bulleted) lines; it ends at any other
    line or when the numbering restarts at 1. A line whose body chains states
    with ``->`` is a whole path on its own. A list with an item that does not
    parse is dropped; the others survive.
    """
    raw_lists: list[list[str]] = []
    current: list[str] | None = None

    def close():
        nonlocal current
        if current:
            raw_lists.append(current)
        current = None

    for line in text.splitlines():
        body = _HEADER.sub("", line, count=1) if _HEADER.match(line) else line
        m = _ITEM.match(body)
        content = m.group(2) if m else body.strip()
        if _ARROW.search(content) and len(_ARROW.split(content)) >= 2:
            close()
            raw_lists.append([p for p in _ARROW.split(content.strip()) if p.strip()])
            continue
        if m:
            if m.group(1) == "1":
                close()
            if current is None:
                current = []
            current.append(content)
        else:
            close()
    close()

    paths = [p for p in (_parse_items(items, sigma) for items in raw_lists) if p is not None]
    if not paths:
        raise NoPathsFound("no parsable sub-goal list in response")
    return paths


def validate_path(path: SubgoalPath | list, sigma: SymbolicInfo) -> PathCheck:
    states = list(path)
    if len(states) < 2:
        raise ValueError("a path needs at least two states")
    if not state_satisfies(states[0], sigma.q0):
        return PathCheck.START_VIOLATION
    if not state_satisfies(states[-1], sigma.qg):
        return PathCheck.GOAL_VIOLATION
    return PathCheck.OK


# -- session -----------------------------------------------------------------

@dataclass
class LlmSession:
    attempts: int = 0
    transcripts: list[tuple[str, str]] = field(default_factory=list)
    accepted_paths: list[SubgoalPath] = field(default_factory=list)
    rejected: list[tuple[SubgoalPath | None, str]] = field(default_factory=list)

    def dump(self) -> str:
        out = []
        for k, (prompt, response) in enumerate(self.transcripts, 1):
            out.append(f"=== attempt {k} prompt ===\n{prompt.rstrip()}\n")
            out.append(f"=== attempt {k} response ===\n{response.rstrip()}\n")
        out.append("=== accepted paths ===")
        out += [str(p) for p in self.accepted_paths]
        return "\n".join(out) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump())


def query_paths(provider: LlmProvider, sigma: SymbolicInfo, n: int, max_retries: int = 5,
                template: str = "default") -> tuple[list[SubgoalPath], LlmSession]:
    """Ask for ``n`` paths, re-asking for the missing ones after rejections.

    Stops as soon as ``n`` distinct valid paths are in hand or after
    ``max_retries`` attempts; whatever was collected (at least one path) is
    returned.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    session = LlmSession()
    prompt = build_prompt(sigma, n, template)
    while session.attempts < max_retries and len(session.accepted_paths) < n:
        session.attempts += 1
        try:
            response = provider.complete(prompt)
        except LlmUnavailable:
            raise
        except Exception as exc:  # provider-specific failures
            raise LlmUnavailable(f"provider failed: {exc}") from exc
        session.transcripts.append((prompt.text, response))

        problems: list[str] = []
        try:
            candidates = parse_response(response, sigma)
        except NoPathsFound:
            candidates = []
            problems.append("no numbered list of valid states could be read")
        for path in candidates:
            if len(session.accepted_paths) >= n:
                break
            verdict = validate_path(path, sigma)
            if verdict is PathCheck.START_VIOLATION:
                msg = f"{path}: first element must be {sigma.q0}"
            elif verdict is PathCheck.GOAL_VIOLATION:
                msg = f"{path}: last element must be {sigma.qg}"
            elif path in session.accepted_paths:
                msg = f"{path}: duplicate of an earlier sequence"
            else:
                session.accepted_paths.append(path)
                continue
            problems.append(msg)
            session.rejected.append((path, msg))
        missing = n - len(session.accepted_paths)
        if missing > 0:
            prompt = build_reprompt(sigma, missing, problems, template)
    if not session.accepted_paths:
        raise NoValidPaths(f"no valid path after {session.attempts} attempts")
    return list(session.accepted_paths), session


def rename_paths(paths: list[SubgoalPath], mapping: Mapping[str, str]) -> list[SubgoalPath]:
    """Map synonym-named paths back to canonical names."""
    return [p.renamed(mapping) for p in paths]


# -- providers ---------------------------------------------------------------

def load_fixtures(path: str | Path | None = None) -> dict[str, list[str]]:
    """Read a fixture file: ``scenarios: {name: [response, ...]}``.

    With no path the bundled fixture file is used.
    """
    if path is None:
        text = (resources.files("lgts.data.fixtures") / "llm_responses.yaml").read_text()
    else:
        text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    scen = data.get("scenarios", data)
    if not isinstance(scen, dict):
        raise LlmError("fixture file must map scenario names to response lists")
    out = {}
    for name, responses in scen.items():
        if isinstance(responses, str):
            responses = [responses]
        if not responses or not all(isinstance(r, str) for r in responses):
            raise LlmError(f"scenario {name!r} needs a list of response strings")
        out[str(name)] = list(responses)
    return out


class FixtureProvider:
    """Replays canned responses in order; the last one repeats once exhausted."""

    def __init__(self, scenario: str, fixtures: str | Path | Mapping | None = None):
        table = dict(fixtures) if isinstance(fixtures, Mapping) else load_fixtures(fixtures)
        if scenario not in table:
            raise UnknownScenario(scenario)
        self.scenario = scenario
        self.responses = list(table[scenario])
        self.calls = 0
        self.prompts: list[PromptText] = []

    def complete(self, prompt: PromptText) -> str:
        self.prompts.append(prompt)
        r = self.responses[min(self.calls, len(self.responses) - 1)]
        self.calls += 1
        return r


class HttpChatProvider:
    """POSTs ``{model, messages, temperature}`` to a chat-completion endpoint."""

    def __init__(self, url: str, model: str, temperature: float = 0.0,
                 api_key_env: str = "LGTS_LLM_API_KEY",
                 response_path: str = "choices.0.message.content",
                 timeout: float = 60.0, transport: httpx.BaseTransport | None = None):
        self.url = url
        self.model = model
        self.temperature = temperature
        self.api_key_env = api_key_env
        self.response_path = response_path
        self.timeout = timeout
        self._transport = transport

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: PromptText) -> str:
        body = {"model": self.model,
                "messages": [{"role": "user", "content": prompt.text}],
                "temperature": self.temperature}
        try:
            with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                resp = client.post(self.url, json=body, headers=self._headers())
                resp.raise_for_status()
                data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise LlmUnavailable(f"request to {self.url} failed: {exc}") from exc
        return extract_field(data, self.response_path)


def extract_field(data, dotted: str) -> str:
    cur = data
    for part in dotted.split("."):
        try:
            cur = cur[int(part)] if isinstance(cur, list) else cur[part]
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise LlmUnavailable(f"response has no field {dotted!r}") from exc
    if not isinstance(cur, str):
        raise LlmUnavailable(f"field {dotted!r} is not text")
    return cur
