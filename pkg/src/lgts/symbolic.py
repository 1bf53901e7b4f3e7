"""Entities, predicates, grounded literals and symbolic (high-level) states.

A :class:`SymbolicState` is a set of positive literals read closed-world:
anything absent is false. Matching a low-level label against a sub-goal uses
:func:`state_satisfies`, a subset test, so sub-goal regions may overlap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol


class SymbolicError(ValueError):
    pass


class DuplicateName(SymbolicError):
    pass


class UnknownEntity(SymbolicError):
    pass


class UnknownPredicate(SymbolicError):
    pass


class ArityMismatch(SymbolicError):
    pass


class ExprSyntaxError(SymbolicError):
    pass


class SchemaMismatch(SymbolicError):
    pass


class DegenerateTask(SymbolicError):
    """Raised when the initial and goal states coincide."""


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True, order=True)
class Entity:
    name: str

    def __post_init__(self):
        if not self.name or not _IDENT.match(self.name):
            raise SymbolicError(f"bad entity name {self.name!r}")


@dataclass(frozen=True, order=True)
class Predicate:
    name: str
    arity: int = 1

    def __post_init__(self):
        if not self.name or not _IDENT.match(self.name):
            raise SymbolicError(f"bad predicate name {self.name!r}")
        if self.arity < 1:
            raise ArityMismatch(f"predicate {self.name} must have arity >= 1")


@dataclass(frozen=True, order=True)
class Literal:
    predicate: str
    args: tuple[str, ...]
    positive: bool = True

    def __str__(self):
        atom = f"{self.predicate}({','.join(self.args)})"
        return atom if self.positive else f"!{atom}"


@dataclass(frozen=True)
class SymbolicState:
    """Conjunction of positive literals; equality ignores literal order."""

    literals: frozenset[Literal] = field(default_factory=frozenset)

    @classmethod
    def of(cls, *literals: Literal) -> "SymbolicState":
        return cls(frozenset(literals))

    def __post_init__(self):
        if not isinstance(self.literals, frozenset):
            object.__setattr__(self, "literals", frozenset(self.literals))
        if any(not lit.positive for lit in self.literals):
            raise SymbolicError("symbolic states hold positive literals only")

    def sorted_literals(self) -> list[Literal]:
        return sorted(self.literals)

    def __str__(self):
        if not self.literals:
            return "true"
        return " & ".join(str(lit) for lit in self.sorted_literals())

    def __len__(self):
        return len(self.literals)

    def renamed(self, mapping: Mapping[str, str]) -> "SymbolicState":
        return SymbolicState(frozenset(
            Literal(mapping.get(lit.predicate, lit.predicate),
                    tuple(mapping.get(a, a) for a in lit.args))
            for lit in self.literals
        ))


@dataclass(frozen=True)
class SymbolicInfo:
    """The symbolic task description: entities, predicates, start and goal.

    ``applicable`` optionally records which entities each predicate applies
    to. It is only used by the ``typed`` prompt template.
    """

    entities: tuple[Entity, ...]
    predicates: tuple[Predicate, ...]
    q0: SymbolicState
    qg: SymbolicState
    applicable: Mapping[str, tuple[str, ...]] | None = None

    @property
    def entity_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entities)

    @property
    def predicate_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.predicates)

    def predicate(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise UnknownPredicate(name)

    def check_literal(self, lit: Literal) -> None:
        pred = self.predicate(lit.predicate)
        if len(lit.args) != pred.arity:
            raise ArityMismatch(
                f"{lit.predicate} takes {pred.arity} argument(s), got {len(lit.args)}")
        names = self.entity_names
        for arg in lit.args:
            if arg not in names:
                raise UnknownEntity(arg)

    def check_state(self, state: SymbolicState) -> None:
        for lit in state.literals:
            self.check_literal(lit)

    def renamed(self, mapping: Mapping[str, str]) -> "SymbolicInfo":
        """Copy with entity/predicate descriptors swapped for synonyms."""
        applicable = None
        if self.applicable is not None:
            applicable = {mapping.get(k, k): tuple(mapping.get(a, a) for a in v)
                          for k, v in self.applicable.items()}
        return make_symbolic_info(
            [mapping.get(e.name, e.name) for e in self.entities],
            {mapping.get(p.name, p.name): p.arity for p in self.predicates},
            self.q0.renamed(mapping).literals,
            self.qg.renamed(mapping).literals,
            applicable=applicable,
        )


class Labeler(Protocol):
    """Maps a low-level environment state to a symbolic state.

    Implementations must be deterministic.
    """

    def label(self, state) -> SymbolicState: ...


def make_symbolic_info(entities: Iterable[str | Entity],
                       predicates: Mapping[str, int] | Iterable[Predicate],
                       q0_literals: Iterable[Literal],
                       qg_literals: Iterable[Literal],
                       applicable: Mapping[str, Iterable[str]] | None = None) -> SymbolicInfo:
    ents = tuple(e if isinstance(e, Entity) else Entity(e) for e in entities)
    if isinstance(predicates, Mapping):
        preds = tuple(Predicate(k, v) for k, v in predicates.items())
    else:
        preds = tuple(predicates)

    seen: set[str] = set()
    for name in [e.name for e in ents] + [p.name for p in preds]:
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)

    q0 = SymbolicState(frozenset(q0_literals))
    qg = SymbolicState(frozenset(qg_literals))
    app = None
    if applicable is not None:
        app = {k: tuple(v) for k, v in applicable.items()}
    info = SymbolicInfo(ents, preds, q0, qg, app)
    info.check_state(q0)
    info.check_state(qg)
    if q0 == qg:
        raise DegenerateTask("initial and goal states are identical")
    return info


def state_satisfies(s: SymbolicState, target: SymbolicState,
                    sigma: SymbolicInfo | None = None) -> bool:
    """True iff every literal of ``target`` holds in ``s``."""
    if sigma is not None:
        try:
            sigma.check_state(s)
            sigma.check_state(target)
        except SymbolicError as exc:
            raise SchemaMismatch(str(exc)) from exc
    return target.literals <= s.literals


_ATOM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*$")
_SPLIT = re.compile(r"\s*(?:&&|&|∧|\^|\bAND\b|\band\b)\s*")


def parse_literal(text: str, sigma: SymbolicInfo | None = None) -> Literal:
    m = _ATOM.match(text)
    if not m:
        raise ExprSyntaxError(f"not an atom: {text!r}")
    name, raw = m.group(1), m.group(2).strip()
    args = tuple(a.strip() for a in raw.split(",")) if raw else ()
    if any(not _IDENT.match(a) for a in args):
        raise ExprSyntaxError(f"bad argument list in {text!r}")
    lit = Literal(name, args)
    if sigma is not None:
        sigma.check_literal(lit)
    return lit


def parse_state_expr(text: str, sigma: SymbolicInfo | None = None) -> SymbolicState:
    """Parse ``Pred(a,b) & Other(c)`` (``∧`` also accepted) into a state.

    ``true`` or an empty string parse to the empty state.
    """
    body = text.strip()
    if body in ("", "true", "True", "⊤"):
        return SymbolicState()
    parts = _SPLIT.split(body)
    if any(not p for p in parts):
        raise ExprSyntaxError(f"dangling conjunction in {text!r}")
    return SymbolicState(frozenset(parse_literal(p, sigma) for p in parts))


def format_state(state: SymbolicState) -> str:
    return str(state)
