"""Global environment-interaction accounting."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

KINDS = ("train", "reset", "eval")


class BudgetExhausted(RuntimeError):
    """Raised inside a run when the interaction budget hits zero."""


@dataclass
class InteractionLedger:
    budget: int
    total: int = 0
    by_kind: dict[str, int] = field(default_factory=lambda: {k: 0 for k in KINDS})
    by_edge: dict[str, dict[str, int]] = field(
        default_factory=lambda: defaultdict(lambda: {k: 0 for k in KINDS}))

    @property
    def remaining(self) -> int:
        return self.budget - self.total

    @property
    def exhausted(self) -> bool:
        return self.total >= self.budget

    def charge(self, n: int, kind: str, edge: str | None = None) -> None:
        if n < 0:
            raise ValueError("negative charge")
        if self.total + n > self.budget:
            raise ValueError("charge exceeds budget")
        self.total += n
        self.by_kind[kind] += n
        if edge is not None:
            self.by_edge[edge][kind] += n

    def edge_total(self, edge: str) -> int:
        return sum(self.by_edge[edge].values()) if edge in self.by_edge else 0

    def balanced(self) -> bool:
        per_edge = sum(sum(v.values()) for v in self.by_edge.values())
        return sum(self.by_kind.values()) == self.total == per_edge
