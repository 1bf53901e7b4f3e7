"""Per-run records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = ("run_id", "teacher_step", "edge", "g", "success_rate",
               "cum_interactions", "event")
CSV_SCHEMA_VERSION = 1


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


@dataclass
class RunMetrics:
    run_id: str = ""
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def step(self, teacher_step: int, edge: str, g: float, success_rate: float | None,
             cum_interactions: int, qvals: dict | None = None) -> None:
        self.rows.append(dict(run_id=self.run_id, teacher_step=teacher_step, edge=edge,
                              g=g, success_rate=success_rate,
                              cum_interactions=cum_interactions, event="train",
                              qvals=qvals or {}))

    def event(self, teacher_step: int, edge: str, event: str, cum_interactions: int) -> None:
        self.rows.append(dict(run_id=self.run_id, teacher_step=teacher_step, edge=edge,
                              g=None, success_rate=None,
                              cum_interactions=cum_interactions, event=event))

    def finish(self, teacher_step: int, status: str, total: int, final_success: float,
               **extra) -> None:
        """Closing row: the run status, total interactions and final success."""
        self.rows.append(dict(run_id=self.run_id, teacher_step=teacher_step, edge="",
                              g=None, success_rate=final_success,
                              cum_interactions=total, event=f"end:{status}"))
        self.summary = dict(status=status, total_interactions=total,
                            final_success_rate=final_success, teacher_steps=teacher_step,
                            **extra)

    def set_final_success(self, rate: float) -> None:
        last = self.rows[-1]
        if not last["event"].startswith("end:"):
            raise ValueError("run has not finished")
        last["success_rate"] = rate
        self.summary["final_success_rate"] = rate

    def events(self, kind: str) -> list[dict]:
        return [r for r in self.rows if r["event"] == kind]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: lgts-metrics v{CSV_SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    for r in rows:
        r["teacher_step"] = int(r["teacher_step"])
        r["cum_interactions"] = int(r["cum_interactions"])
        r["g"] = float(r["g"]) if r["g"] else None
        r["success_rate"] = float(r["success_rate"]) if r["success_rate"] else None
    return rows


def run_summary(rows: list[dict]) -> dict:
    """Status, total interactions and final success from a run's CSV rows."""
    ends = [r for r in rows if r["event"].startswith("end:")]
    if not ends:
        raise ValueError("no closing row")
    end = ends[-1]
    return {"status": end["event"][4:], "interactions": end["cum_interactions"],
            "success_rate": end["success_rate"]}
