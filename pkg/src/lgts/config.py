"""Experiment configuration files (YAML)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .envs import GridLayout, LayoutParseError, load_layout
from .graph import GraphError, SubgoalDag, load_dag, parse_dag
from .symbolic import SymbolicError, SymbolicInfo, make_symbolic_info, parse_state_expr
from .teacher import StudentConfig, TeacherConfig

METHODS = ("lgts", "agts", "lfs", "tscl", "agrs", "lgrs")
NEEDS_LLM = ("lgts", "lgrs")
NEEDS_ORACLE = ("agts", "tscl", "agrs")


class ConfigError(ValueError):
    pass


@dataclass
class LlmConfig:
    provider: str = "fixture"
    fixture: str | None = None          # None: bundled fixture file
    scenario: str = ""
    template: str = "default"
    max_retries: int = 5
    synonyms: dict[str, str] = field(default_factory=dict)
    url: str = ""
    model: str = ""
    temperature: float = 0.0
    api_key_env: str = "LGTS_LLM_API_KEY"
    response_path: str = "choices.0.message.content"
    timeout: float = 60.0


@dataclass
class ExperimentConfig:
    domain: str
    layout: str
    sigma: SymbolicInfo
    method: str = "lgts"
    n: int = 4
    llm: LlmConfig = field(default_factory=LlmConfig)
    oracle_graph: str | None = None
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    full_task_allocated: int = 500
    potential_based: bool = True
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    out: str = "runs"
    source: Path | None = None

    def with_method(self, method: str) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, method=method)
        validate_config(cfg)
        return cfg

    def layout_obj(self) -> GridLayout:
        return load_layout(self._resolve(self.layout))

    def oracle_dag(self) -> SubgoalDag:
        if not self.oracle_graph:
            raise ConfigError(f"method {self.method!r} needs oracle_graph")
        return _load_graph(self._resolve(self.oracle_graph), self.sigma)

    def _resolve(self, ref: str) -> str:
        p = Path(ref)
        if not p.is_absolute() and self.source is not None and (self.source.parent / p).exists():
            return str(self.source.parent / p)
        return ref


def _load_graph(ref: str, sigma: SymbolicInfo | None) -> SubgoalDag:
    p = Path(ref)
    if not p.exists() and len(p.parts) == 1:
        res = resources.files("lgts.data.graphs") / f"{p.stem}.dag"
        if res.is_file():
            return parse_dag(res.read_text(), sigma)
    return load_dag(p, sigma)


def _section(raw: dict, key: str, cls):
    data = raw.get(key) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{key!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return data


def parse_sigma(block: Any) -> SymbolicInfo:
    if not isinstance(block, dict):
        raise ConfigError("'sigma' must be a mapping")
    try:
        preds = block["predicates"]
        q0 = parse_state_expr(str(block["q0"]))
        qg = parse_state_expr(str(block["qg"]))
        return make_symbolic_info(block["entities"], preds, q0.literals, qg.literals,
                                  applicable=block.get("applicable"))
    except KeyError as exc:
        raise ConfigError(f"sigma block is missing {exc}") from exc
    except SymbolicError as exc:
        raise ConfigError(f"bad sigma block: {exc}") from exc


_TOP_KEYS = {"domain", "layout", "sigma", "method", "n", "llm", "oracle_graph", "teacher",
             "student", "budget", "allocated", "step_penalty", "reset_retries",
             "final_eval_episodes", "full_task_allocated", "potential_based", "seeds", "out"}


def config_from_dict(raw: dict, source: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("domain", "layout", "sigma"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    t = dict(_section(raw, "teacher", TeacherConfig))
    t.pop("student", None)
    for key in ("budget", "allocated", "step_penalty", "reset_retries", "final_eval_episodes"):
        if key in raw:
            t[key] = raw[key]
    student = StudentConfig(**_section(raw, "student", StudentConfig))
    try:
        teacher = TeacherConfig(student=student, **t)
        llm = LlmConfig(**_section(raw, "llm", LlmConfig))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    seeds = raw.get("seeds", list(range(10)))
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    cfg = ExperimentConfig(
        domain=str(raw["domain"]),
        layout=str(raw["layout"]),
        sigma=parse_sigma(raw["sigma"]),
        method=str(raw.get("method", "lgts")),
        n=int(raw.get("n", 4)),
        llm=llm,
        oracle_graph=raw.get("oracle_graph"),
        teacher=teacher,
        full_task_allocated=int(raw.get("full_task_allocated", 500)),
        potential_based=bool(raw.get("potential_based", True)),
        seeds=[int(s) for s in seeds],
        out=str(raw.get("out", "runs")),
        source=source,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; expected one of {METHODS}")
    if cfg.n < 1:
        raise ConfigError("n must be >= 1")
    if not cfg.seeds:
        raise ConfigError("seeds list is empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("duplicate seeds")
    t = cfg.teacher
    if t.budget < 1 or t.x < 1 or t.allocated < 1 or t.eval_episodes < 1:
        raise ConfigError("budget, x, allocated and eval_episodes must be positive")
    if not (0 <= t.alpha <= 1 and 0 <= t.epsilon <= 1 and 0 < t.eta <= 1 and t.mu > 0):
        raise ConfigError("teacher alpha/epsilon in [0,1], eta in (0,1], mu > 0")
    if not 0 <= t.student.gamma <= 1:
        raise ConfigError("student gamma must lie in [0, 1]")
    try:
        cfg.layout_obj()
    except (LayoutParseError, OSError, ValueError) as exc:
        raise ConfigError(f"layout {cfg.layout!r}: {exc}") from exc
    if cfg.method in NEEDS_ORACLE or cfg.oracle_graph:
        try:
            cfg.oracle_dag()
        except (GraphError, OSError, SymbolicError) as exc:
            raise ConfigError(f"oracle graph {cfg.oracle_graph!r}: {exc}") from exc
    if cfg.method in NEEDS_LLM:
        if cfg.llm.provider == "fixture":
            if not cfg.llm.scenario:
                raise ConfigError("fixture provider needs a scenario")
            if cfg.llm.fixture and not Path(cfg._resolve(cfg.llm.fixture)).exists():
                raise ConfigError(f"fixture file {cfg.llm.fixture!r} not found")
        elif cfg.llm.provider == "http":
            if not cfg.llm.url or not cfg.llm.model:
                raise ConfigError("http provider needs url and model")
        else:
            raise ConfigError(f"unknown llm provider {cfg.llm.provider!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    """Load a config file, or a bundled config by bare name (``doorkey``)."""
    p = Path(path)
    if not p.exists() and len(p.parts) == 1:
        res = resources.files("lgts.data.configs") / f"{p.stem}.yaml"
        if res.is_file():
            return config_from_dict(yaml.safe_load(res.read_text()))
    try:
        raw = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw, source=p.resolve())
