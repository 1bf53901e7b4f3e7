"""Multi-seed experiment runs and their output files."""

from __future__ import annotations

import dataclasses
import json
import logging
import statistics
from pathlib import Path

from .baselines import run_agts, run_lfs, run_shaped, run_tscl
from .config import ExperimentConfig, LlmConfig
from .envs import GridEnv
from .graph import SubgoalDag, build_dag, graph_edit_distance, load_dag, save_dag
from .llm import (FixtureProvider, HttpChatProvider, LlmSession, query_paths,
                  rename_paths)
from .teacher import RunResult, run_lgts

log = logging.getLogger(__name__)

GED_REFERENCE = {"mean": 2.1, "sd": 0.2}


def make_provider(llm: LlmConfig, cfg: ExperimentConfig | None = None):
    if llm.provider == "fixture":
        fixture = llm.fixture
        if fixture and cfg is not None:
            fixture = cfg._resolve(fixture)
        return FixtureProvider(llm.scenario, fixture)
    return HttpChatProvider(llm.url, llm.model, llm.temperature, llm.api_key_env,
                            llm.response_path, llm.timeout)


def llm_dag(cfg: ExperimentConfig, provider=None) -> tuple[SubgoalDag, LlmSession]:
    """Query the LLM (through synonyms, if configured) and build the DAG."""
    provider = provider or make_provider(cfg.llm, cfg)
    sigma = cfg.sigma
    mapping = cfg.llm.synonyms or {}
    asked = sigma.renamed(mapping) if mapping else sigma
    paths, session = query_paths(provider, asked, cfg.n, cfg.llm.max_retries, cfg.llm.template)
    if mapping:
        paths = rename_paths(paths, {v: k for k, v in mapping.items()})
    return build_dag(paths, start=sigma.q0, goal=sigma.qg), session


def run_one(cfg: ExperimentConfig, seed: int, out: Path | None = None) -> RunResult:
    """One seed of the configured method; writes CSV, DAG dump, transcript."""
    teacher = dataclasses.replace(cfg.teacher, seed=seed)
    env = GridEnv(cfg.layout_obj(), seed=seed, max_steps=teacher.allocated)
    run_id = f"{cfg.method}-seed{seed}"
    stem = None if out is None else out / run_id
    sigma = cfg.sigma
    method = cfg.method

    if method in ("lgts", "lgrs"):
        dag, session = llm_dag(cfg)
        if stem is not None:
            session.save(stem.with_suffix(".transcript.txt"))
            save_dag(dag, stem.with_suffix(".dag"))
        if method == "lgts":
            result = run_lgts(dag, env, teacher, run_id)
        else:
            result = run_shaped(env, dag, teacher, run_id, cfg.full_task_allocated,
                                cfg.potential_based)
    elif method == "agts":
        result = run_agts(env, cfg.oracle_dag(), teacher, run_id)
    elif method == "agrs":
        result = run_shaped(env, cfg.oracle_dag(), teacher, run_id, cfg.full_task_allocated,
                            cfg.potential_based)
    elif method == "tscl":
        result = run_tscl(env, cfg.oracle_dag(), teacher, run_id)
    elif method == "lfs":
        result = run_lfs(env, sigma.q0, sigma.qg, teacher, run_id, cfg.full_task_allocated)
    else:  # validate_config rules this out
        raise ValueError(method)

    if stem is not None:
        result.metrics.write_csv(stem.with_suffix(".csv"))
    return result


def _mean_sd(xs: list[float]) -> dict:
    if not xs:
        return {"mean": None, "sd": None}
    return {"mean": statistics.fmean(xs), "sd": statistics.stdev(xs) if len(xs) > 1 else 0.0}


def report_ged(dumps: list[str | Path], oracle: str | Path | SubgoalDag) -> dict:
    """GED of each dumped DAG against the oracle graph, aggregated."""
    if not dumps:
        raise ValueError("no DAG dumps given")
    ref = oracle if isinstance(oracle, SubgoalDag) else load_dag(oracle)
    values = [graph_edit_distance(load_dag(d), ref) for d in dumps]
    return {**_mean_sd([float(v) for v in values]), "values": values,
            "reference": GED_REFERENCE}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None,
                   seed_offset: int = 0) -> dict:
    """Run every seed, write per-run files and ``<method>_aggregate.json``.

    A failing seed is recorded in the aggregate and does not stop the batch.
    """
    out_dir = Path(out or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in cfg.seeds]
    runs, failures, files = [], [], []
    for seed in seeds:
        try:
            r = run_one(cfg, seed, out_dir)
        except Exception as exc:  # recorded per seed, batch continues
            log.exception("seed %s failed", seed)
            failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
            continue
        runs.append({"seed": seed, "status": r.status,
                     "interactions": r.total_interactions,
                     "success_rate": r.final_success_rate})
        files.append(f"{cfg.method}-seed{seed}.csv")  # relative to out_dir
        log.info("%s seed %s: %s, %d interactions, success %.2f", cfg.method, seed,
                 r.status, r.total_interactions, r.final_success_rate)

    agg = {
        "method": cfg.method,
        "domain": cfg.domain,
        "n_seeds": len(runs),
        "interactions": _mean_sd([float(r["interactions"]) for r in runs]),
        "success": _mean_sd([r["success_rate"] for r in runs]),
        "runs": runs,
        "failures": failures,
        "metrics_files": files,
    }
    dumps = [out_dir / f"{cfg.method}-seed{r['seed']}.dag" for r in runs]
    dumps = [d for d in dumps if d.exists()]
    if dumps and cfg.oracle_graph:
        agg["ged"] = report_ged(dumps, cfg.oracle_dag())
    (out_dir / f"{cfg.method}_aggregate.json").write_text(json.dumps(agg, indent=2) + "\n")
    return agg
