"""Grid runs: for every (cell, seed, method) generate data, fit, predict, score.

Test records carry no covariates. Their ``tau_true`` is the text-level CATE
E[tau(X) | T=t], computed from the covariate ranges each rendered text
reveals; that is the quantity a text-only learner can estimate. Remote texts
record no ranges, so their truth falls back to the covariate-level CATE.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import SWEEP_KNOBS, Cell, ExperimentConfig
from .data import Dataset, TestRecord
from .dgp import conditional_cate, generate
from .evaluation import SUBGROUP_COLUMNS, ExperimentResult, score
from .learners import attach_surrogates, fit_method, make_encoder
from .remote import OFFLINE_ENV, fetch_many
from .rng import stream
from .surrogate import render_batch

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("method", "seed", "eta", "kappa", "leak", "prompt_family", "lambda", "pehe",
                  *SUBGROUP_COLUMNS)


def held_out_seed(seed: int) -> int:
    """Seed of the held-out draw that pairs with training seed ``seed``."""
    return int(stream(seed, "split").integers(1 << 62))


def cell_data(cfg: ExperimentConfig, cell: Cell, seed: int) -> tuple[Dataset, Dataset]:
    """Training dataset with surrogates and a covariate-free test dataset."""
    p = cfg.dgp_for(cell, seed)
    lcfg = cfg.learner(cell, seed)
    train = attach_surrogates(generate(p), lcfg.surrogate, seed)

    ts = held_out_seed(seed)
    held = generate(p.replace(n=cfg.n_test, seed=ts))
    if lcfg.surrogate.remote is not None:
        surs = fetch_many(held.X, lcfg.surrogate)
    else:
        surs = render_batch(held.X, lcfg.surrogate, ts)
    if all(s.intervals is not None for s in surs):
        truth = conditional_cate([s.intervals for s in surs], p, seed=ts)
    else:
        truth = held.tau
    recs = tuple(
        TestRecord(s, r.a, r.y, float(tau), r.group_tags)
        for s, r, tau in zip(surs, held.records, truth)
    )
    test = Dataset(recs, p.d_x, {"dgp": p.to_dict(), "truth": "text-level"})
    return train, test


def knobs_of(cfg: ExperimentConfig, cell: Cell) -> dict:
    return {"eta": cell.eta, "kappa": cell.kappa, "leak": cell.leak,
            "prompt_family": cell.prompt_family, "lambda": cfg.head.lam}


def run_cell(cfg: ExperimentConfig, cell: Cell, seed: int) -> tuple[list[ExperimentResult], list[dict]]:
    """Fit and score every configured method on one (cell, seed)."""
    failures: list[dict] = []
    try:
        train, test = cell_data(cfg, cell, seed)
    except Exception as exc:  # recorded in the manifest, the run carries on
        log.error("%s seed=%d: data generation failed: %s", cell.label(), seed, exc)
        return [], [{"cell": cell.label(), "seed": seed, "method": None, "error": repr(exc)}]
    lcfg = cfg.learner(cell, seed)
    encoder = make_encoder(lcfg, cfg.remote_encoder)
    groups = [r.group_tags for r in test.records]
    results = []
    for method in cfg.methods:
        try:
            model = fit_method(method, train, lcfg, encoder=encoder)
            pred, _ = model.predict(test.texts)
            results.append(score(method, seed, knobs_of(cfg, cell), pred, test.tau, groups))
        except Exception as exc:
            log.error("%s seed=%d %s failed: %s", cell.label(), seed, method, exc)
            failures.append({"cell": cell.label(), "seed": seed, "method": method, "error": repr(exc)})
    return results, failures


def _task(args):
    cfg, cell, seed = args
    return run_cell(cfg, cell, seed)


@dataclass
class RunSummary:
    results: list[ExperimentResult]
    failures: list[dict]
    out_dir: Path
    files: dict[str, Path] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1,
        offline: bool = False) -> RunSummary:
    """Execute the whole grid and write results, manifest and figure tables."""
    if offline:
        os.environ[OFFLINE_ENV] = "1"
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, cell, seed) for cell in cfg.cells() for seed in cfg.seeds]
    log.info("running %d cell(s) x %d seed(s) with %d job(s)", len(cfg.cells()), len(cfg.seeds), jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_task, tasks))
    else:
        outcomes = [_task(t) for t in tasks]
    results = [r for res, _ in outcomes for r in res]
    failures = [f for _, fails in outcomes for f in fails]
    summary = RunSummary(results, failures, out)
    summary.files = write_outputs(cfg, results, failures, out)
    return summary


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        row = r.row()
        w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _mean_sd(vals: list[float]) -> tuple[float, float | None]:
    return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else None)


def _summary_csv(header: Sequence[str], groups: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*header, "n", "mean_pehe", "sd_pehe"])
    for key in groups:
        vals = groups[key]
        mean, sd = _mean_sd(vals)
        w.writerow([*(_fmt(k) for k in key), len(vals), _fmt(mean), _fmt(sd)])
    return buf.getvalue()


def figure_tables(results: Sequence[ExperimentResult]) -> dict[str, str]:
    """Tidy per-figure tables: method means overall, per sweep knob and per subgroup."""
    tables = {}
    by_method: dict = defaultdict(list)
    for r in results:
        by_method[(r.method,)].append(r.pehe)
    tables["table_methods.csv"] = _summary_csv(["method"], by_method)
    for knob in SWEEP_KNOBS:
        groups: dict = defaultdict(list)
        for r in results:
            groups[(r.method, r.knobs[knob])].append(r.pehe)
        tables[f"figure_{knob}.csv"] = _summary_csv(["method", knob], groups)
    sub: dict = defaultdict(list)
    for r in results:
        for tag, v in sorted(r.subgroup_pehe.items()):
            sub[(r.method, tag)].append(v)
    tables["table_subgroups.csv"] = _summary_csv(["method", "group"], sub)
    return tables


def write_outputs(cfg: ExperimentConfig, results, failures, out: Path) -> dict[str, Path]:
    files = {}

    def put(name: str, text: str) -> None:
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        files[name] = path

    put("results.csv", results_csv(results))
    put("results.jsonl", "".join(json.dumps(r.row(), separators=(",", ":")) + "\n" for r in results))
    for name, text in figure_tables(results).items():
        put(f"figures/{name}", text)
    manifest = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "n_cells": len(cfg.cells()),
        "n_results": len(results),
        "failures": failures,
        "numpy": np.__version__,
    }
    put("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files
