"""Command-line entry point: ``textcate <subcommand>``.

Stages can be run one at a time on JSONL files (generate, fit, predict,
evaluate) or all at once over a sweep grid (run).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .data import DatasetFormatError, read_jsonl, write_jsonl
from .evaluation import oracle_suite, pehe, subgroup_table, SUBGROUP_KEYS
from .experiment import cell_data, run
from .learners import METHODS, fit_method, load_model, save_model
from .remote import OFFLINE_ENV

log = logging.getLogger("textcate")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seeds([args.seed])
    return cfg


def _data_paths(out: str) -> tuple[Path, Path]:
    """``out`` is a directory, or a .jsonl path for the training file."""
    p = Path(out)
    if p.suffix == ".jsonl":
        return p, p.with_name(p.stem + "_test.jsonl")
    return p / "train.jsonl", p / "test.jsonl"


def cmd_generate(args) -> int:
    cfg = _config(args)
    cell, seed = cfg.cells()[0], cfg.seeds[0]
    train, test = cell_data(cfg, cell, seed)
    train_path, test_path = _data_paths(args.out)
    train_path.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(train, train_path)
    write_jsonl(test, test_path)
    print(f"wrote {len(train)} training records to {train_path}")
    print(f"wrote {len(test)} test records to {test_path} ({cell.label()}, seed {seed})")
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    cell, seed = cfg.cells()[0], cfg.seeds[0]
    train = read_jsonl(args.train)
    model = fit_method(args.method, train, cfg.learner(cell, seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out)
    print(f"wrote {args.method} model to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = read_jsonl(args.data)
    texts = data.texts
    missing = [i for i, t in enumerate(texts) if t is None]
    if missing:
        raise DatasetFormatError(f"line {missing[0] + 1}: record has no text")
    pred, empty = model.predict(texts)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for v, e in zip(pred, empty):
            fh.write(json.dumps({"tau_hat": float(v), "empty_text": bool(e)}, separators=(",", ":")) + "\n")
    print(f"wrote {len(pred)} predictions to {args.out}")
    return 0


def read_predictions(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                vals.append(float(json.loads(line)["tau_hat"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetFormatError(f"line {lineno}: bad prediction record ({exc})") from None
    return np.array(vals)


def cmd_evaluate(args) -> int:
    pred = read_predictions(args.pred)
    data = read_jsonl(args.data)
    truth = data.tau
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(truth)} records")
    if np.isnan(truth).any():
        raise ValueError("evaluation data lacks tau_true for some records")
    groups = [r.group_tags for r in data.records]
    report = {"n_test": len(truth), "pehe": pehe(pred, truth)}
    for key in SUBGROUP_KEYS:
        for tag, v in subgroup_table(pred, truth, groups, key).items():
            report[f"pehe_G{tag}"] = v
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_oracle_suite(args) -> int:
    checks = oracle_suite(seed=args.seed or 0)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_run(args) -> int:
    cfg = _config(args)
    summary = run(cfg, args.out, jobs=args.jobs, offline=args.offline)
    print(f"{len(summary.results)} result rows written to {summary.out_dir}")
    table = summary.out_dir / "figures" / "table_methods.csv"
    if table.exists():
        print(table.read_text(encoding="utf-8"), end="")
    if not summary.ok:
        print(f"{len(summary.failures)} cell(s) failed; see manifest.json", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--offline", action="store_true", help="forbid calls to remote endpoints")
    common.add_argument("-v", "--verbose", action="store_true")

    cfg_opts = argparse.ArgumentParser(add_help=False)
    cfg_opts.add_argument("--config", metavar="PATH", help="TOML experiment config (default: benchmark)")
    cfg_opts.add_argument("--seed", type=int, metavar="N", help="override the config's seed list")

    parser = argparse.ArgumentParser(prog="textcate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common, cfg_opts], help="write train/test JSONL for one cell")
    p.add_argument("--out", required=True, metavar="DIR|FILE.jsonl")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", parents=[common, cfg_opts], help="fit one method on a training JSONL")
    p.add_argument("--train", required=True, metavar="PATH")
    p.add_argument("--method", choices=METHODS, default="TCA")
    p.add_argument("--out", required=True, metavar="MODEL.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict CATE for the texts in a JSONL")
    p.add_argument("--model", required=True, metavar="MODEL.json")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PRED.jsonl")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against tau_true")
    p.add_argument("--pred", required=True, metavar="PRED.jsonl")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", metavar="REPORT.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle-suite", parents=[common], help="run the exact oracle checks")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.set_defaults(func=cmd_oracle_suite)

    p = sub.add_parser("run", parents=[common, cfg_opts], help="run the full sweep grid")
    p.add_argument("--out", metavar="DIR", help="output directory (default: config output_dir)")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.offline:
        os.environ[OFFLINE_ENV] = "1"
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
