"""Command-line entry point for the full pricing workflow.

Subcommands: generate, train, search, evaluate, predict, sweep, serve.
Exit codes: 0 success, 1 usage error, 2 runtime failure. Set
PROBSAINT_LOG={error,info,debug} to control logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ProbSaintError, UsageError
from .forecast import DEFAULT_DURATIONS, duration_sweep, normalize_sweep, sweep_to_files
from .market import CSV_COLUMNS, MarketSpec, generate, market_schema
from .metrics import buckets_to_csv, evaluate_predictions, interval_plot_csv
from .model import MLPConfig, ModelConfig, predict_gaussian
from .pipeline import (
    FeatureSchema,
    encode_rows,
    read_csv_rows,
    time_split,
    write_csv_rows,
)
from .training import SearchSpace, TrainConfig, random_search, train

logger = logging.getLogger("probsaint")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("PROBSAINT_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> _Parser:
    p = _Parser(prog="probsaint", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="command")

    g = sub.add_parser("generate", help="generate a synthetic market dataset")
    g.add_argument("--spec", help="MarketSpec JSON file (omit for the built-in default)")
    g.add_argument("--n-rows", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)

    t = sub.add_parser("train", help="train a model on a CSV dataset")
    t.add_argument("--schema", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--test-start", required=True, help="ISO date starting the test window")
    t.add_argument("--config", help="TrainConfig JSON file")
    t.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    t.add_argument("--out-dir", required=True)

    s = sub.add_parser("search", help="seeded random hyperparameter search")
    s.add_argument("--schema", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--test-start", required=True)
    s.add_argument("--space", help="SearchSpace JSON file")
    s.add_argument("--config", help="base TrainConfig JSON file")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)

    e = sub.add_parser("evaluate", help="metric report for a checkpoint on a CSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out-dir", required=True)

    pr = sub.add_parser("predict", help="price rows from a CSV")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True, help="output predictions CSV")

    sw = sub.add_parser("sweep", help="offer-duration sweep for one vehicle")
    sw.add_argument("--checkpoint", required=True)
    sw.add_argument("--vehicle", required=True, help="vehicle JSON feature map")
    sw.add_argument("--durations", help="comma-separated durations (default 15,45,75,105,150)")
    sw.add_argument("--out-dir", required=True)

    sv = sub.add_parser("serve", help="HTTP JSON service")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--host", default="127.0.0.1")
    return p


def _load_schema(path) -> FeatureSchema:
    return FeatureSchema.from_json_dict(json.loads(Path(path).read_text()))


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _train_config(path: str | None, seed: int | None) -> TrainConfig:
    doc = json.loads(Path(path).read_text()) if path else {}
    kind = doc.get("model_kind", "probsaint")
    model_doc = doc.get("model", {})
    model = ModelConfig(**model_doc) if kind == "probsaint" else MLPConfig(**model_doc)
    kwargs = {k: doc[k] for k in ("batch_size", "max_epochs", "patience", "lr", "seed",
                                  "objective", "max_grad_norm") if k in doc}
    if seed is not None:
        kwargs["seed"] = seed
    return TrainConfig(model=model, model_kind=kind, **kwargs)


def _split_kwargs(path: str | None) -> dict:
    doc = json.loads(Path(path).read_text()) if path else {}
    split = doc.get("split", {})
    return {
        k: split[k]
        for k in ("val_window_days", "test_window_days", "train_gap_days")
        if k in split
    }


def cmd_generate(args) -> int:
    if args.spec:
        spec = MarketSpec.from_json(Path(args.spec).read_text())
        if args.n_rows:
            spec.n_rows = args.n_rows
    else:
        spec = MarketSpec.default(n_rows=args.n_rows or 20_000)
    rows = generate(spec, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv_rows(out / "market.csv", rows, CSV_COLUMNS)
    (out / "market_spec.json").write_text(spec.to_json())
    (out / "schema.json").write_text(json.dumps(market_schema(spec).to_json_dict(), indent=2))
    print(f"wrote {len(rows)} rows to {out / 'market.csv'} (spec and schema beside it)")
    return 0


def cmd_train(args) -> int:
    schema = _load_schema(args.schema)
    rows = read_csv_rows(args.data)
    cfg = _train_config(args.config, args.seed)
    parts = time_split(rows, schema, args.test_start, **_split_kwargs(args.config))
    logger.info("split sizes: %s", {k: len(v) for k, v in parts.items()})
    ckpt, log = train(parts["train"], parts["val"], schema, cfg, fingerprint=_file_sha256(args.data))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "checkpoint.ckpt")
    (out / "training_log.csv").write_text(log.to_csv())
    for name in ("train", "val", "test"):
        write_csv_rows(out / f"{name}.csv", parts[name], [c.name for c in schema.columns])
    print(
        f"best epoch {log.best_epoch} val {log.best_val!r}; "
        f"checkpoint at {out / 'checkpoint.ckpt'}"
    )
    return 0


def cmd_search(args) -> int:
    schema = _load_schema(args.schema)
    rows = read_csv_rows(args.data)
    space_doc = json.loads(Path(args.space).read_text()) if args.space else {}
    space = SearchSpace(**{k: tuple(v) if isinstance(v, list) else v for k, v in space_doc.items()})
    base = _train_config(args.config, None)
    parts = time_split(rows, schema, args.test_start, **_split_kwargs(args.config))
    ckpt, table = random_search(
        space, parts["train"], parts["val"], schema, base=base, trials=args.trials, seed=args.seed
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "best.ckpt")
    (out / "trials.json").write_text(json.dumps(table, indent=2))
    best = min((t for t in table if t["val_metric"] is not None), key=lambda t: t["val_metric"])
    print(f"best trial {best['trial']} val {best['val_metric']!r}; checkpoint at {out / 'best.ckpt'}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    rows = read_csv_rows(args.data)
    batch, errors = encode_rows(rows, ckpt.schema, ckpt.encoders, require_target=True)
    for err in errors:
        logger.info("skipping %s", err)
    model = ckpt.build_model()
    preds = predict_gaussian(model, batch, "batch-as-is", batch_size=ckpt.batch_size)
    report = evaluate_predictions(batch.target_raw, preds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json())
    (out / "buckets.csv").write_text(buckets_to_csv(report.buckets))
    (out / "intervals.csv").write_text(interval_plot_csv(batch.target_raw, preds))
    print(
        f"n={report.n} nll={report.nll!r} mae={report.mae:.2f} mape={report.mape:.5f} "
        f"coverage1={report.coverage_1sigma:.4f} coverage2={report.coverage_2sigma:.4f}"
    )
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    rows = read_csv_rows(args.data)
    batch, errors = encode_rows(rows, ckpt.schema, ckpt.encoders)
    for err in errors:
        print(f"warning: {err}", file=sys.stderr)
    context_batch, ctx_errors = encode_rows(ckpt.context_rows, ckpt.schema, ckpt.encoders)
    if ctx_errors:
        raise ProbSaintError(f"checkpoint context rows failed to encode: {ctx_errors[0]}")
    model = ckpt.build_model()
    preds = predict_gaussian(model, batch, "fixed-context", context_batch=context_batch)
    lines = ["row,mu,sigma,confidence,excluded"]
    for src, p in zip(batch.source_indices.tolist(), preds):
        conf = repr(p.confidence) if p.confidence is not None else ""
        lines.append(f"{src},{p.mu!r},{p.sigma!r},{conf},{str(p.excluded).lower()}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    vehicle = json.loads(Path(args.vehicle).read_text())
    durations = (
        [float(x) for x in args.durations.split(",")] if args.durations else list(DEFAULT_DURATIONS)
    )
    sweep = normalize_sweep(duration_sweep(ckpt, vehicle, durations))
    json_path, csv_path = sweep_to_files(sweep, args.out_dir)
    print(f"wrote {json_path} and {csv_path}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    ckpt = load_checkpoint(args.checkpoint)
    print(f"serving {args.checkpoint} (model {ckpt.model_version}) on {args.host}:{args.port}")
    serve(ckpt, port=args.port, host=args.host)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    argv = argv if argv is not None else sys.argv[1:]
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ProbSaintError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
