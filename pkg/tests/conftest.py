"""Shared fixtures: a small trained checkpoint reused by CLI/service tests,
plus the acceptance-criteria result table printed at the end of the run."""

import json
from pathlib import Path

import numpy as np
import pytest

from probsaint.checkpoint import save_checkpoint
from probsaint.market import CSV_COLUMNS, MarketSpec, generate, market_schema
from probsaint.model import ModelConfig
from probsaint.pipeline import time_split, write_csv_rows
from probsaint.training import TrainConfig, train

_ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE_RESULTS[name] = (passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        passed, detail = _ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'} — {detail}")


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """Generate a small market, train a tiny model, save everything to disk.

    Returns a dict with paths and in-memory objects for CLI/service tests.
    """
    root = tmp_path_factory.mktemp("small_run")
    spec = MarketSpec.default(n_rows=420)
    rows = generate(spec, seed=17)
    schema = market_schema(spec)
    write_csv_rows(root / "market.csv", rows, CSV_COLUMNS)
    (root / "market_spec.json").write_text(spec.to_json())
    (root / "schema.json").write_text(json.dumps(schema.to_json_dict(), indent=2))

    parts = time_split(rows, schema, "2022-05-20")
    cfg = TrainConfig(
        model=ModelConfig(d=8, depth=1, heads=2, dropout=0.0, context_batch_size=8),
        batch_size=16,
        max_epochs=3,
        patience=3,
        seed=23,
    )
    ckpt, log = train(parts["train"], parts["val"], schema, cfg)
    ckpt_path = root / "checkpoint.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    for name in ("train", "val", "test"):
        write_csv_rows(root / f"{name}.csv", parts[name], [c.name for c in schema.columns])
    return {
        "root": root,
        "spec": spec,
        "schema": schema,
        "rows": rows,
        "parts": parts,
        "cfg": cfg,
        "ckpt": ckpt,
        "ckpt_path": ckpt_path,
        "log": log,
    }
