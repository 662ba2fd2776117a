"""Record live service responses as frontend test fixtures.

Trains the same tiny model the Python test suite uses, then captures raw
response bytes from the in-process service so the UI tests can assert
byte-traceability of every displayed number.
"""
import json
import sys
from pathlib import Path

sys.path.insert(0, "src")

from fastapi.testclient import TestClient

from probsaint.checkpoint import load_checkpoint, save_checkpoint
from probsaint.market import MarketSpec, generate, market_schema
from probsaint.model import ModelConfig
from probsaint.pipeline import time_split
from probsaint.service import ServingContext, create_app
from probsaint.training import TrainConfig, train

OUT = Path("frontend/tests/fixtures")
OUT.mkdir(parents=True, exist_ok=True)

spec = MarketSpec.default(n_rows=420)
rows = generate(spec, seed=17)
schema = market_schema(spec)
parts = time_split(rows, schema, "2022-05-20")
cfg = TrainConfig(
    model=ModelConfig(d=8, depth=1, heads=2, dropout=0.0, context_batch_size=8),
    batch_size=16, max_epochs=3, patience=3, seed=23,
)
ckpt, _ = train(parts["train"], parts["val"], schema, cfg)
save_checkpoint(ckpt, "/tmp/fixture.ckpt")
ckpt = load_checkpoint("/tmp/fixture.ckpt")

client = TestClient(create_app(ServingContext.from_checkpoint(ckpt)))

vehicle = {k: v for k, v in parts["test"][0].items() if k != "sale_price"}

(OUT / "schema.json").write_bytes(client.get("/v1/schema").content)
(OUT / "model.json").write_bytes(client.get("/v1/model").content)
(OUT / "sweep.json").write_bytes(client.post("/v1/sweep", json={"vehicle": vehicle}).content)
(OUT / "predict.json").write_bytes(client.post("/v1/predict", json={"rows": [vehicle]}).content)
(OUT / "vehicle.json").write_text(json.dumps(vehicle, indent=2))
print("fixtures written to", OUT)
for f in sorted(OUT.glob("*.json")):
    print(" ", f.name, f.stat().st_size, "bytes")
