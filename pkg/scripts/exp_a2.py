"""Development experiment: A2-scale training run with full diagnostics."""
import json
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from probsaint.market import MarketSpec, bayes_optimal_nll, generate, market_schema, oracle_moments
from probsaint.metrics import confidence_scores, coverage, evaluate_predictions, knn_baseline, mape_metric
from probsaint.model import ModelConfig, predict_gaussian
from probsaint.pipeline import encode_rows, time_split
from probsaint.training import TrainConfig, train

t0 = time.time()
cfg_overrides = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}

spec = MarketSpec.default(20_000)
rows = generate(spec, 2024)
schema = market_schema(spec)
parts = time_split(rows, schema, "2022-05-20")
print({k: len(v) for k, v in parts.items()}, flush=True)

model_kw = dict(d=32, depth=1, heads=4, dropout=0.1, context_batch_size=32, variance_link=cfg_overrides.get("link", "softplus"))
train_kw = dict(batch_size=128, max_epochs=cfg_overrides.get("epochs", 40),
                patience=cfg_overrides.get("patience", 6), lr=cfg_overrides.get("lr", 1e-3), seed=1)
model_kw.update({k: v for k, v in cfg_overrides.items() if k in ("d", "depth", "heads", "dropout")})

cfg = TrainConfig(model=ModelConfig(**model_kw), **train_kw)
ckpt, log = train(parts["train"], parts["val"], schema, cfg)
print(f"trained {time.time()-t0:.0f}s, best epoch {log.best_epoch} val {log.best_val:.4f}", flush=True)
for e, t, v in log.trajectory():
    print(f"  epoch {e}: train {t:.4f} val {v:.4f}")

test_batch, _ = encode_rows(parts["test"], schema, ckpt.encoders, require_target=True)
model = ckpt.build_model()
preds = predict_gaussian(model, test_batch, "batch-as-is", batch_size=cfg.batch_size)
y = test_batch.target_raw
report = evaluate_predictions(y, preds)
floor = bayes_optimal_nll(parts["test"], spec)
print(f"\ntest NLL {report.nll:.4f} floor {floor:.4f} excess {report.nll-floor:+.4f}")
print(f"coverage1 {report.coverage_1sigma:.4f} coverage2 {report.coverage_2sigma:.4f}")
print(f"test MAPE {report.mape:.4f} MAE {report.mae:.1f}")

mu_star, sigma_star = oracle_moments(parts["test"], spec)
mu = np.array([p.mu for p in preds]); sig = np.array([p.sigma for p in preds])
print(f"mu vs truth MAPE {mape_metric(mu_star, mu):.4f}; sigma/sigma* mean {np.mean(sig/sigma_star):.3f}")

c, excl = confidence_scores(preds)
order = np.argsort(-c)
top = order[: len(order) // 10]
top_mape = mape_metric(y[top], mu[top])
print(f"top-decile MAPE {top_mape:.4f} ratio {top_mape/report.mape:.3f} (need <= 0.8)")

train_batch, _ = encode_rows(parts["train"], schema, ckpt.encoders, require_target=True)
for k in (3, 10, 42):
    knn_mu = knn_baseline(train_batch, test_batch, k)
    print(f"knn k={k} MAPE {mape_metric(y, knn_mu):.4f}")
print(f"total {time.time()-t0:.0f}s")
