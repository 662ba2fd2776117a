"""Mini-batch NLL/MSE training with early stopping and random hyperparameter search.

Training shuffles with a per-epoch seeded generator, drops the last
incomplete mini-batch (keeping inter-sample attention statistics
comparable), evaluates the validation objective in eval mode after every
epoch, and returns the parameters of the best validation epoch. Everything
is reproducible from TrainConfig.seed alone.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import Checkpoint
from .errors import ConfigurationError, TrainingError
from .metrics import nll_metric
from .model import MLPConfig, ModelConfig, build_model, predict_gaussian
from .pipeline import EncodedBatch, FeatureSchema, encode_rows, fit_encoders

OBJECTIVES = ("nll", "mse")


@dataclass
class TrainConfig:
    model: ModelConfig | MLPConfig = field(default_factory=ModelConfig)
    model_kind: str = "probsaint"
    batch_size: int = 128
    max_epochs: int = 60
    patience: int = 5
    lr: float = 1e-3
    seed: int = 0
    objective: str = "nll"
    max_grad_norm: float = 5.0  # global-norm clip; stabilizes the variance head

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"objective must be one of {OBJECTIVES}")
        if self.model_kind == "probsaint" and self.batch_size < 2:
            raise ConfigurationError("inter-sample attention needs batch_size >= 2")
        if self.objective == "nll" and self.model.head_outputs != 2:
            raise ConfigurationError("nll training needs a 2-output head")
        if self.objective == "mse" and self.model.head_outputs != 1:
            raise ConfigurationError("mse training expects a 1-output (point) head")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_metric: float
    wall_ms: float


@dataclass
class TrainingLog:
    objective: str
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")

    def trajectory(self) -> list[tuple[int, float, float]]:
        """The deterministic part of the log (timings excluded)."""
        return [(e.epoch, e.train_loss, e.val_metric) for e in self.epochs]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_nll,wall_ms"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.train_loss!r},{e.val_metric!r},{e.wall_ms:.1f}")
        return "\n".join(lines) + "\n"


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return float(norm)


def training_loss(model, batch: EncodedBatch, objective: str,
                  training: bool, rng: np.random.Generator | None) -> Tensor:
    """Mean per-sample loss in standardized target space."""
    mu, s_raw = model.forward_encoded(batch, training=training, rng=rng)
    y = Tensor(batch.target)
    if objective == "mse":
        return ad.tmean(ad.square(ad.sub(mu, y)))
    eps = model.config.epsilon
    if model.config.variance_link == "clamp":
        var = ad.clamp_min(s_raw, eps)
    else:
        var = ad.add(ad.softplus(s_raw), Tensor(eps))
    nll = ad.add(ad.log(var), ad.div(ad.square(ad.sub(y, mu)), var))
    return ad.mul(ad.tmean(nll), Tensor(0.5))


def validation_metric(model, batch: EncodedBatch, objective: str, batch_size: int) -> float:
    """Raw-unit validation metric in eval mode; identical computation path to
    the standalone evaluator (chunks of batch_size, ragged tail kept)."""
    if objective == "nll":
        preds = predict_gaussian(model, batch, "batch-as-is", batch_size=batch_size)
        mu = np.asarray([p.mu for p in preds])
        sigma = np.asarray([p.sigma for p in preds])
        return nll_metric(batch.target_raw, mu, sigma**2)
    mu_parts = []
    with ad.no_grad():
        for start in range(0, len(batch), batch_size):
            chunk = batch.take(np.arange(start, min(start + batch_size, len(batch))))
            mu, _ = model.forward_encoded(chunk, training=False)
            mu_parts.append(mu.data)
    mu_std = np.concatenate(mu_parts)
    mu_raw = mu_std * model.encoders.target_std + model.encoders.target_mean
    return float(np.mean((batch.target_raw - mu_raw) ** 2))


def data_fingerprint(rows: list[dict]) -> str:
    """Deterministic digest of a row list (order-sensitive)."""
    h = hashlib.sha256()
    for row in rows:
        h.update(json.dumps(row, sort_keys=True).encode("utf-8"))
    return h.hexdigest()[:16]


def train(
    train_rows: list[dict],
    val_rows: list[dict],
    schema: FeatureSchema,
    cfg: TrainConfig,
    fingerprint: str | None = None,
) -> tuple[Checkpoint, TrainingLog]:
    """Fit encoders on the training rows, train to the validation optimum,
    and package the best parameters as a checkpoint."""
    if not val_rows:
        raise ConfigurationError("validation set is empty")
    seed_seq = np.random.SeedSequence(cfg.seed)
    init_rng, shuffle_rng, dropout_rng, context_rng = (
        np.random.default_rng(s) for s in seed_seq.spawn(4)
    )

    encoders = fit_encoders(train_rows, schema)
    train_batch, errors = encode_rows(train_rows, schema, encoders, require_target=True)
    if errors:
        raise TrainingError(f"{len(errors)} training rows failed to encode; first: {errors[0]}")
    val_batch, errors = encode_rows(val_rows, schema, encoders, require_target=True)
    if errors:
        raise TrainingError(f"{len(errors)} validation rows failed to encode; first: {errors[0]}")

    model = build_model(cfg.model_kind, cfg.model, encoders, schema, rng=init_rng)
    params = list(model.parameters().values())
    opt = ad.Adam(params, lr=cfg.lr)

    n = len(train_batch)
    steps = n // cfg.batch_size
    if steps == 0:
        raise ConfigurationError(
            f"batch_size {cfg.batch_size} exceeds the {n}-row training set"
        )

    log = TrainingLog(objective=cfg.objective)
    best_snapshot = model.snapshot()
    epochs_since_best = 0
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for step in range(steps):
            idx = perm[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            loss = training_loss(model, train_batch.take(idx), cfg.objective, True, dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            loss.backward()
            clip_gradients(params, cfg.max_grad_norm)
            opt.step()
            opt.zero_grad()
            total += value
        val = validation_metric(model, val_batch, cfg.objective, cfg.batch_size)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        log.epochs.append(EpochStats(epoch, total / steps, val, wall_ms))
        if val < log.best_val:
            log.best_val = val
            log.best_epoch = epoch
            best_snapshot = model.snapshot()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    model.load_parameters(best_snapshot)
    m_ctx = min(cfg.model.context_batch_size, n)
    ctx_idx = context_rng.choice(n, size=m_ctx, replace=False)
    context_rows = [train_rows[int(i)] for i in ctx_idx]

    ckpt = Checkpoint(
        model_kind=cfg.model_kind,
        model_config=cfg.model,
        encoders=encoders,
        schema=schema,
        parameters=best_snapshot,
        context_rows=context_rows,
        seed=cfg.seed,
        objective=cfg.objective,
        batch_size=cfg.batch_size,
        data_fingerprint=fingerprint if fingerprint is not None else data_fingerprint(train_rows),
    )
    return ckpt, log


@dataclass
class SearchSpace:
    """Random-search grids for the attention models plus an lr range."""

    dims: tuple = (32, 64, 128, 256)
    depths: tuple = (1, 2, 3, 6, 12)
    heads: tuple = (2, 4, 8)
    dropouts: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    lr_low: float = 5e-4
    lr_high: float = 1e-3
    trials: int = 10


def sample_configs(space: SearchSpace, trials: int, seed: int) -> list[dict]:
    """The deterministic trial-configuration sequence for a seed."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0FF)))
    configs = []
    for _ in range(trials):
        configs.append(
            {
                "dim": int(rng.choice(space.dims)),
                "depth": int(rng.choice(space.depths)),
                "heads": int(rng.choice(space.heads)),
                "dropout": float(rng.choice(space.dropouts)),
                "lr": float(np.exp(rng.uniform(np.log(space.lr_low), np.log(space.lr_high)))),
            }
        )
    return configs


def random_search(
    space: SearchSpace,
    train_rows: list[dict],
    val_rows: list[dict],
    schema: FeatureSchema,
    base: TrainConfig | None = None,
    trials: int | None = None,
    seed: int = 0,
) -> tuple[Checkpoint, list[dict]]:
    """Train one model per sampled configuration; select by validation metric.

    Returns the best checkpoint and the full trial table. Raises if every
    trial diverged, with the table attached to the error.
    """
    trials = trials if trials is not None else space.trials
    if trials < 1:
        raise ConfigurationError("random search needs at least one trial")
    base = base if base is not None else TrainConfig()
    configs = sample_configs(space, trials, seed)
    trial_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence((seed, 0x5EED)).spawn(trials)]

    table: list[dict] = []
    best_ckpt = None
    best_val = float("inf")
    for t, params in enumerate(configs):
        model_cfg = replace(
            base.model,
            d=params["dim"],
            depth=params["depth"],
            heads=params["heads"],
            dropout=params["dropout"],
        ) if isinstance(base.model, ModelConfig) else base.model
        cfg = replace(base, model=model_cfg, lr=params["lr"], seed=trial_seeds[t])
        entry = dict(trial=t, **params)
        try:
            ckpt, log = train(train_rows, val_rows, schema, cfg)
            entry["val_metric"] = log.best_val
            entry["best_epoch"] = log.best_epoch
            if np.isfinite(log.best_val) and log.best_val < best_val:
                best_val = log.best_val
                best_ckpt = ckpt
        except TrainingError as e:
            entry["val_metric"] = None
            entry["error"] = str(e)
        table.append(entry)

    if best_ckpt is None:
        raise TrainingError(f"all {trials} search trials diverged: {json.dumps(table)}")
    return best_ckpt, table
