"""Pricing models: attention-based ProbSAINT and an MLP baseline.

ProbSAINT embeds every column into a shared d-dimensional token space (one
embedding table per categorical column, one small ReLU network per numeric
feature), prepends a learned pooling token, and runs L blocks that alternate
feature-wise self-attention with inter-sample attention across the rows of
the batch. Each attention and feed-forward sublayer is residual and followed
by layer normalization. A 2-layer head on the pooling token emits the mean
and a raw variance that a link function (clamp or softplus) turns into a
positive sigma^2.

Batches are internally processed in a canonical row order (lexicographic
over the encoded features) so that row-coupled attention is bit-exactly
permutation equivariant; outputs are returned in input order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ModelError
from .pipeline import EncodedBatch, FeatureSchema, FittedEncoders

VARIANCE_LINKS = ("clamp", "softplus")
CONTEXT_POLICIES = ("batch-as-is", "fixed-context")


@dataclass
class ModelConfig:
    """ProbSAINT hyperparameters (token dim, depth, heads, dropout, head shape)."""

    d: int = 32
    depth: int = 1
    heads: int = 4
    dropout: float = 0.1
    ff_multiplier: int = 2
    head_hidden_dim: int | None = None
    variance_link: str = "clamp"
    context_batch_size: int = 32
    epsilon: float = 1e-6
    head_outputs: int = 2

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ConfigurationError(f"d={self.d} must be divisible by heads={self.heads}")
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.variance_link not in VARIANCE_LINKS:
            raise ConfigurationError(f"variance_link must be one of {VARIANCE_LINKS}")
        if self.head_outputs not in (1, 2):
            raise ConfigurationError("head_outputs must be 1 (point) or 2 (gaussian)")

    @property
    def head_hidden(self) -> int:
        return self.head_hidden_dim if self.head_hidden_dim is not None else self.d


@dataclass
class MLPConfig:
    """ProbMLP hyperparameters: categorical embeddings feeding a deep MLP."""

    hidden_dim: int = 64
    n_layers: int = 3
    embed_dim: int = 16
    dropout: float = 0.0
    variance_link: str = "clamp"
    context_batch_size: int = 32
    epsilon: float = 1e-6
    head_outputs: int = 2

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigurationError("n_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.variance_link not in VARIANCE_LINKS:
            raise ConfigurationError(f"variance_link must be one of {VARIANCE_LINKS}")


@dataclass
class GaussianPrediction:
    """Price distribution for one row, in currency units.

    `confidence` is 1 - sigma/mu; it is undefined (None, excluded=True)
    when mu <= 0.
    """

    mu: float
    sigma: float
    confidence: float | None
    excluded: bool = False


def _uniform_linear(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def canonical_order(batch: EncodedBatch) -> np.ndarray:
    """Lexicographic row order over encoded features.

    Rows with identical features tie stably, which is safe: tied rows are
    bitwise-identical inputs and therefore receive bitwise-identical outputs.
    """
    m = len(batch)
    if m <= 1:
        return np.arange(m)
    keys = np.concatenate([batch.num_values, batch.cat_indices.astype(np.float64)], axis=1)
    return np.lexsort(keys.T[::-1])


class _ModelBase:
    """Shared parameter registry and prediction plumbing."""

    kind = "base"

    def __init__(self, config, encoders: FittedEncoders, schema: FeatureSchema):
        self.config = config
        self.encoders = encoders
        self.schema = schema
        self.params: dict[str, Tensor] = {}
        self.cat_columns = schema.categorical_columns
        self.num_columns = schema.numeric_feature_names()

    def _param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def check_finite(self) -> None:
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.data)):
                raise ModelError(f"parameter {name!r} became non-finite")

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigurationError(
                f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, arr in arrays.items():
            if self.params[name].data.shape != arr.shape:
                raise ConfigurationError(
                    f"parameter {name!r} shape {arr.shape} != expected {self.params[name].data.shape}"
                )
            self.params[name].data = np.ascontiguousarray(arr, dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    # subclasses implement forward_encoded(batch, training, rng) -> (mu_std, s_raw|None)


class ProbSaintModel(_ModelBase):
    """SAINT-style tabular transformer with a Gaussian output head."""

    kind = "probsaint"

    def __init__(self, config: ModelConfig, encoders: FittedEncoders, schema: FeatureSchema,
                 rng: np.random.Generator | None = None):
        super().__init__(config, encoders, schema)
        rng = rng if rng is not None else np.random.default_rng(0)
        d = config.d
        self.seq_len = 1 + len(self.cat_columns) + len(self.num_columns)  # pooling token first

        for col in self.cat_columns:
            self._param(f"embed/{col}", rng.normal(0.0, 0.02, size=(encoders.vocab_size(col), d)))
        self._param("pool_token", rng.normal(0.0, 0.02, size=(1, 1, d)))

        dn = len(self.num_columns)
        if dn:
            self._param("numenc/W1", _uniform_linear(rng, 1, (dn, 1, d)))
            self._param("numenc/b1", np.zeros((dn, 1, d)))
            self._param("numenc/W2", _uniform_linear(rng, d, (dn, d, d)))
            self._param("numenc/b2", np.zeros((dn, 1, d)))

        sd = self.seq_len * d
        if sd % config.heads != 0:
            raise ConfigurationError("sequence width not divisible by head count")
        ff = config.ff_multiplier * d
        for layer in range(config.depth):
            for tag, dim in (("self", d), ("inter", sd)):
                for w in ("Wq", "Wk", "Wv", "Wo"):
                    self._param(f"block{layer}/{tag}/{w}", _uniform_linear(rng, dim, (dim, dim)))
                for b in ("bq", "bk", "bv", "bo"):
                    self._param(f"block{layer}/{tag}/{b}", np.zeros(dim))
            for i, tag in enumerate(("ff1", "ff2")):
                self._param(f"block{layer}/{tag}/W1", _uniform_linear(rng, d, (d, ff)))
                self._param(f"block{layer}/{tag}/b1", np.zeros(ff))
                self._param(f"block{layer}/{tag}/W2", _uniform_linear(rng, ff, (ff, d)))
                self._param(f"block{layer}/{tag}/b2", np.zeros(d))
            for ln in ("ln1", "ln2", "ln3", "ln4"):
                self._param(f"block{layer}/{ln}/gamma", np.ones(d))
                self._param(f"block{layer}/{ln}/beta", np.zeros(d))

        hh = config.head_hidden
        self._param("head/W1", _uniform_linear(rng, d, (d, hh)))
        self._param("head/b1", np.zeros(hh))
        self._param("head/W2", _uniform_linear(rng, hh, (hh, config.head_outputs)))
        head_b2 = np.zeros(config.head_outputs)
        if config.head_outputs == 2:
            head_b2[1] = 1.0  # start with sigma^2 near the standardized target variance
        self._param("head/b2", head_b2)

    # -- forward pieces ---------------------------------------------------------

    def embed_inputs(self, batch: EncodedBatch) -> Tensor:
        """Map each column into token space; returns (m, D+1, d) with the
        pooling token at sequence position 0."""
        m = len(batch)
        d = self.config.d
        tokens = [ad.broadcast_to(self.params["pool_token"], (m, 1, d))]
        for j, col in enumerate(self.cat_columns):
            emb = ad.embedding_lookup(self.params[f"embed/{col}"], batch.cat_indices[:, j], column=col)
            tokens.append(ad.reshape(emb, (m, 1, d)))
        if self.num_columns:
            x = Tensor(np.ascontiguousarray(batch.num_values.T.reshape(len(self.num_columns), m, 1)))
            h = ad.relu(ad.add(ad.matmul(x, self.params["numenc/W1"]), self.params["numenc/b1"]))
            h = ad.add(ad.matmul(h, self.params["numenc/W2"]), self.params["numenc/b2"])
            tokens.append(ad.transpose(h, (1, 0, 2)))
        return ad.concat(tokens, axis=1)

    def _attention(self, x: Tensor, prefix: str, heads: int, training: bool, rng) -> Tensor:
        b, t, dim = x.shape
        dh = dim // heads
        p = self.config.dropout

        def proj(w, bias):
            return ad.add(ad.matmul(x, self.params[f"{prefix}/{w}"]), self.params[f"{prefix}/{bias}"])

        def split_heads(z):
            return ad.transpose(ad.reshape(z, (b, t, heads, dh)), (0, 2, 1, 3))

        q = split_heads(proj("Wq", "bq"))
        k = split_heads(proj("Wk", "bk"))
        v = split_heads(proj("Wv", "bv"))
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), Tensor(1.0 / math.sqrt(dh)))
        attn = ad.dropout(ad.softmax(scores, axis=-1), p, rng, training)
        ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (b, t, dim))
        out = ad.add(ad.matmul(ctx, self.params[f"{prefix}/Wo"]), self.params[f"{prefix}/bo"])
        return ad.dropout(out, p, rng, training)

    def inter_sample_attention(self, z: Tensor, layer: int, training: bool = False, rng=None) -> Tensor:
        """Attention across the rows of the batch: concat each row's tokens to
        one vector, attend over the m positions, split back to (m, S, d)."""
        m, s, d = z.shape
        flat = ad.reshape(z, (1, m, s * d))
        out = self._attention(flat, f"block{layer}/inter", self.config.heads, training, rng)
        return ad.reshape(out, (m, s, d))

    def _feed_forward(self, x: Tensor, prefix: str, training: bool, rng) -> Tensor:
        p = self.config.dropout
        h = ad.relu(ad.add(ad.matmul(x, self.params[f"{prefix}/W1"]), self.params[f"{prefix}/b1"]))
        h = ad.dropout(h, p, rng, training)
        h = ad.add(ad.matmul(h, self.params[f"{prefix}/W2"]), self.params[f"{prefix}/b2"])
        return ad.dropout(h, p, rng, training)

    def _layer_norm(self, x: Tensor, prefix: str) -> Tensor:
        return ad.layer_norm(x, self.params[f"{prefix}/gamma"], self.params[f"{prefix}/beta"])

    def saint_block_forward(self, z: Tensor, layer: int, training: bool = False, rng=None) -> Tensor:
        """One block: residual self-attention, feed-forward, inter-sample
        attention, feed-forward, each followed by layer norm."""
        pre = f"block{layer}"
        z = self._layer_norm(ad.add(z, self._attention(z, f"{pre}/self", self.config.heads, training, rng)), f"{pre}/ln1")
        z = self._layer_norm(ad.add(z, self._feed_forward(z, f"{pre}/ff1", training, rng)), f"{pre}/ln2")
        z = self._layer_norm(ad.add(z, self.inter_sample_attention(z, layer, training, rng)), f"{pre}/ln3")
        z = self._layer_norm(ad.add(z, self._feed_forward(z, f"{pre}/ff2", training, rng)), f"{pre}/ln4")
        return z

    def forward_encoded(self, batch: EncodedBatch, training: bool = False,
                        rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor | None]:
        """Run the network; returns per-row (mu_std, s_raw) in input row order."""
        if len(batch) == 0:
            raise ConfigurationError("forward on an empty batch")
        order = canonical_order(batch)
        inv = np.empty(len(batch), dtype=np.int64)
        inv[order] = np.arange(len(batch))

        z = self.embed_inputs(batch.take(order))
        for layer in range(self.config.depth):
            z = self.saint_block_forward(z, layer, training, rng)
            if not np.all(np.isfinite(z.data)):
                raise ModelError(f"non-finite activations after block {layer}")
        pooled = ad.take(z, (slice(None), 0))
        h = ad.relu(ad.add(ad.matmul(pooled, self.params["head/W1"]), self.params["head/b1"]))
        out = ad.add(ad.matmul(h, self.params["head/W2"]), self.params["head/b2"])

        mu = ad.take(out, (slice(None), 0))[inv]
        s_raw = ad.take(out, (slice(None), 1))[inv] if self.config.head_outputs == 2 else None
        return mu, s_raw


class ProbMlpModel(_ModelBase):
    """Deep MLP over categorical embeddings plus standardized numerics."""

    kind = "probmlp"

    def __init__(self, config: MLPConfig, encoders: FittedEncoders, schema: FeatureSchema,
                 rng: np.random.Generator | None = None):
        super().__init__(config, encoders, schema)
        rng = rng if rng is not None else np.random.default_rng(0)
        e = config.embed_dim
        for col in self.cat_columns:
            self._param(f"embed/{col}", rng.normal(0.0, 0.02, size=(encoders.vocab_size(col), e)))
        in_dim = len(self.cat_columns) * e + len(self.num_columns)
        dims = [in_dim] + [config.hidden_dim] * config.n_layers
        for i in range(config.n_layers):
            self._param(f"layer{i}/W", _uniform_linear(rng, dims[i], (dims[i], dims[i + 1])))
            self._param(f"layer{i}/b", np.zeros(dims[i + 1]))
        self._param("head/W", _uniform_linear(rng, config.hidden_dim, (config.hidden_dim, config.head_outputs)))
        head_b = np.zeros(config.head_outputs)
        if config.head_outputs == 2:
            head_b[1] = 1.0
        self._param("head/b", head_b)

    def forward_encoded(self, batch: EncodedBatch, training: bool = False,
                        rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor | None]:
        if len(batch) == 0:
            raise ConfigurationError("forward on an empty batch")
        m = len(batch)
        pieces = []
        for j, col in enumerate(self.cat_columns):
            pieces.append(ad.embedding_lookup(self.params[f"embed/{col}"], batch.cat_indices[:, j], column=col))
        if self.num_columns:
            pieces.append(Tensor(batch.num_values))
        h = ad.concat(pieces, axis=1) if len(pieces) > 1 else pieces[0]
        for i in range(self.config.n_layers):
            h = ad.relu(ad.add(ad.matmul(h, self.params[f"layer{i}/W"]), self.params[f"layer{i}/b"]))
            h = ad.dropout(h, self.config.dropout, rng, training)
        out = ad.add(ad.matmul(h, self.params["head/W"]), self.params["head/b"])
        if not np.all(np.isfinite(out.data)):
            raise ModelError("non-finite activations in MLP head")
        mu = ad.take(out, (slice(None), 0))
        s_raw = ad.take(out, (slice(None), 1)) if self.config.head_outputs == 2 else None
        return mu, s_raw


# -- prediction ---------------------------------------------------------------------


def variance_from_raw(s_raw: np.ndarray, link: str, eps: float) -> np.ndarray:
    """Positive sigma^2 (standardized space) from the head's raw output."""
    if link == "clamp":
        return np.maximum(s_raw, eps)
    if link == "softplus":
        return np.maximum(s_raw, 0.0) + np.log1p(np.exp(-np.abs(s_raw))) + eps
    raise ConfigurationError(f"unknown variance link {link!r}")


def sigma_floor(model) -> float:
    """Smallest representable sigma in currency units (clamp floor)."""
    return math.sqrt(model.config.epsilon) * model.encoders.target_std


def _to_predictions(model, mu_std: np.ndarray, s_raw: np.ndarray) -> list[GaussianPrediction]:
    enc = model.encoders
    var = variance_from_raw(s_raw, model.config.variance_link, model.config.epsilon)
    mu = mu_std * enc.target_std + enc.target_mean
    sigma = np.sqrt(var) * enc.target_std
    preds = []
    for m_i, s_i in zip(mu, sigma):
        if m_i > 0:
            preds.append(GaussianPrediction(float(m_i), float(s_i), 1.0 - float(s_i) / float(m_i)))
        else:
            preds.append(GaussianPrediction(float(m_i), float(s_i), None, excluded=True))
    return preds


def predict_gaussian(
    model,
    batch: EncodedBatch,
    context_policy: str = "fixed-context",
    context_batch: EncodedBatch | None = None,
    batch_size: int | None = None,
) -> list[GaussianPrediction]:
    """Score encoded rows in eval mode and return currency-unit distributions.

    Under "fixed-context" every query row is scored alone inside the stored
    deterministic context batch (required); under "batch-as-is" rows attend
    to each other in chunks of `batch_size` (all rows at once when None).
    """
    if model.config.head_outputs != 2:
        raise ConfigurationError("model has a point head; use mc_dropout_predict for uncertainty")
    if context_policy not in CONTEXT_POLICIES:
        raise ConfigurationError(f"context_policy must be one of {CONTEXT_POLICIES}")
    if len(batch) == 0:
        return []

    mu_parts: list[np.ndarray] = []
    sraw_parts: list[np.ndarray] = []
    with ad.no_grad():
        if context_policy == "fixed-context":
            from .errors import CheckpointError

            if context_batch is None or len(context_batch) == 0:
                raise CheckpointError("fixed-context prediction needs the checkpoint's context batch")
            for i in range(len(batch)):
                combined = EncodedBatch.concatenate([batch.take(np.asarray([i])), context_batch])
                mu, s_raw = model.forward_encoded(combined, training=False)
                mu_parts.append(mu.data[:1])
                sraw_parts.append(s_raw.data[:1])
        else:
            step = batch_size if batch_size else len(batch)
            for start in range(0, len(batch), step):
                chunk = batch.take(np.arange(start, min(start + step, len(batch))))
                mu, s_raw = model.forward_encoded(chunk, training=False)
                mu_parts.append(mu.data)
                sraw_parts.append(s_raw.data)
    return _to_predictions(model, np.concatenate(mu_parts), np.concatenate(sraw_parts))


def mc_dropout_predict(
    model,
    batch: EncodedBatch,
    k: int = 64,
    seed: int = 0,
    batch_size: int | None = None,
) -> list[GaussianPrediction]:
    """Uncertainty from K dropout-active forward passes.

    mu is the sample mean and sigma the unbiased sample std of the K point
    predictions, in currency units. With dropout 0 the passes are identical;
    sigma collapses to the clamp floor and a warning is emitted.
    """
    if k < 2:
        raise ConfigurationError("mc_dropout_predict needs k >= 2")
    if len(batch) == 0:
        return []
    enc = model.encoders
    p = model.config.dropout
    if p == 0.0:
        warnings.warn("mc-dropout on a model with dropout 0 is degenerate; sigma is floored")
    rng = np.random.default_rng(seed)
    step = batch_size if batch_size else len(batch)
    draws = np.empty((k, len(batch)))
    for pass_i in range(k):
        outs = []
        for start in range(0, len(batch), step):
            chunk = batch.take(np.arange(start, min(start + step, len(batch))))
            mu, _ = model.forward_encoded(chunk, training=True, rng=rng)
            outs.append(mu.data)
        draws[pass_i] = np.concatenate(outs)
    mu_std = draws.mean(axis=0)
    sigma_std = draws.std(axis=0, ddof=1)
    mu = mu_std * enc.target_std + enc.target_mean
    sigma = np.maximum(sigma_std * enc.target_std, sigma_floor(model))
    preds = []
    for m_i, s_i in zip(mu, sigma):
        if m_i > 0:
            preds.append(GaussianPrediction(float(m_i), float(s_i), 1.0 - float(s_i) / float(m_i)))
        else:
            preds.append(GaussianPrediction(float(m_i), float(s_i), None, excluded=True))
    return preds


def build_model(kind: str, config, encoders: FittedEncoders, schema: FeatureSchema,
                rng: np.random.Generator | None = None):
    if kind == "probsaint":
        return ProbSaintModel(config, encoders, schema, rng)
    if kind == "probmlp":
        return ProbMlpModel(config, encoders, schema, rng)
    raise ConfigurationError(f"unknown model kind {kind!r}")
