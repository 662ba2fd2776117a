"""Evaluation metrics: Gaussian NLL, MAE/MAPE, confidence buckets, coverage, KNN.

All metrics operate in original currency units. The NLL here is the
training loss evaluated on raw-unit predictions: mean of
0.5*(log(max(sigma^2, eps)) + (y-mu)^2 / max(sigma^2, eps)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError
from .model import GaussianPrediction
from .pipeline import EncodedBatch

MAPE_EPS = 1e-8


def _check_lengths(*arrays) -> None:
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ShapeError(f"metric inputs must have equal lengths, got {sorted(lengths)}")


def nll_metric(y, mu, sigma2, eps: float = 1e-6) -> float:
    """Mean heteroscedastic Gaussian loss with a variance floor."""
    if eps <= 0:
        raise ConfigurationError("nll eps must be positive")
    y, mu, sigma2 = (np.asarray(a, dtype=np.float64) for a in (y, mu, sigma2))
    _check_lengths(y, mu, sigma2)
    var = np.maximum(sigma2, eps)
    return float(np.mean(0.5 * (np.log(var) + (y - mu) ** 2 / var)))


def mae_metric(y, mu) -> float:
    y, mu = np.asarray(y, dtype=np.float64), np.asarray(mu, dtype=np.float64)
    _check_lengths(y, mu)
    return float(np.mean(np.abs(y - mu)))


def mape_metric(y, mu, eps: float = MAPE_EPS) -> float:
    """Mean |y-mu| / max(eps, |y|); blows up by design as y approaches 0."""
    y, mu = np.asarray(y, dtype=np.float64), np.asarray(mu, dtype=np.float64)
    _check_lengths(y, mu)
    return float(np.mean(np.abs(y - mu) / np.maximum(eps, np.abs(y))))


def confidence_scores(preds: list[GaussianPrediction]) -> tuple[np.ndarray, np.ndarray]:
    """Per-row C = 1 - sigma/mu plus an exclusion mask for mu <= 0 rows."""
    c = np.full(len(preds), np.nan)
    excluded = np.zeros(len(preds), dtype=bool)
    for i, p in enumerate(preds):
        if p.mu > 0:
            c[i] = 1.0 - p.sigma / p.mu
        else:
            excluded[i] = True
    return c, excluded


@dataclass
class ConfidenceBucket:
    confidence_lo: float
    confidence_hi: float
    n: int
    mape: float | None


def bucketed_report(
    y,
    preds: list[GaussianPrediction],
    bucket_edges=None,
    n_buckets: int = 20,
) -> list[ConfidenceBucket]:
    """Per-confidence-bucket MAPE over included (mu > 0) rows.

    Buckets are [lo, hi) with the final bucket closed on the right, numpy
    histogram style. Default edges: `n_buckets` equal-width buckets spanning
    the observed confidence range.
    """
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(y, preds)
    c, excluded = confidence_scores(preds)
    keep = ~excluded
    if bucket_edges is None:
        if not keep.any():
            return []
        lo, hi = float(c[keep].min()), float(c[keep].max())
        if lo == hi:
            hi = lo + 1e-9
        bucket_edges = np.linspace(lo, hi, n_buckets + 1)
    edges = np.asarray(bucket_edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or not np.all(np.diff(edges) > 0):
        raise ConfigurationError("bucket edges must be strictly increasing with at least two values")

    mu = np.asarray([p.mu for p in preds])
    ape = np.abs(y - mu) / np.maximum(MAPE_EPS, np.abs(y))
    nb = len(edges) - 1
    idx = np.searchsorted(edges, c, side="right") - 1
    idx[c == edges[-1]] = nb - 1  # close the last bucket
    buckets = []
    for b in range(nb):
        mask = keep & (idx == b) & (c >= edges[0]) & (c <= edges[-1])
        n = int(mask.sum())
        buckets.append(
            ConfidenceBucket(
                confidence_lo=float(edges[b]),
                confidence_hi=float(edges[b + 1]),
                n=n,
                mape=float(ape[mask].mean()) if n else None,
            )
        )
    return buckets


def coverage(y, preds: list[GaussianPrediction], k: float) -> float:
    """Fraction of rows whose target falls inside mu +/- k*sigma."""
    if k <= 0:
        raise ConfigurationError("coverage k must be positive")
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(y, preds)
    mu = np.asarray([p.mu for p in preds])
    sigma = np.asarray([p.sigma for p in preds])
    return float(np.mean(np.abs(y - mu) <= k * sigma))


@dataclass
class MetricReport:
    """Aggregate evaluation artifact; serializes losslessly to JSON."""

    nll: float
    mae: float
    mape: float
    n: int
    buckets: list[ConfidenceBucket] = field(default_factory=list)
    coverage_1sigma: float = 0.0
    coverage_2sigma: float = 0.0
    n_excluded: int = 0

    def to_json(self) -> str:
        doc = {
            "nll": self.nll,
            "mae": self.mae,
            "mape": self.mape,
            "n": self.n,
            "coverage_1sigma": self.coverage_1sigma,
            "coverage_2sigma": self.coverage_2sigma,
            "n_excluded": self.n_excluded,
            "buckets": [
                {"confidence_lo": b.confidence_lo, "confidence_hi": b.confidence_hi, "n": b.n, "mape": b.mape}
                for b in self.buckets
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        doc = json.loads(text)
        return cls(
            nll=doc["nll"],
            mae=doc["mae"],
            mape=doc["mape"],
            n=doc["n"],
            coverage_1sigma=doc["coverage_1sigma"],
            coverage_2sigma=doc["coverage_2sigma"],
            n_excluded=doc["n_excluded"],
            buckets=[ConfidenceBucket(**b) for b in doc["buckets"]],
        )


def evaluate_predictions(y, preds: list[GaussianPrediction], nll_eps: float = 1e-6) -> MetricReport:
    """Full metric bundle for raw-unit predictions against raw targets."""
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(y, preds)
    mu = np.asarray([p.mu for p in preds])
    sigma = np.asarray([p.sigma for p in preds])
    buckets = bucketed_report(y, preds)
    _, excluded = confidence_scores(preds)
    return MetricReport(
        nll=nll_metric(y, mu, sigma**2, eps=nll_eps),
        mae=mae_metric(y, mu),
        mape=mape_metric(y, mu),
        n=len(y),
        buckets=buckets,
        coverage_1sigma=coverage(y, preds, 1.0),
        coverage_2sigma=coverage(y, preds, 2.0),
        n_excluded=int(excluded.sum()),
    )


def buckets_to_csv(buckets: list[ConfidenceBucket]) -> str:
    lines = ["confidence_lo,confidence_hi,n,mape"]
    for b in buckets:
        mape = repr(b.mape) if b.mape is not None else ""
        lines.append(f"{b.confidence_lo!r},{b.confidence_hi!r},{b.n},{mape}")
    return "\n".join(lines) + "\n"


def interval_plot_csv(y, preds: list[GaussianPrediction]) -> str:
    """Plot-ready rows (index, y, mu, sigma) sorted by descending target."""
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(y, preds)
    order = np.argsort(-y, kind="stable")
    lines = ["index,y,mu,sigma"]
    for rank, i in enumerate(order):
        lines.append(f"{rank},{float(y[i])!r},{preds[i].mu!r},{preds[i].sigma!r}")
    return "\n".join(lines) + "\n"


def knn_baseline(train_batch: EncodedBatch, test_batch: EncodedBatch, k: int) -> np.ndarray:
    """Mean target of the k nearest training rows per test row.

    Distance is squared Euclidean over standardized numerics plus one unit
    per mismatched categorical column.
    """
    n_train = len(train_batch)
    if k < 1 or k > n_train:
        raise ConfigurationError(f"k must be in [1, {n_train}], got {k}")
    preds = np.empty(len(test_batch))
    chunk = max(1, int(2e7) // max(1, n_train))
    for start in range(0, len(test_batch), chunk):
        stop = min(start + chunk, len(test_batch))
        num_d = (
            test_batch.num_values[start:stop, None, :] - train_batch.num_values[None, :, :]
        )
        d2 = np.einsum("ijk,ijk->ij", num_d, num_d)
        cat_mismatch = (
            test_batch.cat_indices[start:stop, None, :] != train_batch.cat_indices[None, :, :]
        ).sum(axis=2)
        d2 += cat_mismatch
        nearest = np.argpartition(d2, k - 1, axis=1)[:, :k]
        preds[start:stop] = train_batch.target_raw[nearest].mean(axis=1)
    return preds
