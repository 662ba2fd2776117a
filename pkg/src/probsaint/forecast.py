"""Offer-duration sweeps: what-if price distributions for a single vehicle.

For each hypothetical duration the vehicle's offer-duration value is
overwritten (then re-standardized by the pipeline) and the row is scored
under the fixed-context policy, one duration at a time so hypothetical
variants of the same car never attend to each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .errors import ConfigurationError, EncodingError, NormalizationError
from .model import predict_gaussian
from .pipeline import encode_rows

DEFAULT_DURATIONS = (15, 45, 75, 105, 150)


@dataclass
class SweepResult:
    """Ordered (duration, mu, sigma) triples for one vehicle, raw and normalized."""

    vehicle_id: str
    durations: list[float]
    mu: list[float]
    sigma: list[float]
    mu_normalized: list[float] | None = None
    confidence: list[float | None] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "durations": self.durations,
            "mu": self.mu,
            "sigma": self.sigma,
            "mu_normalized": self.mu_normalized,
            "confidence": self.confidence,
        }

    def to_csv(self) -> str:
        lines = ["duration,mu,sigma,mu_normalized"]
        norm = self.mu_normalized if self.mu_normalized is not None else [None] * len(self.mu)
        for o, m, s, nv in zip(self.durations, self.mu, self.sigma, norm):
            lines.append(f"{o!r},{m!r},{s!r},{nv if nv is None else repr(nv)}")
        return "\n".join(lines) + "\n"


def duration_sweep(
    ckpt: Checkpoint,
    vehicle_row: dict,
    durations=DEFAULT_DURATIONS,
    vehicle_id: str = "vehicle",
    duration_column: str | None = None,
    model=None,
    context_batch=None,
) -> SweepResult:
    """Score one vehicle at several hypothetical offer durations.

    A pure function of (checkpoint, vehicle, durations): repeated calls are
    byte-identical. Pass a prebuilt model/context batch to skip rebuild cost
    (the result is identical either way). Not yet normalized; see
    `normalize_sweep`.
    """
    durations = [float(o) for o in durations]
    if not durations:
        raise ConfigurationError("durations must be non-empty")
    if any(o <= 0 for o in durations):
        raise ConfigurationError("durations must be positive")

    column = duration_column or ckpt.schema.offer_duration_column()
    if column is None:
        raise ConfigurationError(
            "schema has no offer-duration column (expected a numeric column "
            "whose name contains 'offer_duration')"
        )

    if model is None:
        model = ckpt.build_model()
    if context_batch is None:
        context_batch, ctx_errors = encode_rows(ckpt.context_rows, ckpt.schema, ckpt.encoders)
        if ctx_errors:
            raise EncodingError(f"checkpoint context rows failed to encode: {ctx_errors[0]}")

    mus: list[float] = []
    sigmas: list[float] = []
    confidences: list[float | None] = []
    for o in durations:
        row = dict(vehicle_row)
        row[column] = repr(o) if not float(o).is_integer() else str(int(o))
        batch, errors = encode_rows([row], ckpt.schema, ckpt.encoders)
        if errors:
            raise EncodingError(f"vehicle row failed to encode at duration {o}: {errors[0]}")
        pred = predict_gaussian(model, batch, "fixed-context", context_batch=context_batch)[0]
        mus.append(pred.mu)
        sigmas.append(pred.sigma)
        confidences.append(pred.confidence)

    return SweepResult(
        vehicle_id=vehicle_id,
        durations=durations,
        mu=mus,
        sigma=sigmas,
        confidence=confidences,
    )


def normalize_sweep(sweep: SweepResult) -> SweepResult:
    """Fill mu_normalized = mu / mu[first duration]; sigma is untouched.

    Idempotent; rejects a zero anchor price.
    """
    if sweep.mu[0] == 0:
        raise NormalizationError("cannot normalize: predicted price at the first duration is 0")
    return SweepResult(
        vehicle_id=sweep.vehicle_id,
        durations=list(sweep.durations),
        mu=list(sweep.mu),
        sigma=list(sweep.sigma),
        mu_normalized=[m / sweep.mu[0] for m in sweep.mu],
        confidence=list(sweep.confidence),
    )


def sweep_to_files(sweep: SweepResult, out_dir, stem: str = "sweep") -> tuple[str, str]:
    """Write the JSON and plot-ready CSV artifacts; returns their paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    json_path.write_text(json.dumps(sweep.to_json_dict(), indent=2))
    csv_path.write_text(sweep.to_csv())
    return str(json_path), str(csv_path)
