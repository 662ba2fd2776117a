"""HTTP JSON service over a loaded checkpoint.

All endpoints live under /v1 and speak JSON with full double-precision
number round-tripping. The loaded checkpoint is immutable, so concurrent
requests share it safely and responses are byte-identical for identical
requests. Unknown categories map to the shared unknown token (logged),
mirroring how new vehicles appear in real pricing traffic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import PlainTextResponse, Response

from .checkpoint import Checkpoint
from .errors import ConfigurationError, EncodingError, NormalizationError
from .forecast import DEFAULT_DURATIONS, duration_sweep, normalize_sweep
from .model import predict_gaussian
from .pipeline import encode_rows

logger = logging.getLogger("probsaint.service")


@dataclass
class ServingContext:
    """Checkpoint plus the pieces prediction needs, prepared once at startup."""

    ckpt: Checkpoint
    model: object
    context_batch: object

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "ServingContext":
        model = ckpt.build_model()
        context_batch, errors = encode_rows(ckpt.context_rows, ckpt.schema, ckpt.encoders)
        if errors:
            raise EncodingError(f"checkpoint context rows failed to encode: {errors[0]}")
        return cls(ckpt=ckpt, model=model, context_batch=context_batch)


def _json_response(payload: dict | list, status_code: int = 200) -> Response:
    # repr-based float serialization round-trips doubles exactly
    return Response(
        content=json.dumps(payload),
        status_code=status_code,
        media_type="application/json",
    )


def _error(status_code: int, message: str, **extra) -> Response:
    return _json_response({"error": message, **extra}, status_code=status_code)


def _known_category_warnings(ctx: ServingContext, rows: list[dict]) -> None:
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            continue
        for col in ctx.ckpt.schema.categorical_columns:
            v = row.get(col)
            if v not in (None, "") and str(v) not in ctx.ckpt.encoders.categories[col]:
                logger.info("row %d: unknown %s %r mapped to the unknown token", i, col, v)


def create_app(ctx: ServingContext | None) -> FastAPI:
    """Build the service; `ctx=None` yields 503s on model endpoints."""
    app = FastAPI(title="probsaint pricing service", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def cors(request: Request, call_next):
        response = await call_next(request)
        response.headers["Access-Control-Allow-Origin"] = "*"
        response.headers["Access-Control-Allow-Headers"] = "content-type"
        response.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS"
        return response

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.get("/v1/schema")
    async def schema() -> Response:
        if ctx is None:
            return _error(503, "model not loaded")
        doc = ctx.ckpt.schema.to_json_dict()
        doc["categories"] = {
            col: list(ctx.ckpt.encoders.categories[col])
            for col in ctx.ckpt.schema.categorical_columns
        }
        doc["offer_duration_column"] = ctx.ckpt.schema.offer_duration_column()
        return _json_response(doc)

    @app.get("/v1/model")
    async def model_meta() -> Response:
        if ctx is None:
            return _error(503, "model not loaded")
        import dataclasses

        return _json_response(
            {
                "model_version": ctx.ckpt.model_version,
                "model_kind": ctx.ckpt.model_kind,
                "config": dataclasses.asdict(ctx.ckpt.model_config),
                "objective": ctx.ckpt.objective,
                "train_data_fingerprint": ctx.ckpt.data_fingerprint,
                "train_seed": ctx.ckpt.seed,
            }
        )

    @app.post("/v1/predict")
    async def predict(request: Request) -> Response:
        if ctx is None:
            return _error(503, "model not loaded")
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return _error(400, f"malformed JSON body: {e}")
        if not isinstance(body, dict) or not isinstance(body.get("rows"), list):
            return _error(400, "body must be an object with a 'rows' list")
        rows = body["rows"]
        if not rows:
            return _json_response({"predictions": [], "model_version": ctx.ckpt.model_version})

        _known_category_warnings(ctx, rows)
        try:
            batch, errors = encode_rows(rows, ctx.ckpt.schema, ctx.ckpt.encoders)
        except EncodingError as e:
            return _error(422, str(e), rows=list(range(len(rows))))
        if errors:
            return _error(
                422,
                "; ".join(str(e) for e in errors[:5]),
                rows=[e.row_index for e in errors],
            )
        preds = predict_gaussian(ctx.model, batch, "fixed-context", context_batch=ctx.context_batch)
        return _json_response(
            {
                "predictions": [
                    {
                        "mu": p.mu,
                        "sigma": p.sigma,
                        "confidence": p.confidence,
                        "excluded_flag": p.excluded,
                    }
                    for p in preds
                ],
                "model_version": ctx.ckpt.model_version,
            }
        )

    @app.post("/v1/sweep")
    async def sweep(request: Request) -> Response:
        if ctx is None:
            return _error(503, "model not loaded")
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return _error(400, f"malformed JSON body: {e}")
        if not isinstance(body, dict) or not isinstance(body.get("vehicle"), dict):
            return _error(400, "body must be an object with a 'vehicle' feature map")
        durations = body.get("durations", list(DEFAULT_DURATIONS))
        if not isinstance(durations, list) or not durations:
            return _error(422, "durations must be a non-empty list")
        try:
            durations = [float(o) for o in durations]
        except (TypeError, ValueError):
            return _error(422, "durations must be numbers")
        if any(o <= 0 for o in durations):
            return _error(422, "durations must be positive")

        _known_category_warnings(ctx, [body["vehicle"]])
        try:
            result = duration_sweep(
                ctx.ckpt,
                body["vehicle"],
                durations,
                vehicle_id=str(body.get("vehicle_id", "vehicle")),
                model=ctx.model,
                context_batch=ctx.context_batch,
            )
            result = normalize_sweep(result)
        except EncodingError as e:
            return _error(422, str(e), rows=[0])
        except (ConfigurationError, NormalizationError) as e:
            return _error(422, str(e))
        return _json_response(result.to_json_dict() | {"model_version": ctx.ckpt.model_version})

    return app


def serve(ckpt: Checkpoint, port: int, host: str = "127.0.0.1") -> None:
    """Blocking uvicorn server over a loaded checkpoint."""
    import uvicorn

    app = create_app(ServingContext.from_checkpoint(ckpt))
    uvicorn.run(app, host=host, port=port, log_level="warning")
