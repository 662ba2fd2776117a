"""Single-file model checkpoints: JSON header plus little-endian float64 blobs.

Layout: 8-byte magic, 8-byte little-endian header length, UTF-8 JSON header,
then the concatenated parameter payload. The header records the format
version, model/train configuration, fitted encoders, schema, context rows,
a tensor index (name, shape, offset) and a SHA-256 of the payload, so
round-trips are bit-exact and corruption is detected on load.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, IntegrityError, UnsupportedVersionError
from .model import MLPConfig, ModelConfig, build_model
from .pipeline import FeatureSchema, FittedEncoders

MAGIC = b"PSNTCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Everything needed to reproduce inference: config, encoders, weights,
    the frozen context batch, and provenance metadata."""

    model_kind: str
    model_config: ModelConfig | MLPConfig
    encoders: FittedEncoders
    schema: FeatureSchema
    parameters: dict[str, np.ndarray]
    context_rows: list[dict]
    seed: int
    objective: str = "nll"
    batch_size: int = 128
    data_fingerprint: str = ""
    format_version: int = FORMAT_VERSION
    model_version: str = field(default="", compare=False)

    def build_model(self, rng: np.random.Generator | None = None):
        model = build_model(self.model_kind, self.model_config, self.encoders, self.schema,
                            rng=np.random.default_rng(0) if rng is None else rng)
        model.load_parameters(self.parameters)
        return model


def _config_to_dict(config) -> dict:
    return dataclasses.asdict(config)


def _config_from_dict(kind: str, doc: dict):
    cls = ModelConfig if kind == "probsaint" else MLPConfig
    return cls(**doc)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    names = list(ckpt.parameters)
    blobs = [np.ascontiguousarray(ckpt.parameters[n], dtype="<f8").tobytes() for n in names]
    index = []
    offset = 0
    for name, blob in zip(names, blobs):
        index.append({"name": name, "shape": list(ckpt.parameters[name].shape),
                      "offset": offset, "nbytes": len(blob)})
        offset += len(blob)
    payload = b"".join(blobs)
    header = {
        "format_version": ckpt.format_version,
        "model_kind": ckpt.model_kind,
        "model_config": _config_to_dict(ckpt.model_config),
        "encoders": ckpt.encoders.to_json_dict(),
        "schema": ckpt.schema.to_json_dict(),
        "context_rows": ckpt.context_rows,
        "seed": ckpt.seed,
        "objective": ckpt.objective,
        "batch_size": ckpt.batch_size,
        "data_fingerprint": ckpt.data_fingerprint,
        "tensors": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        f.write(payload)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    header_len = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + header_len:
        raise IntegrityError(f"{path} is truncated before the end of its header")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has a malformed header: {e}") from e

    version = header.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path} uses format version {version}; this build reads up to {FORMAT_VERSION}"
        )

    payload = raw[16 + header_len:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise IntegrityError(f"{path} payload checksum mismatch; file is corrupt")

    parameters: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise IntegrityError(f"{path} tensor {entry['name']!r} extends past the payload")
        arr = np.frombuffer(payload[start:start + nbytes], dtype="<f8").copy()
        parameters[entry["name"]] = arr.reshape(entry["shape"])

    return Checkpoint(
        model_kind=header["model_kind"],
        model_config=_config_from_dict(header["model_kind"], header["model_config"]),
        encoders=FittedEncoders.from_json_dict(header["encoders"]),
        schema=FeatureSchema.from_json_dict(header["schema"]),
        parameters=parameters,
        context_rows=header["context_rows"],
        seed=header["seed"],
        objective=header.get("objective", "nll"),
        batch_size=header.get("batch_size", 128),
        data_fingerprint=header.get("data_fingerprint", ""),
        format_version=version,
        model_version=hashlib.sha256(raw).hexdigest()[:16],
    )
