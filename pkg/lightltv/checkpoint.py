"""Model checkpoints: a JSON manifest plus little-endian float64 tensor payloads.

Small tensors are inlined as base64; larger ones go to ``<stem>.<name>.bin``
next to the manifest. Every payload carries its byte count and md5 digest, so
truncation or corruption is detected before any model is returned.
"""

from __future__ import annotations

import base64
import json
import os
from typing import TYPE_CHECKING, Optional

import numpy as np
from pydantic import ValidationError

from .exceptions import CheckpointError, ConfigError
from .features import FeatureEncoder
from .standardize import LabelStandardizer
from .types import CheckpointManifest, TensorEntry
from .utils import compute_mdhash_id, logger, write_json

if TYPE_CHECKING:
    from .models.base import BaseScorer

CHECKPOINT_VERSION = 1
WIRE_DTYPE = np.dtype("<f8")
INLINE_LIMIT = 4096
"""Tensors with at most this many values are stored inline."""


def _tensor_file(path: str, name: str) -> str:
    stem = os.path.splitext(path)[0]
    return f"{stem}.{name}.bin"


def save_checkpoint(
    model: "BaseScorer",
    path: str,
    standardizer: Optional[LabelStandardizer] = None,
    inline_limit: int = INLINE_LIMIT,
) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    entries = []
    for name, tensor in model.params.items():
        payload = tensor.values.astype(WIRE_DTYPE).tobytes()
        entry = {
            "name": name,
            "shape": list(tensor.shape),
            "nbytes": len(payload),
            "digest": compute_mdhash_id(payload),
        }
        if tensor.size <= inline_limit:
            entry.update(encoding="base64", data=base64.b64encode(payload).decode("ascii"))
        else:
            file_path = _tensor_file(path, name)
            with open(file_path, "wb") as f:
                f.write(payload)
            entry.update(encoding="file", file=os.path.basename(file_path))
        entries.append(TensorEntry(**entry))

    manifest = CheckpointManifest(
        version=CHECKPOINT_VERSION,
        model_type=model.model_type,
        hyperparams=model.hyperparams(),
        encoder=model.encoder.to_dict(),
        standardizer=standardizer.to_dict() if standardizer is not None else None,
        tensors=entries,
    )
    write_json(manifest.model_dump(exclude_none=True), path)
    logger.info(f"Saved {model.model_type} checkpoint ({model.params.num_params} values) to {path}")


def _read_payload(entry: TensorEntry, path: str) -> bytes:
    if entry.encoding == "base64":
        try:
            payload = base64.b64decode(entry.data or "", validate=True)
        except ValueError as e:
            raise CheckpointError(f"tensor '{entry.name}': corrupt inline data", path=path) from e
    else:
        file_path = os.path.join(os.path.dirname(os.path.abspath(path)), entry.file or "")
        if not os.path.exists(file_path):
            raise CheckpointError(f"tensor '{entry.name}': payload file missing", path=file_path)
        with open(file_path, "rb") as f:
            payload = f.read()
    if len(payload) != entry.nbytes:
        raise CheckpointError(
            f"tensor '{entry.name}': truncated payload ({len(payload)} of {entry.nbytes} bytes)",
            path=path,
        )
    if compute_mdhash_id(payload) != entry.digest:
        raise CheckpointError(f"tensor '{entry.name}': digest mismatch", path=path)
    return payload


def read_manifest(path: str) -> CheckpointManifest:
    if not os.path.exists(path):
        raise CheckpointError("checkpoint not found", path=path)
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        manifest = CheckpointManifest.model_validate(raw)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"truncated or corrupt manifest: {e.msg}", row=e.lineno, path=path) from e
    except ValidationError as e:
        raise CheckpointError(f"invalid manifest: {e.errors()[0]['msg']}", path=path) from e
    if manifest.version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {manifest.version}, expected {CHECKPOINT_VERSION}",
            path=path,
        )
    return manifest


def load_checkpoint(
    path: str, expected_model_type: Optional[str] = None
) -> tuple["BaseScorer", Optional[LabelStandardizer]]:
    """Rebuild the model and its standardizer; nothing is returned unless every tensor checks out."""
    from .models import build_model

    manifest = read_manifest(path)
    if expected_model_type is not None and manifest.model_type != expected_model_type:
        raise CheckpointError(
            f"model type mismatch: checkpoint holds '{manifest.model_type}', expected '{expected_model_type}'",
            path=path,
        )
    try:
        model = build_model(manifest.model_type, FeatureEncoder.from_dict(manifest.encoder), **manifest.hyperparams)
    except ConfigError as e:
        raise CheckpointError(f"cannot rebuild model: {e.message}", path=path) from e

    stored = {entry.name: entry for entry in manifest.tensors}
    expected = set(model.params.names)
    if set(stored) != expected:
        missing = sorted(expected - set(stored))
        extra = sorted(set(stored) - expected)
        raise CheckpointError(f"tensor set mismatch: missing {missing}, unexpected {extra}", path=path)

    values = {}
    for name, tensor in model.params.items():
        entry = stored[name]
        if tuple(entry.shape) != tensor.shape:
            raise CheckpointError(
                f"tensor '{name}': shape mismatch {tuple(entry.shape)} != {tensor.shape}", path=path
            )
        payload = _read_payload(entry, path)
        values[name] = np.frombuffer(payload, dtype=WIRE_DTYPE).astype(np.float64).reshape(tensor.shape)
    model.params.restore(values)

    standardizer = LabelStandardizer.from_dict(manifest.standardizer) if manifest.standardizer else None
    logger.info(f"Loaded {manifest.model_type} checkpoint from {path}")
    return model, standardizer
