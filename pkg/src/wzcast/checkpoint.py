"""Versioned checkpoint container.

A checkpoint is a compressed .npz archive holding every parameter
tensor under ``param/<name>`` plus two JSON strings: ``config`` (the
architecture) and ``meta`` (normalization bounds, segment ids, and
calendar info needed to forecast). The layout is stable across
versions; ``format_version`` guards incompatible changes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

from .errors import DataError
from .model import ModelConfig

FORMAT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray],
                    model_config: ModelConfig, meta: dict) -> None:
    arrays = {f"param/{name}": np.asarray(value) for name, value in params.items()}
    np.savez_compressed(
        path,
        format_version=np.int64(FORMAT_VERSION),
        config=np.str_(json.dumps(dataclasses.asdict(model_config))),
        meta=np.str_(json.dumps(meta)),
        **arrays,
    )


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    with np.load(path, allow_pickle=False) as data:
        if "format_version" not in data or int(data["format_version"]) != FORMAT_VERSION:
            raise DataError(f"{path}: not a version-{FORMAT_VERSION} checkpoint")
        config = ModelConfig(**json.loads(str(data["config"])))
        meta = json.loads(str(data["meta"]))
        params = {key[len("param/"):]: data[key]
                  for key in data.files if key.startswith("param/")}
    if not params:
        raise DataError(f"{path}: checkpoint holds no parameters")
    return params, config, meta


def checkpoint_digest(path) -> str:
    """Short content hash used as the served checkpoint id."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
