"""Checkpoint container: named little-endian float64 arrays plus JSON metadata.

Stored as an uncompressed ``.npz`` (zip of ``.npy`` members, each carrying its
own dtype and shape header). Keys are ``param/<name>``, ``adam_m/<name>``,
``adam_v/<name>`` and ``meta`` (UTF-8 JSON bytes).
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from .optim import AdamState

_LE_F64 = np.dtype("<f8")


def save_checkpoint(path: str | os.PathLike, params: dict[str, np.ndarray],
                    optimizer: AdamState | None = None, meta: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, value in params.items():
        arrays[f"param/{name}"] = np.ascontiguousarray(value, dtype=_LE_F64)
    meta = dict(meta or {})
    if optimizer is not None:
        meta["adam_step"] = optimizer.step
        for name, value in optimizer.exp_avg.items():
            arrays[f"adam_m/{name}"] = np.ascontiguousarray(value, dtype=_LE_F64)
        for name, value in optimizer.exp_avg_sq.items():
            arrays[f"adam_v/{name}"] = np.ascontiguousarray(value, dtype=_LE_F64)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], AdamState, dict]:
    params: dict[str, np.ndarray] = {}
    state = AdamState()
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(archive["meta"].tobytes().decode("utf-8")) if "meta" in archive else {}
        for key in archive.files:
            if key == "meta":
                continue
            kind, _, name = key.partition("/")
            value = archive[key]
            if value.dtype != _LE_F64:
                raise ShapeError(f"checkpoint entry {key} has dtype {value.dtype}, expected <f8")
            if kind == "param":
                params[name] = value
            elif kind == "adam_m":
                state.exp_avg[name] = value
            elif kind == "adam_v":
                state.exp_avg_sq[name] = value
    state.step = int(meta.pop("adam_step", 0))
    return params, state, meta
