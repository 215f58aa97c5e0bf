"""Checkpoint format: text manifest plus one little-endian float32 blob.

The manifest is key-value text. `format = 1` comes first, arbitrary metadata
keys follow, then one `param.<name> = <d0>x<d1>x... @ <byte offset>` line per
array in blob order. The blob concatenates every array row-major as
little-endian float32.
"""

from __future__ import annotations

import os

import numpy as np

from .layers import INIT_SCHEME

FORMAT_VERSION = "1"


def save_checkpoint(prefix: str, state: dict, meta: dict | None = None) -> tuple[str, str]:
    manifest_path = prefix + ".manifest"
    blob_path = prefix + ".blob"
    lines = [f"format = {FORMAT_VERSION}", f"init = {INIT_SCHEME}"]
    for key, value in (meta or {}).items():
        if key in ("format", "init") or key.startswith("param."):
            raise ValueError(f"reserved metadata key {key!r}")
        lines.append(f"{key} = {value}")
    offset = 0
    chunks = []
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        shape = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
        lines.append(f"param.{name} = {shape} @ {offset}")
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    with open(manifest_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(blob_path, "wb") as fh:
        fh.write(b"".join(chunks))
    return manifest_path, blob_path


def load_checkpoint(prefix: str) -> tuple[dict, dict]:
    manifest_path = prefix + ".manifest"
    blob_path = prefix + ".blob"
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(manifest_path)
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    state: dict = {}
    meta: dict = {}
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if lineno == 0:
                if key != "format" or value != FORMAT_VERSION:
                    raise ValueError(f"unsupported checkpoint format: {line!r}")
                continue
            if key.startswith("param."):
                name = key[len("param."):]
                shape_s, _, off_s = value.partition("@")
                shape_s = shape_s.strip()
                shape = () if shape_s == "scalar" else tuple(
                    int(d) for d in shape_s.split("x")
                )
                offset = int(off_s.strip())
                count = int(np.prod(shape)) if shape else 1
                arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
                state[name] = arr.reshape(shape).copy()
            else:
                meta[key] = value
    return state, meta
