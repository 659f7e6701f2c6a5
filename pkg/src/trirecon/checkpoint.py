"""Versioned checkpoint container: structured-text header + torch payload.

Layout: magic line `TRCKPT 1`, a decimal header-length line, a JSON header
(kind, config echo, step count, seed bookkeeping for exact resume), then the
torch-serialized payload (state dicts and any extra tensors).
"""

from __future__ import annotations

import io
import json

import torch

MAGIC = b"TRCKPT 1\n"


def save_checkpoint(path, kind: str, config: dict, step: int, payload: dict, rng: dict | None = None):
    header = {
        "kind": kind,
        "config": config,
        "step": int(step),
        "rng": rng or {},
        "format_version": 1,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    torch.save(payload, buf)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(f"{len(header_bytes)}\n".encode())
        f.write(header_bytes)
        f.write(buf.getvalue())


def load_checkpoint(path, expect_kind: str | None = None):
    """Returns (header dict, payload dict)."""
    with open(path, "rb") as f:
        if f.readline() != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        n = int(f.readline().strip())
        header = json.loads(f.read(n).decode())
        payload = torch.load(io.BytesIO(f.read()), map_location="cpu", weights_only=False)
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ValueError(f"{path}: expected kind {expect_kind!r}, found {header['kind']!r}")
    return header, payload


def write_loss_curve(path, rows, columns):
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
