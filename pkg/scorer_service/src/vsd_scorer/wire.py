"""Tensor payloads on the wire: base64 little-endian float32 plus a shape list."""

from __future__ import annotations

import base64

import numpy as np
import torch


def encode_array(t) -> dict:
    arr = np.ascontiguousarray(
        t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else t, dtype="<f4"
    )
    return {"data": base64.b64encode(arr.tobytes()).decode("ascii"), "shape": list(arr.shape)}


def decode_array(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    n = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * n:
        raise ValueError(f"tensor payload holds {len(raw)} bytes, expected {4 * n}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
