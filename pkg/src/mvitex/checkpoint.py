"""Binary checkpoints for hash-grid texture fields.

Layout: the 8 magic bytes ``MVITEX1\\0``, a little-endian header of 32-bit
fields (levels, features_per_level, base_resolution, growth_factor as
float32, table_size_log2, hidden_layers, hidden_width), then every
parameter as little-endian float32 in declaration order: hash tables first,
then each MLP layer's weight matrix (row-major) followed by its bias.

``save_train_state`` / ``load_train_state`` write an optional sidecar next
to a checkpoint carrying what exact resumption additionally needs
(optimizer moments, RNG state, step counter); the checkpoint itself stays a
portable parameters-only artifact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .texture_field import HashGridConfig, HashGridField, MLPConfig, TextureFieldParams

MAGIC = b"MVITEX1\0"
_HEADER = struct.Struct("<iiifiii")


class CheckpointError(RuntimeError):
    pass


def save_field(path, field: HashGridField):
    params = field.params
    header = _HEADER.pack(
        field.grid.levels,
        field.grid.features_per_level,
        field.grid.base_resolution,
        field.grid.growth_factor,
        field.grid.table_size_log2,
        field.mlp.hidden_layers,
        field.mlp.hidden_width,
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for arr in params.as_list():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_field(path) -> HashGridField:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a texture checkpoint (bad magic)")
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise CheckpointError(f"{path}: truncated header")
        levels, fpl, base_res, growth, t_log2, hidden_layers, hidden_width = _HEADER.unpack(raw)
        try:
            grid = HashGridConfig(
                levels=levels,
                features_per_level=fpl,
                base_resolution=base_res,
                growth_factor=growth,
                table_size_log2=t_log2,
            )
            mlp = MLPConfig(hidden_layers=hidden_layers, hidden_width=hidden_width)
        except ValueError as exc:
            raise CheckpointError(f"{path}: invalid header: {exc}") from exc

        blob = fh.read()
    dims = [grid.feature_dim] + [mlp.hidden_width] * mlp.hidden_layers + [3]
    shapes = [(grid.levels, grid.table_size, grid.features_per_level)]
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        shapes.append((d_out, d_in))
        shapes.append((d_out,))
    counts = [int(np.prod(s)) for s in shapes]
    if len(blob) != 4 * sum(counts):
        raise CheckpointError(
            f"{path}: parameter blob holds {len(blob)} bytes, expected {4 * sum(counts)}"
        )
    flat = np.frombuffer(blob, dtype="<f4")
    arrays, off = [], 0
    for shape, cnt in zip(shapes, counts):
        arrays.append(flat[off : off + cnt].reshape(shape).astype(np.float32))
        off += cnt
    params = TextureFieldParams(
        tables=arrays[0],
        weights=arrays[1::2],
        biases=arrays[2::2],
    )
    return HashGridField(grid, mlp, params)


def _state_path(ckpt_path) -> Path:
    p = Path(ckpt_path)
    return p.with_suffix(p.suffix + ".state.npz")


def save_train_state(ckpt_path, step, moments_m, moments_v, adam_t, rng_state):
    np.savez(
        _state_path(ckpt_path),
        step=np.int64(step),
        adam_t=np.int64(adam_t),
        rng_state=np.frombuffer(json.dumps(rng_state).encode(), dtype=np.uint8),
        **{f"m{i}": m for i, m in enumerate(moments_m)},
        **{f"v{i}": v for i, v in enumerate(moments_v)},
    )


def load_train_state(ckpt_path) -> dict:
    path = _state_path(ckpt_path)
    if not path.exists():
        raise CheckpointError(f"{path}: no resume state beside checkpoint")
    with np.load(path) as data:
        n = sum(1 for k in data.files if k.startswith("m"))
        return {
            "step": int(data["step"]),
            "adam_t": int(data["adam_t"]),
            "rng_state": json.loads(bytes(data["rng_state"]).decode()),
            "moments_m": [data[f"m{i}"] for i in range(n)],
            "moments_v": [data[f"v{i}"] for i in range(n)],
        }
