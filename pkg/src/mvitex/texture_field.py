"""Trainable surface color fields.

Two representations share one query interface (surface_id, u, v) -> RGB:

* ``HashGridField``: multiresolution hash tables feeding a small MLP with a
  sigmoid output. The surface id is folded into the spatial hash so every
  surface gets an independent grid domain without separate tables.
* ``PlainGridField``: one bilinear RGB grid per surface; the closed-form
  baseline representation and the substrate for the baking oracle.

Both come with exact hand-derived backward passes: ``backward`` returns the
gradient of sum_pixels <upstream, rgb> with respect to every parameter.
Forward math runs in the parameter dtype; reductions into parameter
gradients accumulate at 64-bit (np.bincount) regardless of storage dtype,
and chunks are processed in a fixed order so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import UVQueryMap

# Spatial hash multipliers (u cell, v cell, surface id).
HASH_PRIMES = (1, 2654435761, 805459861)

CHUNK = 65536


@dataclass
class HashGridConfig:
    levels: int = 8
    features_per_level: int = 2
    base_resolution: int = 16
    growth_factor: float = 1.5
    table_size_log2: int = 19

    def __post_init__(self):
        if self.levels < 1 or self.features_per_level < 1:
            raise ValueError("levels and features_per_level must be >= 1")
        if self.base_resolution < 2:
            raise ValueError("base_resolution must be >= 2")
        if self.growth_factor <= 1.0:
            raise ValueError("growth_factor must exceed 1")
        if 2**self.table_size_log2 < self.base_resolution**2:
            raise ValueError("hash table must hold at least base_resolution^2 entries")

    @property
    def table_size(self) -> int:
        return 2**self.table_size_log2

    @property
    def feature_dim(self) -> int:
        return self.levels * self.features_per_level

    def level_resolutions(self) -> list[int]:
        return [
            int(np.floor(self.base_resolution * self.growth_factor**lv))
            for lv in range(self.levels)
        ]


@dataclass
class MLPConfig:
    hidden_layers: int = 2
    hidden_width: int = 64

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("MLP needs at least one hidden layer and unit")


@dataclass
class TextureFieldParams:
    """Hash tables plus dense MLP weights; also reused as the gradient container."""

    tables: np.ndarray  # (levels, table_size, features)
    weights: list  # [(out, in) ...]
    biases: list  # [(out,) ...]

    def as_list(self) -> list[np.ndarray]:
        out = [self.tables]
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "TextureFieldParams":
        return TextureFieldParams(
            tables=self.tables.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.as_list())


ParamGradient = TextureFieldParams


def init_params(
    grid: HashGridConfig,
    mlp: MLPConfig,
    rng: np.random.Generator,
    dtype=np.float32,
) -> TextureFieldParams:
    """Tables ~ U(-1e-4, 1e-4); MLP layers with uniform fan-in scaling."""
    tables = rng.uniform(
        -1e-4, 1e-4, size=(grid.levels, grid.table_size, grid.features_per_level)
    ).astype(dtype)
    dims = [grid.feature_dim] + [mlp.hidden_width] * mlp.hidden_layers + [3]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=(d_out,)).astype(dtype))
    return TextureFieldParams(tables=tables, weights=weights, biases=biases)


# ---------------------------------------------------------------------------
# hash-grid encoding
# ---------------------------------------------------------------------------


def _corner_hash(ix, iy, surface_ids, table_size):
    # Cell coords stay far below 2^32, so int64 products are exact; the table
    # size is a power of two, so the fold is a mask.
    h = (
        ix * np.int64(HASH_PRIMES[0])
        ^ iy * np.int64(HASH_PRIMES[1])
        ^ surface_ids.astype(np.int64) * np.int64(HASH_PRIMES[2])
    )
    return (h & np.int64(table_size - 1)).astype(np.int64)


def _level_cells(uv, resolution):
    """Cell index, corner hashless coords and bilinear fractions at one level."""
    scaled = uv * resolution
    cell = np.floor(scaled)
    cell = np.clip(cell, 0, resolution - 1)
    frac = scaled - cell
    return cell.astype(np.int64), frac


def _level_corner_table(grid: HashGridConfig, surface_ids, uv):
    """Per level: the 4 corner hash indices and bilinear weights of each query."""
    out = []
    for res in grid.level_resolutions():
        cell, frac = _level_cells(uv, res)
        fx, fy = frac[:, 0], frac[:, 1]
        corners = []
        for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            idx = _corner_hash(
                cell[:, 0] + dx, cell[:, 1] + dy, surface_ids, grid.table_size
            )
            w = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            corners.append((idx, w))
        out.append(corners)
    return out


def _assemble_features(grid, tables, corner_table):
    n = corner_table[0][0][0].shape[0]
    feats = np.empty((n, grid.feature_dim), dtype=tables.dtype)
    fpl = grid.features_per_level
    for lv, corners in enumerate(corner_table):
        acc = 0.0
        for idx, w in corners:
            acc = acc + w.astype(tables.dtype)[:, None] * tables[lv, idx]
        feats[:, lv * fpl : (lv + 1) * fpl] = acc
    return feats


def encode(
    grid: HashGridConfig,
    tables: np.ndarray,
    surface_ids: np.ndarray,
    uv: np.ndarray,
) -> np.ndarray:
    """Multiresolution features for queries: (N,) surface ids + (N, 2) uv in [0,1]^2.

    Per level the four surrounding table entries are bilinearly interpolated
    at that level's resolution.
    """
    uv = np.asarray(uv)
    surface_ids = np.asarray(surface_ids)
    return _assemble_features(grid, tables, _level_corner_table(grid, surface_ids, uv))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mlp_forward(params: TextureFieldParams, feats: np.ndarray) -> np.ndarray:
    """Hidden ReLU layers, sigmoid output; rgb in [0,1]^3 by construction."""
    h = feats
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return _sigmoid(h)


def eval_rgb(
    params: TextureFieldParams,
    grid: HashGridConfig,
    surface_id: int,
    uv,
) -> np.ndarray:
    """RGB of a single (surface_id, u, v) query."""
    feats = encode(
        grid,
        params.tables,
        np.asarray([surface_id]),
        np.asarray(uv, dtype=np.float64)[None, :],
    )
    return mlp_forward(params, feats)[0]


def eval_map(
    params: TextureFieldParams,
    grid: HashGridConfig,
    qmap: UVQueryMap,
    background=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """Render a query map: hits through the field, misses to the background color."""
    img = np.empty((qmap.height, qmap.width, 3), dtype=np.float64)
    img[:] = np.asarray(background, dtype=np.float64)
    hit_idx = np.flatnonzero(qmap.hit.ravel())
    if hit_idx.size == 0:
        return img
    sids = qmap.surface_id.reshape(-1)[hit_idx]
    uvs = qmap.uv.reshape(-1, 2)[hit_idx]
    flat = img.reshape(-1, 3)
    for s in range(0, hit_idx.size, CHUNK):
        sl = slice(s, s + CHUNK)
        feats = encode(grid, params.tables, sids[sl], uvs[sl])
        flat[hit_idx[sl]] = mlp_forward(params, feats)
    return img


def backward(
    params: TextureFieldParams,
    grid: HashGridConfig,
    qmap: UVQueryMap,
    upstream: np.ndarray,
) -> ParamGradient:
    """Exact gradient of sum_pixels <upstream, rgb> w.r.t. every parameter.

    Misses contribute nothing. Pixels whose upstream rows are entirely zero
    are skipped outright; they cannot contribute either.
    """
    if upstream.shape != (qmap.height, qmap.width, 3):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match map "
            f"({qmap.height}, {qmap.width}, 3)"
        )
    grad_tables = np.zeros_like(params.tables, dtype=np.float64)
    grad_w = [np.zeros(w.shape, dtype=np.float64) for w in params.weights]
    grad_b = [np.zeros(b.shape, dtype=np.float64) for b in params.biases]

    up_flat = upstream.reshape(-1, 3)
    active = qmap.hit.ravel() & np.any(up_flat != 0.0, axis=1)
    act_idx = np.flatnonzero(active)
    if act_idx.size:
        sids_all = qmap.surface_id.reshape(-1)[act_idx]
        uvs_all = qmap.uv.reshape(-1, 2)[act_idx]
        ups_all = up_flat[act_idx]
        for s in range(0, act_idx.size, CHUNK):
            sl = slice(s, s + CHUNK)
            _backward_chunk(
                params,
                grid,
                sids_all[sl],
                uvs_all[sl],
                ups_all[sl],
                grad_tables,
                grad_w,
                grad_b,
            )
    return ParamGradient(tables=grad_tables, weights=grad_w, biases=grad_b)


def _backward_chunk(params, grid, sids, uvs, ups, grad_tables, grad_w, grad_b):
    corner_table = _level_corner_table(grid, sids, uvs)
    feats = _assemble_features(grid, params.tables, corner_table)
    # forward with cached activations
    pre, post = [], [feats]
    h = feats
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else _sigmoid(z)
        post.append(h)

    y = post[-1]
    delta = ups * y * (1.0 - y)
    for i in range(last, -1, -1):
        grad_w[i] += delta.astype(np.float64).T @ post[i].astype(np.float64)
        grad_b[i] += delta.sum(axis=0, dtype=np.float64)
        if i > 0:
            delta = (delta @ params.weights[i]) * (pre[i - 1] > 0.0)

    d_feats = delta @ params.weights[0]
    fpl = grid.features_per_level
    for lv, corners in enumerate(corner_table):
        d_lv = d_feats[:, lv * fpl : (lv + 1) * fpl]
        for idx, w in corners:
            contrib = w[:, None] * d_lv
            for f in range(fpl):
                grad_tables[lv, :, f] += np.bincount(
                    idx, weights=contrib[:, f], minlength=grid.table_size
                )


# ---------------------------------------------------------------------------
# plain bilinear grids
# ---------------------------------------------------------------------------


def _texel_coords(uv, resolution):
    """Clamp-to-edge bilinear indices/weights with texel centers at (i+0.5)/R."""
    x = np.clip(uv * resolution - 0.5, 0.0, resolution - 1.0)
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, resolution - 1)
    frac = x - i0
    return i0, i1, frac


def plain_grid_eval(
    values: np.ndarray,
    qmap: UVQueryMap,
    background=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """Bilinear lookup into per-surface grids ``values`` of shape (S, R, R, 3)."""
    res = values.shape[1]
    img = np.empty((qmap.height, qmap.width, 3), dtype=np.float64)
    img[:] = np.asarray(background, dtype=np.float64)
    hit = qmap.hit
    if not np.any(hit):
        return img
    sids = qmap.surface_id[hit]
    uv = qmap.uv[hit]
    ix0, ix1, fx = _texel_coords(uv[:, 0], res)
    iy0, iy1, fy = _texel_coords(uv[:, 1], res)
    v = (
        values[sids, iy0, ix0] * ((1 - fx) * (1 - fy))[:, None]
        + values[sids, iy0, ix1] * (fx * (1 - fy))[:, None]
        + values[sids, iy1, ix0] * ((1 - fx) * fy)[:, None]
        + values[sids, iy1, ix1] * (fx * fy)[:, None]
    )
    img[hit] = v
    return img


def plain_grid_backward(
    values: np.ndarray,
    qmap: UVQueryMap,
    upstream: np.ndarray,
) -> np.ndarray:
    """Adjoint of plain_grid_eval: scatter upstream into the four texels per hit."""
    if upstream.shape != (qmap.height, qmap.width, 3):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match map "
            f"({qmap.height}, {qmap.width}, 3)"
        )
    n_surf, res = values.shape[0], values.shape[1]
    grad = np.zeros((n_surf, res, res, 3), dtype=np.float64)
    hit = qmap.hit & np.any(upstream != 0.0, axis=2)
    if not np.any(hit):
        return grad
    sids = qmap.surface_id[hit]
    uv = qmap.uv[hit]
    up = upstream[hit]
    ix0, ix1, fx = _texel_coords(uv[:, 0], res)
    iy0, iy1, fy = _texel_coords(uv[:, 1], res)
    flat = grad.reshape(-1, 3)
    size = n_surf * res * res
    for ix, iy, w in (
        (ix0, iy0, (1 - fx) * (1 - fy)),
        (ix1, iy0, fx * (1 - fy)),
        (ix0, iy1, (1 - fx) * fy),
        (ix1, iy1, fx * fy),
    ):
        idx = (sids * res + iy) * res + ix
        for c in range(3):
            flat[:, c] += np.bincount(idx, weights=w * up[:, c], minlength=size)
    return grad


# ---------------------------------------------------------------------------
# field objects: the uniform handle the training loop works with
# ---------------------------------------------------------------------------


class HashGridField:
    """Hash-grid + MLP field bundled with its parameters."""

    kind = "hash_grid"

    def __init__(self, grid: HashGridConfig, mlp: MLPConfig, params: TextureFieldParams):
        self.grid = grid
        self.mlp = mlp
        self.params = params

    @classmethod
    def create(cls, grid=None, mlp=None, seed=0, dtype=np.float32):
        grid = grid or HashGridConfig()
        mlp = mlp or MLPConfig()
        rng = np.random.default_rng(seed)
        return cls(grid, mlp, init_params(grid, mlp, rng, dtype=dtype))

    def param_arrays(self) -> list[np.ndarray]:
        return self.params.as_list()

    def eval_map(self, qmap, background=(0.0, 0.0, 0.0)):
        return eval_map(self.params, self.grid, qmap, background)

    def backward(self, qmap, upstream) -> list[np.ndarray]:
        return backward(self.params, self.grid, qmap, upstream).as_list()


class PlainGridField:
    """Per-surface bilinear RGB grids bundled into the same field interface."""

    kind = "plain_grid"

    def __init__(self, values: np.ndarray):
        if values.ndim != 4 or values.shape[3] != 3 or values.shape[1] != values.shape[2]:
            raise ValueError("plain grid values must have shape (surfaces, R, R, 3)")
        self.values = values

    @classmethod
    def create(cls, n_surfaces: int, resolution: int, fill=0.5, dtype=np.float64):
        values = np.full((n_surfaces, resolution, resolution, 3), fill, dtype=dtype)
        return cls(values)

    @property
    def resolution(self) -> int:
        return self.values.shape[1]

    def param_arrays(self) -> list[np.ndarray]:
        return [self.values]

    def eval_map(self, qmap, background=(0.0, 0.0, 0.0)):
        return plain_grid_eval(self.values, qmap, background)

    def backward(self, qmap, upstream) -> list[np.ndarray]:
        return [plain_grid_backward(self.values, qmap, upstream)]
