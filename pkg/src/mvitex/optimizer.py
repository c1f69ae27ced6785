"""The per-step training loop and its closed-form baseline.

One step: pick a view, jitter its camera by the scheduled amount, trace the
frame at the scheduled resolution, crop a random patch, ask the score
provider for a pixel gradient, push it back through the texture field, and
take an Adam step. RNG draws happen in a fixed order (view, jitter, patch,
timestep) so a seed pins the whole run.

Rendering and backprop touch only the patch rect: pixels outside it carry
zero upstream gradient and cannot contribute, and the rect's pixel centers
match the corresponding full-frame pixels exactly.

``inverse_project`` bakes view targets straight into a plain grid by
splatting each target pixel onto the texels its ray covers; for a single
view it is the least-squares solution the gradient loop should converge to,
which makes it the loop's oracle.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .geometry import SceneSpec, ViewSpec, build_uv_query_block, build_uv_query_map
from .patching import sample_patch
from .schedules import (
    JitterConfig,
    ResolutionSchedule,
    TimestepSchedule,
    jitter_camera,
    jitter_scale,
    render_resolution,
    sample_timestep,
)
from .scoring import ScoreError, ScoreRequest, score
from .texture_field import PlainGridField


@dataclass
class RunConfig:
    k_total: int = 2000
    jitter: JitterConfig = dc_field(default_factory=JitterConfig)
    resolution: ResolutionSchedule = dc_field(default_factory=ResolutionSchedule)
    timestep: TimestepSchedule = dc_field(default_factory=TimestepSchedule)
    patch_size: int = 512
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # 0: only the final checkpoint
    view_selection: str = "uniform_random"  # "uniform_random" | "round_robin"
    views_per_step: str = "one"  # "one" | "all"
    on_provider_failure: str = "abort"  # "abort" | "skip"

    def __post_init__(self):
        if self.k_total < 1:
            raise ValueError("k_total must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.patch_size > self.resolution.initial:
            raise ValueError(
                "patch_size exceeds the initial render resolution; every step "
                "must fit one patch"
            )
        if self.view_selection not in ("uniform_random", "round_robin"):
            raise ValueError(f"unknown view_selection {self.view_selection!r}")
        if self.views_per_step not in ("one", "all"):
            raise ValueError(f"unknown views_per_step {self.views_per_step!r}")
        if self.on_provider_failure not in ("abort", "skip"):
            raise ValueError(f"unknown on_provider_failure {self.on_provider_failure!r}")


class Adam:
    """Standard Adam with bias correction over a list of parameter arrays.

    Moments live in the parameter dtype and the update runs in place, so a
    step over millions of hash-table entries stays memory-bound rather than
    allocation-bound.
    """

    def __init__(self, params: list, lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list):
        self.t += 1
        inv_b1c = 1.0 / (1 - self.b1**self.t)
        inv_sqrt_b2c = 1.0 / np.sqrt(1 - self.b2**self.t)
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            g = np.asarray(g, dtype=p.dtype)
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * np.square(g)
            denom = np.sqrt(v)
            denom *= inv_sqrt_b2c
            denom += self.eps
            update = m / denom
            update *= self.lr * inv_b1c
            p -= update


@dataclass
class TrainState:
    k: int
    field: object  # HashGridField | PlainGridField
    adam: Adam
    rng: np.random.Generator
    records: list = dc_field(default_factory=list)


class RunAborted(RuntimeError):
    pass


def init_state(config: RunConfig, field) -> TrainState:
    rng = np.random.default_rng(config.seed)
    adam = Adam(
        field.param_arrays(),
        lr=config.learning_rate,
        betas=config.adam_betas,
        eps=config.adam_eps,
    )
    return TrainState(k=0, field=field, adam=adam, rng=rng)


def _select_views(state: TrainState, views: list, config: RunConfig) -> list:
    if config.views_per_step == "all":
        return list(views)
    if config.view_selection == "round_robin":
        return [views[state.k % len(views)]]
    return [views[int(state.rng.integers(0, len(views)))]]


def train_step(
    state: TrainState,
    scene: SceneSpec,
    views: list,
    provider,
    config: RunConfig,
    run_id: str = "run",
) -> TrainState:
    """Advance the state by one optimization step (mutates and returns it)."""
    if state.k >= config.k_total:
        raise ValueError(f"step {state.k} is already at k_total={config.k_total}")
    k = state.k
    selected = _select_views(state, views, config)
    scale = jitter_scale(k, config.k_total, config.jitter)
    res = render_resolution(k, config.k_total, config.resolution)

    record = {
        "k": k,
        "views": [v.id for v in selected],
        "jitter_scale": scale,
        "resolution": res,
        "skipped": False,
    }
    grads = None
    try:
        for view in selected:
            cam = jitter_camera(view.base_camera, scale, config.jitter, state.rng)
            rect = sample_patch(res, res, config.patch_size, state.rng)
            qmap = build_uv_query_block(
                scene, cam, res, res, rect.x0, rect.y0, rect.size, rect.size
            )
            patch = state.field.eval_map(qmap, scene.background_color)
            t = sample_timestep(k, config.timestep, state.rng)
            req = ScoreRequest(
                run_id=run_id,
                view_id=view.id,
                prompt_id=view.prompt_id,
                step=k,
                timestep=t,
                patch=patch,
                patch_rect=rect,
                full_resolution=res,
            )
            resp = score(provider, req)
            view_grads = state.field.backward(qmap, resp.pixel_gradient)
            grads = (
                view_grads
                if grads is None
                else [a + b for a, b in zip(grads, view_grads)]
            )
            record["timestep"] = t
            record["grad_norm"] = resp.scalar_diagnostics.get(
                "grad_norm", float(np.linalg.norm(resp.pixel_gradient))
            )
            if "loss" in resp.scalar_diagnostics:
                record["loss"] = resp.scalar_diagnostics["loss"]
    except ScoreError as exc:
        if config.on_provider_failure == "abort":
            state.records.append({**record, "skipped": True, "error": str(exc)})
            raise RunAborted(str(exc)) from exc
        record.update(skipped=True, error=str(exc))
        grads = None

    if grads is not None:
        if all(np.all(np.isfinite(g)) for g in grads):
            state.adam.step(grads)
        else:
            # never write non-finite values into the parameters
            record.update(skipped=True, error="non-finite parameter gradient")

    state.records.append(record)
    state.k += 1
    return state


@dataclass
class RunResult:
    field: object
    records: list
    status: str  # "completed" | "aborted"
    checkpoint_path: str | None = None

    def report_lines(self) -> list[str]:
        return [json.dumps(r) for r in self.records]


def _write_checkpoint(state: TrainState, config: RunConfig, path: Path):
    if getattr(state.field, "kind", None) == "hash_grid":
        ckpt.save_field(path, state.field)
        ckpt.save_train_state(
            path,
            step=state.k,
            moments_m=state.adam.m,
            moments_v=state.adam.v,
            adam_t=state.adam.t,
            rng_state=state.rng.bit_generator.state,
        )
    else:
        np.save(str(path) + ".npy", state.field.values)


def _write_report(records: list, status: str, out_dir: Path):
    with open(out_dir / "report.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    summary = {
        "status": status,
        "steps": len(records),
        "skipped": sum(1 for r in records if r.get("skipped")),
    }
    losses = [r["loss"] for r in records if "loss" in r]
    if losses:
        summary["final_loss"] = losses[-1]
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


def run(
    config: RunConfig,
    scene: SceneSpec,
    views: list,
    provider,
    field,
    out_dir=None,
    run_id: str = "run",
    resume_from=None,
    on_step=None,
) -> RunResult:
    """Execute k_total steps, checkpointing along the way.

    ``resume_from`` points at a hash-grid checkpoint written by a previous
    run of the same configuration; together with its sidecar state the run
    continues exactly where it stopped.
    """
    if not views:
        raise ValueError("need at least one view")
    prompt_ids = {v.prompt_id for v in views}
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    state = init_state(config, field)
    if resume_from is not None:
        if getattr(field, "kind", None) != "hash_grid":
            raise ValueError("resume is only supported for hash-grid fields")
        resumed = ckpt.load_field(resume_from)
        field.params = resumed.params
        state = init_state(config, field)
        saved = ckpt.load_train_state(resume_from)
        state.k = saved["step"]
        state.adam.t = saved["adam_t"]
        state.adam.m = [m.copy() for m in saved["moments_m"]]
        state.adam.v = [v.copy() for v in saved["moments_v"]]
        state.rng.bit_generator.state = saved["rng_state"]

    ckpt_path = out / "checkpoint.mvitex" if out is not None else None
    status = "completed"
    t_start = time.time()
    try:
        while state.k < config.k_total:
            train_step(state, scene, views, provider, config, run_id=run_id)
            if on_step is not None:
                on_step(state)
            if (
                out is not None
                and config.checkpoint_every > 0
                and state.k % config.checkpoint_every == 0
            ):
                _write_checkpoint(state, config, out / f"checkpoint_{state.k:06d}.mvitex")
    except RunAborted:
        status = "aborted"

    if out is not None:
        _write_checkpoint(state, config, ckpt_path)
        _write_report(state.records, status, out)
        with open(out / "summary.json") as fh:
            summary = json.load(fh)
        summary["wall_time_s"] = time.time() - t_start
        summary["prompt_ids"] = sorted(prompt_ids)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)

    return RunResult(
        field=field,
        records=state.records,
        status=status,
        checkpoint_path=str(ckpt_path) if ckpt_path else None,
    )


def n_surfaces(scene: SceneSpec) -> int:
    return 6 if scene.kind == "cube" else 1


def inverse_project(
    scene: SceneSpec,
    views: list,
    targets: list,
    texture_resolution: int,
    fill: float = 0.5,
) -> PlainGridField:
    """Bake view targets onto a plain grid by weighted splatting.

    Every target pixel whose ray hits the scene deposits its color onto the
    four texels around its uv with bilinear weights; texels divide by their
    accumulated weight, which makes overlapping views average and single
    views reproduce their target. Texels no view touches keep ``fill``.
    """
    if len(targets) != len(views):
        raise ValueError("need exactly one target image per view")
    surf = n_surfaces(scene)
    res = texture_resolution
    num = np.zeros((surf, res, res, 3))
    den = np.zeros((surf, res, res))
    for view, target in zip(views, targets):
        target = np.asarray(target, dtype=np.float64)
        h, w = target.shape[:2]
        qmap = build_uv_query_map(scene, view.base_camera, w, h)
        hit = qmap.hit
        if not np.any(hit):
            continue
        sids = qmap.surface_id[hit]
        uv = qmap.uv[hit]
        colors = target[hit]
        x = np.clip(uv[:, 0] * res - 0.5, 0.0, res - 1.0)
        y = np.clip(uv[:, 1] * res - 0.5, 0.0, res - 1.0)
        ix0 = np.floor(x).astype(np.int64)
        iy0 = np.floor(y).astype(np.int64)
        ix1 = np.minimum(ix0 + 1, res - 1)
        iy1 = np.minimum(iy0 + 1, res - 1)
        fx = x - ix0
        fy = y - iy0
        flat_num = num.reshape(-1, 3)
        flat_den = den.reshape(-1)
        size = surf * res * res
        for ix, iy, wgt in (
            (ix0, iy0, (1 - fx) * (1 - fy)),
            (ix1, iy0, fx * (1 - fy)),
            (ix0, iy1, (1 - fx) * fy),
            (ix1, iy1, fx * fy),
        ):
            idx = (sids * res + iy) * res + ix
            flat_den += np.bincount(idx, weights=wgt, minlength=size)
            for c in range(3):
                flat_num[:, c] += np.bincount(
                    idx, weights=wgt * colors[:, c], minlength=size
                )
    values = np.full((surf, res, res, 3), float(fill))
    covered = den > 0
    values[covered] = num[covered] / den[covered][:, None]
    return PlainGridField(values)
