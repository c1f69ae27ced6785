"""Engine entry points shared by the HTTP service and the CLI.

Each function takes plain paths/values, performs one user-facing operation
end to end (optimize, turntable render, evaluate, bake), and returns a
JSON-friendly summary dict.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .geometry import build_uv_query_map, orbit_camera
from .imaging import psnr, read_png, write_png
from .manifest import (
    RunManifest,
    build_field,
    build_provider,
    parse_manifest,
    register_remote,
)
from .optimizer import inverse_project, run


def load_manifest_file(path) -> RunManifest:
    return parse_manifest(Path(path).read_text())


def _render_views(field, manifest: RunManifest, out_dir: Path, resolution: int) -> list[str]:
    files = []
    for view in manifest.views:
        qmap = build_uv_query_map(manifest.scene, view.base_camera, resolution, resolution)
        img = field.eval_map(qmap, manifest.scene.background_color)
        path = out_dir / f"view_{view.id}.png"
        write_png(path, img)
        files.append(str(path))
    return files


def run_manifest(
    manifest_path,
    out_dir=None,
    seed: int | None = None,
    resume_from=None,
    final_render_resolution: int | None = None,
    on_step=None,
) -> dict:
    """Execute a full optimization run: checkpoints, per-view renders, report."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest_file(manifest_path)
    if seed is not None:
        manifest.run.seed = seed
    out = Path(out_dir or manifest.output_dir or "")
    if str(out) in ("", "."):
        raise ValueError("no output directory: pass one or set output_dir in the manifest")
    out.mkdir(parents=True, exist_ok=True)

    field = build_field(manifest)
    provider = build_provider(manifest, base_dir=manifest_path.parent)
    run_id = out.name or f"run-{manifest.run.seed}"
    register_remote(provider, manifest, run_id)
    try:
        result = run(
            manifest.run,
            manifest.scene,
            manifest.views,
            provider,
            field,
            out_dir=out,
            run_id=run_id,
            resume_from=resume_from,
            on_step=on_step,
        )
    finally:
        close = getattr(provider, "close", None)
        if close:
            close()

    res = final_render_resolution or manifest.run.resolution.final
    renders = _render_views(result.field, manifest, out, res)
    return {
        "run_id": run_id,
        "status": result.status,
        "steps": len(result.records),
        "checkpoint": result.checkpoint_path,
        "report": str(out / "report.jsonl"),
        "renders": renders,
    }


def render_turntable(
    checkpoint_path,
    manifest_path,
    out_dir,
    frames: int,
    azimuth_start: float = 0.0,
    azimuth_end: float = 360.0,
    elevation: float = 0.0,
    distance: float | None = None,
    fov: float = 40.0,
    resolution: int = 512,
) -> dict:
    """Orbit the scene and write one PNG per frame with strictly increasing azimuth."""
    if frames < 1:
        raise ValueError("frame count must be >= 1")
    if azimuth_end <= azimuth_start:
        raise ValueError("azimuth_end must exceed azimuth_start")
    manifest = load_manifest_file(manifest_path)
    field = ckpt.load_field(checkpoint_path)
    if distance is None:
        distance = 3.0 * manifest.scene.diagonal()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    azimuths = [
        azimuth_start + i * (azimuth_end - azimuth_start) / frames for i in range(frames)
    ]
    files = []
    for i, az in enumerate(azimuths):
        cam = orbit_camera(az, elevation, distance, fov)
        qmap = build_uv_query_map(manifest.scene, cam, resolution, resolution)
        img = field.eval_map(qmap, manifest.scene.background_color)
        path = out / f"frame_{i:04d}.png"
        write_png(path, img)
        files.append(str(path))
    return {"frames": files, "azimuths": azimuths}


def evaluate_view(
    checkpoint_path,
    manifest_path,
    view_id: int,
    target_path,
    out_dir=None,
) -> dict:
    """PSNR of a view's render against a target image, over hit pixels only."""
    manifest = load_manifest_file(manifest_path)
    views = {v.id: v for v in manifest.views}
    if view_id not in views:
        raise ValueError(f"view {view_id} is not in the manifest")
    target = read_png(target_path)
    h, w = target.shape[:2]
    field = ckpt.load_field(checkpoint_path)
    qmap = build_uv_query_map(manifest.scene, views[view_id].base_camera, w, h)
    if not np.any(qmap.hit):
        raise ValueError(f"view {view_id} sees no scene geometry at {w}x{h}")
    img = field.eval_map(qmap, manifest.scene.background_color)
    value = psnr(img, target, mask=qmap.hit)
    out = {"psnr_db": value, "hit_pixels": int(qmap.hit.sum())}
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        err = np.abs(img - target)
        err[~qmap.hit] = 0.0
        write_png(out_path / f"error_view_{view_id}.png", err)
        write_png(out_path / f"render_view_{view_id}.png", img)
        out["error_image"] = str(out_path / f"error_view_{view_id}.png")
    return out


def bake_manifest(
    manifest_path,
    out_dir,
    texture_resolution: int = 256,
    render_resolution: int = 256,
) -> dict:
    """Closed-form bake of the manifest's pixel targets onto a plain grid."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest_file(manifest_path)
    if manifest.provider.get("kind") != "l2":
        raise ValueError("baking needs an l2 provider with per-view targets")
    targets_cfg = manifest.provider["targets"]
    views, targets = [], []
    for v in manifest.views:
        if v.id in targets_cfg or str(v.id) in targets_cfg:
            path = targets_cfg.get(v.id, targets_cfg.get(str(v.id)))
            views.append(v)
            targets.append(read_png(manifest_path.parent / path))
    if not views:
        raise ValueError("no views carry targets")
    field = inverse_project(manifest.scene, views, targets, texture_resolution)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "baked_texture.npy", field.values)
    files = []
    for s in range(field.values.shape[0]):
        path = out / f"texture_surface_{s}.png"
        write_png(path, field.values[s])
        files.append(str(path))
    renders = []
    for v in views:
        qmap = build_uv_query_map(
            manifest.scene, v.base_camera, render_resolution, render_resolution
        )
        img = field.eval_map(qmap, manifest.scene.background_color)
        path = out / f"baked_view_{v.id}.png"
        write_png(path, img)
        renders.append(str(path))
    return {"texture": str(out / "baked_texture.npy"), "surfaces": files, "renders": renders}
