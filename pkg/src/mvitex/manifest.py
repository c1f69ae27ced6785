"""Run manifests: one YAML document describing scene, views, prompts,
provider, texture model, and training configuration.

Parsing fills every training default, so a manifest with nothing but a
scene and prompts is runnable. Semantic problems (a view pointing at a
missing prompt, an unknown provider kind) raise ``ManifestError`` naming
the offending field path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from .geometry import (
    CameraPose,
    CylinderSpec,
    MirrorSpec,
    SceneSpec,
    ViewSpec,
    cube_corner_views,
    orbit_camera,
    sphere_views,
)
from .imaging import read_png
from .optimizer import RunConfig, n_surfaces
from .schedules import JitterConfig, ResolutionSchedule, TimestepSchedule
from .scoring import (
    L2ScoreProvider,
    PerViewProvider,
    ProceduralColorProvider,
    SupersampledL2Provider,
    TargetImageSpec,
)
from .texture_field import HashGridConfig, HashGridField, MLPConfig, PlainGridField


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    scene: SceneSpec
    views: list  # list[ViewSpec]
    prompts: list  # list[{"id", "text", "negative_text"?}]
    provider: dict
    texture: dict
    run: RunConfig
    output_dir: str | None = None
    raw_views: dict = dc_field(default_factory=dict)


def _require(cond, path, msg):
    if not cond:
        raise ManifestError(f"{path}: {msg}")


def _parse_scene(obj) -> SceneSpec:
    obj = dict(obj or {})
    kind = obj.pop("kind", "cube")
    reflectors = []
    for i, r in enumerate(obj.pop("reflectors", []) or []):
        r = dict(r)
        rkind = r.pop("kind", "cylinder")
        try:
            if rkind == "cylinder":
                reflectors.append(CylinderSpec(center=tuple(r.pop("center")), **r))
            elif rkind == "mirror":
                reflectors.append(MirrorSpec(center=tuple(r.pop("center")), **r))
            else:
                raise ManifestError(
                    f"scene.reflectors[{i}].kind: unknown reflector {rkind!r}"
                )
        except (TypeError, ValueError, KeyError) as exc:
            raise ManifestError(f"scene.reflectors[{i}]: {exc}") from exc
    if "background_color" in obj:
        obj["background_color"] = tuple(obj["background_color"])
    try:
        return SceneSpec(kind=kind, reflectors=reflectors, **obj)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"scene: {exc}") from exc


def _parse_camera(obj, path) -> CameraPose:
    obj = dict(obj)
    try:
        if "azimuth" in obj or "elevation" in obj:
            return orbit_camera(
                azimuth_deg=float(obj.get("azimuth", 0.0)),
                elevation_deg=float(obj.get("elevation", 0.0)),
                distance=float(obj["distance"]),
                fov=float(obj.get("fov", 40.0)),
            )
        return CameraPose(
            rotation=np.asarray(obj["rotation"], dtype=np.float64),
            translation=np.asarray(obj["translation"], dtype=np.float64),
            fov=float(obj.get("fov", 40.0)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def _parse_views(obj, scene: SceneSpec) -> tuple[list, dict]:
    obj = dict(obj or {})
    preset = obj.get("preset")
    if preset is None and "list" not in obj:
        preset = "cube_corners" if scene.kind == "cube" else (
            "sphere_ring" if scene.kind == "sphere" else None
        )
        _require(preset is not None, "views", "reflective scenes need explicit views")
    if preset == "cube_corners":
        _require(scene.kind == "cube", "views.preset", "cube_corners needs a cube scene")
        views = cube_corner_views(int(obj.get("n_views", 3)), scene)
    elif preset == "sphere_ring":
        _require(scene.kind == "sphere", "views.preset", "sphere_ring needs a sphere scene")
        views = sphere_views(
            int(obj.get("n_views", 3)), float(obj.get("separation", 90.0)), scene
        )
    elif preset is None:
        views = []
        for i, v in enumerate(obj.get("list") or []):
            path = f"views.list[{i}]"
            _require("camera" in v, path, "missing camera")
            views.append(
                ViewSpec(
                    id=int(v.get("id", i)),
                    base_camera=_parse_camera(v["camera"], path + ".camera"),
                    prompt_id=int(v.get("prompt_id", i)),
                    reflective=bool(v.get("reflective", False)),
                )
            )
        _require(bool(views), "views.list", "no views given")
    else:
        raise ManifestError(f"views.preset: unknown preset {preset!r}")
    ids = [v.id for v in views]
    _require(len(set(ids)) == len(ids), "views", f"duplicate view ids: {ids}")
    return views, obj


def _parse_run(obj) -> RunConfig:
    obj = dict(obj or {})
    try:
        jitter = JitterConfig(**(obj.pop("jitter", None) or {}))
        res = dict(obj.pop("resolution", None) or {})
        resolution = ResolutionSchedule(**res)
        ts = dict(obj.pop("timestep", None) or {})
        for key in ("range_early", "range_late"):
            if key in ts:
                ts[key] = tuple(ts[key])
        timestep = TimestepSchedule(**ts)
        if "adam_betas" in obj:
            obj["adam_betas"] = tuple(obj["adam_betas"])
        return RunConfig(jitter=jitter, resolution=resolution, timestep=timestep, **obj)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"run: {exc}") from exc


def parse_manifest(text: str) -> RunManifest:
    """Parse and fully validate a YAML manifest document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ManifestError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a mapping")

    scene = _parse_scene(doc.get("scene"))
    views, raw_views = _parse_views(doc.get("views"), scene)

    prompts = []
    seen = set()
    for i, p in enumerate(doc.get("prompts") or []):
        path = f"prompts[{i}]"
        _require("text" in p, path, "missing text")
        pid = int(p.get("id", i))
        _require(pid not in seen, path + ".id", f"duplicate prompt id {pid}")
        seen.add(pid)
        entry = {"id": pid, "text": str(p["text"])}
        if p.get("negative_text"):
            entry["negative_text"] = str(p["negative_text"])
        prompts.append(entry)
    _require(bool(prompts), "prompts", "at least one prompt is required")

    prompt_ids = {p["id"] for p in prompts}
    for v in views:
        _require(
            v.prompt_id in prompt_ids,
            f"views (id={v.id}).prompt_id",
            f"prompt {v.prompt_id} is not declared",
        )

    provider = dict(doc.get("provider") or {"kind": "procedural", "color": [0.5, 0.5, 0.5]})
    kind = provider.get("kind")
    _require(
        kind in ("l2", "procedural", "remote"),
        "provider.kind",
        f"unknown provider kind {kind!r}",
    )
    if kind == "l2":
        _require(bool(provider.get("targets")), "provider.targets", "l2 needs targets")
        for vid in provider["targets"]:
            _require(
                any(v.id == int(vid) for v in views),
                f"provider.targets[{vid}]",
                "no such view",
            )
    if kind == "procedural":
        _require("color" in provider, "provider.color", "procedural needs a color")

    texture = dict(doc.get("texture") or {})
    texture.setdefault("kind", "hash_grid")
    _require(
        texture["kind"] in ("hash_grid", "plain_grid"),
        "texture.kind",
        f"unknown texture kind {texture['kind']!r}",
    )

    run_cfg = _parse_run(doc.get("run"))
    return RunManifest(
        scene=scene,
        views=views,
        prompts=prompts,
        provider=provider,
        texture=texture,
        run=run_cfg,
        output_dir=doc.get("output_dir"),
        raw_views=raw_views,
    )


def manifest_to_dict(m: RunManifest) -> dict:
    """Plain-types dict whose YAML dump reparses to an equivalent manifest."""
    scene = {
        "kind": m.scene.kind,
        "background_color": list(m.scene.background_color),
    }
    if m.scene.kind == "cube":
        scene["half_extent"] = m.scene.half_extent
    elif m.scene.kind == "sphere":
        scene["radius"] = m.scene.radius
    else:
        scene["plane_extent"] = m.scene.plane_extent
        scene["reflectors"] = []
        for r in m.scene.reflectors:
            if isinstance(r, CylinderSpec):
                scene["reflectors"].append(
                    {
                        "kind": "cylinder",
                        "center": list(r.center),
                        "radius": r.radius,
                        "height": r.height,
                        "axis": list(r.axis),
                    }
                )
            else:
                scene["reflectors"].append(
                    {
                        "kind": "mirror",
                        "center": list(r.center),
                        "curvature_radius": r.curvature_radius,
                        "arc_degrees": r.arc_degrees,
                        "height": r.height,
                        "axis": list(r.axis),
                        "facing_deg": r.facing_deg,
                    }
                )

    if m.raw_views.get("preset"):
        views = {k: v for k, v in m.raw_views.items() if k in ("preset", "n_views", "separation")}
    else:
        views = {
            "list": [
                {
                    "id": v.id,
                    "prompt_id": v.prompt_id,
                    "reflective": v.reflective,
                    "camera": {
                        "rotation": [float(a) for a in v.base_camera.rotation],
                        "translation": [float(a) for a in v.base_camera.translation],
                        "fov": v.base_camera.fov,
                    },
                }
                for v in m.views
            ]
        }

    run = {
        "k_total": m.run.k_total,
        "patch_size": m.run.patch_size,
        "learning_rate": m.run.learning_rate,
        "adam_betas": list(m.run.adam_betas),
        "adam_eps": m.run.adam_eps,
        "seed": m.run.seed,
        "checkpoint_every": m.run.checkpoint_every,
        "view_selection": m.run.view_selection,
        "views_per_step": m.run.views_per_step,
        "on_provider_failure": m.run.on_provider_failure,
        "jitter": {
            "c_max": m.run.jitter.c_max,
            "sigma_rotation": m.run.jitter.sigma_rotation,
            "sigma_translation": m.run.jitter.sigma_translation,
            "sigma_fov": m.run.jitter.sigma_fov,
            "mode": m.run.jitter.mode,
        },
        "resolution": {
            "initial": m.run.resolution.initial,
            "final": m.run.resolution.final,
            "mode": m.run.resolution.mode,
        },
        "timestep": {
            "range_early": list(m.run.timestep.range_early),
            "range_late": list(m.run.timestep.range_late),
            "anneal_step": m.run.timestep.anneal_step,
        },
    }
    out = {
        "scene": scene,
        "views": views,
        "prompts": [dict(p) for p in m.prompts],
        "provider": dict(m.provider),
        "texture": dict(m.texture),
        "run": run,
    }
    if m.output_dir is not None:
        out["output_dir"] = m.output_dir
    return out


def serialize_manifest(m: RunManifest) -> str:
    return yaml.safe_dump(manifest_to_dict(m), sort_keys=True)


def build_field(m: RunManifest, seed: int | None = None):
    tex = dict(m.texture)
    kind = tex.pop("kind")
    tex_seed = tex.pop("seed", seed if seed is not None else m.run.seed)
    if kind == "plain_grid":
        resolution = int(tex.pop("resolution", 256))
        fill = float(tex.pop("fill", 0.5))
        return PlainGridField.create(n_surfaces(m.scene), resolution, fill=fill)
    mlp_keys = {"hidden_layers", "hidden_width"}
    mlp = MLPConfig(**{k: tex.pop(k) for k in list(tex) if k in mlp_keys})
    grid = HashGridConfig(**tex)
    return HashGridField.create(grid=grid, mlp=mlp, seed=tex_seed)


def build_provider(m: RunManifest, base_dir=None):
    """Instantiate the configured score provider; file paths resolve against base_dir."""
    p = dict(m.provider)
    kind = p.pop("kind")
    if kind == "procedural":
        return ProceduralColorProvider(p["color"])
    if kind == "l2":
        weight = float(p.get("weight", 1.0))
        spp = int(p.get("samples_per_pixel", 1))
        providers = {}
        for vid, path in p["targets"].items():
            full = Path(base_dir or ".") / path
            spec = TargetImageSpec(target=read_png(full), weight=weight)
            if spp > 1:
                providers[int(vid)] = SupersampledL2Provider(spec, samples_per_pixel=spp)
            else:
                providers[int(vid)] = L2ScoreProvider(spec)
        if len(providers) == 1 and len(m.views) == 1:
            return next(iter(providers.values()))
        return PerViewProvider(providers)
    from .remote import RemoteScoreProvider

    return RemoteScoreProvider(p.get("url"))


def register_remote(provider, m: RunManifest, run_id: str):
    """Upload the manifest's prompts if the provider is a remote client."""
    from .remote import RemoteScoreProvider

    if isinstance(provider, RemoteScoreProvider):
        p = m.provider
        provider.register(
            run_id,
            m.prompts,
            guidance_scale=float(p.get("guidance_scale", 7.5)),
            lora_rank=int(p.get("lora_rank", 4)),
            lora_learning_rate=float(p.get("lora_learning_rate", 1e-4)),
        )
