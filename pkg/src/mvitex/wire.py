"""JSON wire format shared by every scorer endpoint.

Tensors travel as base64-encoded little-endian float32 buffers with an
explicit shape list, so any client language can decode them. The same
envelope is implemented by the loopback stub and by external scorer
services.
"""

from __future__ import annotations

import base64

import numpy as np

from .patching import PatchRect
from .scoring import ScoreRequest, ScoreResponse


def encode_array(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f4")
    return {"data": base64.b64encode(a.tobytes()).decode("ascii"), "shape": list(a.shape)}


def decode_array(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    n = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * n:
        raise ValueError(f"tensor payload holds {len(raw)} bytes, expected {4 * n}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def score_request_to_wire(req: ScoreRequest) -> dict:
    return {
        "run_id": req.run_id,
        "view_id": req.view_id,
        "prompt_id": req.prompt_id,
        "step": req.step,
        "timestep": req.timestep,
        "patch": encode_array(req.patch),
        "patch_rect": {
            "x0": req.patch_rect.x0,
            "y0": req.patch_rect.y0,
            "size": req.patch_rect.size,
        },
        "full_resolution": req.full_resolution,
    }


def score_request_from_wire(obj: dict) -> ScoreRequest:
    rect = obj["patch_rect"]
    return ScoreRequest(
        run_id=obj["run_id"],
        view_id=int(obj["view_id"]),
        prompt_id=int(obj["prompt_id"]),
        step=int(obj["step"]),
        timestep=float(obj["timestep"]),
        patch=decode_array(obj["patch"]),
        patch_rect=PatchRect(x0=int(rect["x0"]), y0=int(rect["y0"]), size=int(rect["size"])),
        full_resolution=int(obj["full_resolution"]),
    )


def score_response_to_wire(resp: ScoreResponse) -> dict:
    return {
        "pixel_gradient": encode_array(resp.pixel_gradient),
        "scalar_diagnostics": {k: float(v) for k, v in resp.scalar_diagnostics.items()},
    }


def score_response_from_wire(obj: dict) -> ScoreResponse:
    return ScoreResponse(
        pixel_gradient=decode_array(obj["pixel_gradient"]),
        scalar_diagnostics=dict(obj.get("scalar_diagnostics") or {}),
    )
