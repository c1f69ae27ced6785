"""Score providers: anything mapping a rendered patch to a pixel-space gradient.

A provider receives a ``ScoreRequest`` (the patch plus where it came from)
and returns a ``ScoreResponse`` whose ``pixel_gradient`` matches the patch
shape. Local providers cover pixel-target losses and test doubles; the
HTTP client for a remote scorer lives in ``remote``.

Provider convention: the returned gradient is d(loss)/d(patch) for a scalar
loss normalized by the patch pixel count, so magnitudes do not change when
the full render resolution grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import resample
from .patching import PatchRect


@dataclass
class ScoreRequest:
    run_id: str
    view_id: int
    prompt_id: int
    step: int
    timestep: float
    patch: np.ndarray  # (size, size, 3)
    patch_rect: PatchRect
    full_resolution: int

    def __post_init__(self):
        s = self.patch_rect.size
        if self.patch.shape != (s, s, 3):
            raise ValueError(
                f"patch shape {self.patch.shape} does not match rect size {s}"
            )
        if not (0.0 < self.timestep < 1.0):
            raise ValueError("timestep must lie in (0, 1)")


@dataclass
class ScoreResponse:
    pixel_gradient: np.ndarray
    scalar_diagnostics: dict = field(default_factory=dict)


class ScoreError(RuntimeError):
    """A provider could not produce a usable gradient."""


def validate_response(req: ScoreRequest, resp: ScoreResponse) -> ScoreResponse:
    """Enforce the provider contract: patch-shaped, all entries finite."""
    if resp.pixel_gradient.shape != req.patch.shape:
        raise ScoreError(
            f"gradient shape {resp.pixel_gradient.shape} does not match patch "
            f"{req.patch.shape}"
        )
    if not np.all(np.isfinite(resp.pixel_gradient)):
        raise ScoreError("provider returned non-finite gradient entries")
    return resp


def score(provider, req: ScoreRequest) -> ScoreResponse:
    """Invoke a provider and validate its output against the request."""
    return validate_response(req, provider.score(req))


@dataclass
class TargetImageSpec:
    """A per-view pixel target with a loss weight."""

    target: np.ndarray  # (H, W, 3)
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("target weight must be >= 0")


def _target_at_full_resolution(spec: TargetImageSpec, full_resolution: int) -> np.ndarray:
    return resample(spec.target, full_resolution, full_resolution)


def _diag(grad: np.ndarray, loss: float) -> dict:
    return {"loss": float(loss), "grad_norm": float(np.linalg.norm(grad))}


class L2ScoreProvider:
    """Pulls the patch toward the matching crop of a fixed target image.

    loss = weight * ||patch - target_crop||^2 / n with n the patch pixel
    count; the gradient is its exact derivative 2 * weight * (patch -
    target_crop) / n.
    """

    def __init__(self, spec: TargetImageSpec):
        self.spec = spec

    def target_crop(self, req: ScoreRequest) -> np.ndarray:
        full = _target_at_full_resolution(self.spec, req.full_resolution)
        r = req.patch_rect
        return full[r.y0 : r.y0 + r.size, r.x0 : r.x0 + r.size]

    def score(self, req: ScoreRequest) -> ScoreResponse:
        crop = self.target_crop(req)
        n = req.patch_rect.size**2
        diff = req.patch - crop
        grad = 2.0 * self.spec.weight * diff / n
        loss = self.spec.weight * float(np.sum(diff**2)) / n
        return ScoreResponse(pixel_gradient=grad, scalar_diagnostics=_diag(grad, loss))


class ProceduralColorProvider:
    """Test double: pull every patch pixel toward one constant color."""

    def __init__(self, color):
        self.color = np.asarray(color, dtype=np.float64)

    def score(self, req: ScoreRequest) -> ScoreResponse:
        n = req.patch_rect.size**2
        diff = req.patch - self.color
        grad = 2.0 * diff / n
        loss = float(np.sum(diff**2)) / n
        return ScoreResponse(pixel_gradient=grad, scalar_diagnostics=_diag(grad, loss))


class SupersampledL2Provider:
    """L2 against a target anti-aliased over each pixel's footprint.

    Each patch pixel is compared to the mean of ``samples_per_pixel`` target
    samples drawn on a jittered stratified grid inside the pixel footprint;
    this softens the banding that appears when a strongly compressed region
    of the texture is supervised through single-point lookups.
    samples_per_pixel must be a perfect square; 1 reduces exactly to
    ``L2ScoreProvider`` (single center sample, no jitter).
    """

    def __init__(self, spec: TargetImageSpec, samples_per_pixel: int = 4, seed: int = 0):
        side = int(round(samples_per_pixel**0.5))
        if side * side != samples_per_pixel or samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be a positive perfect square")
        self.spec = spec
        self.samples_per_pixel = samples_per_pixel
        self.side = side
        self.rng = np.random.default_rng(seed)

    def _averaged_crop(self, req: ScoreRequest) -> np.ndarray:
        full = _target_at_full_resolution(self.spec, req.full_resolution)
        r = req.patch_rect
        size = r.size
        if self.samples_per_pixel == 1:
            return full[r.y0 : r.y0 + size, r.x0 : r.x0 + size]
        from .imaging import bilinear_sample

        base_x = np.arange(r.x0, r.x0 + size, dtype=np.float64)
        base_y = np.arange(r.y0, r.y0 + size, dtype=np.float64)
        gx, gy = np.meshgrid(base_x, base_y)
        acc = np.zeros((size, size, 3))
        s = self.side
        for sy in range(s):
            for sx in range(s):
                jx = self.rng.uniform(0.0, 1.0, size=(size, size))
                jy = self.rng.uniform(0.0, 1.0, size=(size, size))
                # offsets in [-0.5, 0.5): stratum corner plus jitter
                ox = (sx + jx) / s - 0.5
                oy = (sy + jy) / s - 0.5
                acc += bilinear_sample(full, gx + ox, gy + oy)
        return acc / self.samples_per_pixel

    def score(self, req: ScoreRequest) -> ScoreResponse:
        crop = self._averaged_crop(req)
        n = req.patch_rect.size**2
        diff = req.patch - crop
        grad = 2.0 * self.spec.weight * diff / n
        loss = self.spec.weight * float(np.sum(diff**2)) / n
        return ScoreResponse(pixel_gradient=grad, scalar_diagnostics=_diag(grad, loss))


class PerViewProvider:
    """Dispatch to a different provider per view id (e.g. one target per view)."""

    def __init__(self, providers: dict):
        self.providers = dict(providers)

    def score(self, req: ScoreRequest) -> ScoreResponse:
        try:
            provider = self.providers[req.view_id]
        except KeyError:
            raise ScoreError(f"no provider registered for view {req.view_id}")
        return provider.score(req)
