"""Pydantic request/response models for the engine service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class SubmitRunRequest(BaseModel):
    manifest: str = Field(description="YAML manifest document")
    out_dir: str = Field(description="server-local output directory")
    seed: int | None = None
    resume_from: str | None = None


class RunStatus(BaseModel):
    run_id: str
    status: str  # queued | running | completed | aborted | failed
    step: int
    k_total: int
    error: str | None = None
    outputs: dict | None = None


class RunReport(BaseModel):
    run_id: str
    status: str
    records: list[dict]


class RenderRequest(BaseModel):
    checkpoint: str
    manifest: str = Field(description="path to the manifest describing the scene")
    out_dir: str
    frames: int = 36
    azimuth_start: float = 0.0
    azimuth_end: float = 360.0
    elevation: float = 0.0
    distance: float | None = None
    fov: float = 40.0
    resolution: int = 512


class RenderResponse(BaseModel):
    frames: list[str]
    azimuths: list[float]


class EvalRequest(BaseModel):
    checkpoint: str
    manifest: str
    view_id: int
    target: str
    out_dir: str | None = None


class EvalResponse(BaseModel):
    psnr_db: float
    hit_pixels: int
    error_image: str | None = None


class BakeRequest(BaseModel):
    manifest: str
    out_dir: str
    texture_resolution: int = 256
    render_resolution: int = 256


class BakeResponse(BaseModel):
    texture: str
    surfaces: list[str]
    renders: list[str]


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
