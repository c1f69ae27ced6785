"""HTTP front end.

Configuration comes from the environment: SCORER_MODEL_ID picks the
backbone (default toy-v1), SCORER_PORT the listen port, and
SCORER_DETERMINISTIC=1 derives all noise from request content so identical
requests produce identical gradients. A backbone that fails to load leaves
the service up but degraded: /health reports it and scoring returns 503.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, wire
from .model import ModelLoadError, load_backend
from .service import ScorerService, ServiceError

ENV_MODEL_ID = "SCORER_MODEL_ID"
ENV_PORT = "SCORER_PORT"
ENV_DETERMINISTIC = "SCORER_DETERMINISTIC"

WEIGHTING_NOTE = "w(t)=1-alpha_bar(t), scaled-linear betas, grad on clean latent"


class PromptSpec(BaseModel):
    id: int
    text: str
    negative_text: str | None = None


class RegisterRequest(BaseModel):
    run_id: str = Field(min_length=1)
    prompts: list[PromptSpec] = Field(min_length=1)
    guidance_scale: float = 7.5
    lora_rank: int = 4
    lora_learning_rate: float = 1e-4
    tie_lora_debug: bool = False


def create_app(model_id: str | None = None, deterministic: bool | None = None) -> FastAPI:
    model_id = model_id or os.environ.get(ENV_MODEL_ID, "toy-v1")
    if deterministic is None:
        deterministic = os.environ.get(ENV_DETERMINISTIC, "0") in ("1", "true", "yes")

    app = FastAPI(title="vsd-scorer", version=__version__)
    service = None
    load_error = None
    try:
        backend = load_backend(model_id)
        service = ScorerService(backend, deterministic=deterministic)
    except ModelLoadError as exc:
        load_error = str(exc)
    app.state.service = service

    def ready() -> ScorerService:
        if service is None:
            raise HTTPException(status_code=503, detail=f"model unavailable: {load_error}")
        return service

    @app.get("/health")
    def health():
        return {
            "status": "ok" if service is not None else "degraded",
            "model_id": model_id,
            "deterministic": bool(deterministic),
            "weighting": WEIGHTING_NOTE,
        }

    @app.post("/register")
    def register(reg: RegisterRequest):
        try:
            return ready().register(reg.model_dump())
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=str(exc))

    def _decode_patch(payload: dict):
        try:
            patch = wire.decode_array(payload["patch"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed patch tensor: {exc}")
        return patch

    @app.post("/score")
    def score(payload: dict):
        svc = ready()
        for key in ("run_id", "prompt_id", "timestep"):
            if key not in payload:
                raise HTTPException(status_code=422, detail=f"missing field {key}")
        patch = _decode_patch(payload)
        try:
            grad, diagnostics = svc.score(payload, patch)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=str(exc))
        return {
            "pixel_gradient": wire.encode_array(grad),
            "scalar_diagnostics": diagnostics,
        }

    @app.post("/lora_step")
    def lora_step(payload: dict):
        svc = ready()
        for key in ("run_id", "prompt_id", "timestep"):
            if key not in payload:
                raise HTTPException(status_code=422, detail=f"missing field {key}")
        patch = _decode_patch(payload)
        try:
            return svc.lora_step(payload, patch)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=str(exc))

    return app


def main():  # pragma: no cover - process entry point
    import uvicorn

    port = int(os.environ.get(ENV_PORT, "8902"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port, log_level="info")
