"""Loopback scorer stub: the scorer wire protocol backed by local providers.

Used for protocol tests and for driving full runs without a diffusion
service: /score answers with the configured pixel-target (or constant
color) gradient, /register and /lora_step accept and acknowledge.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .. import wire
from ..imaging import read_png
from ..scoring import (
    L2ScoreProvider,
    ProceduralColorProvider,
    ScoreError,
    TargetImageSpec,
    validate_response,
)


class StubRegistration(BaseModel):
    run_id: str
    prompts: list[dict]
    guidance_scale: float = 7.5
    lora_rank: int = 4
    lora_learning_rate: float = 1e-4


def create_stub_app(provider=None, target_path=None, weight=1.0, color=None) -> FastAPI:
    if provider is None:
        if target_path is not None:
            provider = L2ScoreProvider(TargetImageSpec(read_png(target_path), weight=weight))
        else:
            provider = ProceduralColorProvider(color if color is not None else (0.5, 0.5, 0.5))

    app = FastAPI(title="mvitex scorer stub")
    runs: dict[str, dict] = {}
    lock = threading.Lock()

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_id": "loopback-stub",
            "deterministic": True,
        }

    @app.post("/register")
    def register(reg: StubRegistration):
        with lock:
            if reg.run_id in runs:
                raise HTTPException(status_code=409, detail=f"run {reg.run_id} exists")
            runs[reg.run_id] = {"prompts": reg.prompts, "lora_steps": 0}
        return {"ok": True}

    @app.post("/score")
    def score_endpoint(payload: dict):
        try:
            req = wire.score_request_from_wire(payload)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed request: {exc}")
        with lock:
            if req.run_id not in runs:
                raise HTTPException(status_code=404, detail=f"run {req.run_id} not registered")
        try:
            resp = validate_response(req, provider.score(req))
        except ScoreError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return wire.score_response_to_wire(resp)

    @app.post("/lora_step")
    def lora_step(payload: dict):
        run_id = payload.get("run_id")
        with lock:
            if run_id not in runs:
                raise HTTPException(status_code=404, detail=f"run {run_id} not registered")
            runs[run_id]["lora_steps"] += 1
            steps = runs[run_id]["lora_steps"]
        return {"ok": True, "lora_steps": steps, "loss": 0.0}

    return app


def serve_stub(host="127.0.0.1", port=8901, **stub_kw):  # pragma: no cover - CLI path
    import uvicorn

    uvicorn.run(create_stub_app(**stub_kw), host=host, port=port, log_level="warning")
