"""HTTP front end for the texture engine.

Optimization runs are long-lived, so they execute on background threads:
POST /runs submits a manifest and returns immediately, GET /runs/{id} polls
progress, GET /runs/{id}/report fetches the per-step records. Turntable
rendering, evaluation, and baking are synchronous. All file paths are
server-local.
"""

from __future__ import annotations

import json
import threading
import traceback
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__, tasks
from ..checkpoint import CheckpointError
from ..manifest import ManifestError, parse_manifest
from .models import (
    BakeRequest,
    BakeResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    RenderRequest,
    RenderResponse,
    RunReport,
    RunStatus,
    SubmitRunRequest,
)


class RunJob:
    def __init__(self, run_id: str, k_total: int):
        self.run_id = run_id
        self.k_total = k_total
        self.status = "queued"
        self.step = 0
        self.error = None
        self.outputs = None
        self.lock = threading.Lock()

    def snapshot(self) -> RunStatus:
        with self.lock:
            return RunStatus(
                run_id=self.run_id,
                status=self.status,
                step=self.step,
                k_total=self.k_total,
                error=self.error,
                outputs=self.outputs,
            )


class RunRegistry:
    def __init__(self):
        self.jobs: dict[str, RunJob] = {}
        self.lock = threading.Lock()

    def add(self, job: RunJob):
        with self.lock:
            if job.run_id in self.jobs:
                raise KeyError(job.run_id)
            self.jobs[job.run_id] = job

    def get(self, run_id: str) -> RunJob:
        with self.lock:
            return self.jobs[run_id]

    def all(self) -> list[RunJob]:
        with self.lock:
            return list(self.jobs.values())


def create_app() -> FastAPI:
    app = FastAPI(title="mvitex engine", version=__version__)
    registry = RunRegistry()
    app.state.registry = registry

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", service="mvitex-engine", version=__version__)

    @app.post("/runs", response_model=RunStatus)
    def submit_run(req: SubmitRunRequest):
        try:
            manifest = parse_manifest(req.manifest)
        except ManifestError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = out_dir / "manifest.yaml"
        manifest_path.write_text(req.manifest)
        run_id = out_dir.name
        job = RunJob(run_id, manifest.run.k_total)
        try:
            registry.add(job)
        except KeyError:
            raise HTTPException(status_code=409, detail=f"run {run_id} already exists")

        def worker():
            with job.lock:
                job.status = "running"

            def on_step(state):
                with job.lock:
                    job.step = state.k

            try:
                outputs = tasks.run_manifest(
                    manifest_path,
                    out_dir=out_dir,
                    seed=req.seed,
                    resume_from=req.resume_from,
                    on_step=on_step,
                )
                with job.lock:
                    job.status = outputs["status"]
                    job.outputs = outputs
            except Exception as exc:  # pragma: no cover - defensive
                with job.lock:
                    job.status = "failed"
                    job.error = f"{exc}\n{traceback.format_exc(limit=3)}"

        threading.Thread(target=worker, daemon=True).start()
        return job.snapshot()

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return [j.snapshot() for j in registry.all()]

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str):
        try:
            return registry.get(run_id).snapshot()
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")

    @app.get("/runs/{run_id}/report", response_model=RunReport)
    def run_report(run_id: str):
        try:
            job = registry.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        snap = job.snapshot()
        if snap.outputs is None:
            raise HTTPException(status_code=409, detail="run has no report yet")
        records = []
        with open(Path(snap.outputs["report"])) as fh:
            for line in fh:
                records.append(json.loads(line))
        return RunReport(run_id=run_id, status=snap.status, records=records)

    def _wrap(fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except (ValueError, ManifestError, CheckpointError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/render", response_model=RenderResponse)
    def render(req: RenderRequest):
        out = _wrap(
            tasks.render_turntable,
            req.checkpoint,
            req.manifest,
            req.out_dir,
            frames=req.frames,
            azimuth_start=req.azimuth_start,
            azimuth_end=req.azimuth_end,
            elevation=req.elevation,
            distance=req.distance,
            fov=req.fov,
            resolution=req.resolution,
        )
        return RenderResponse(**out)

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest):
        out = _wrap(
            tasks.evaluate_view,
            req.checkpoint,
            req.manifest,
            req.view_id,
            req.target,
            out_dir=req.out_dir,
        )
        return EvalResponse(**out)

    @app.post("/bake", response_model=BakeResponse)
    def bake(req: BakeRequest):
        out = _wrap(
            tasks.bake_manifest,
            req.manifest,
            req.out_dir,
            texture_resolution=req.texture_resolution,
            render_resolution=req.render_resolution,
        )
        return BakeResponse(**out)

    return app
