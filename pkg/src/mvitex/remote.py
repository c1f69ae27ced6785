"""HTTP client for a remote scorer service.

The client registers the run's prompts once, then per step posts the patch
for a gradient and immediately posts the same patch to the adapter-update
endpoint, keeping the two model updates alternating. Requests for one run
are strictly sequential. Transient transport failures are retried with
exponential backoff; anything else surfaces as ScoreError so the caller can
abort with its checkpoint intact.

Set the ILLUSION_SCORER_URL environment variable to override the configured
endpoint.
"""

from __future__ import annotations

import os
import time

import httpx

from . import wire
from .scoring import ScoreError, ScoreRequest, ScoreResponse, validate_response

ENV_SCORER_URL = "ILLUSION_SCORER_URL"
MAX_ATTEMPTS = 3
BACKOFF_BASE_S = 0.2


def resolve_scorer_url(configured: str | None) -> str:
    url = os.environ.get(ENV_SCORER_URL) or configured
    if not url:
        raise ScoreError(
            f"no scorer endpoint configured and {ENV_SCORER_URL} is unset"
        )
    return url.rstrip("/")


class RemoteScoreProvider:
    def __init__(
        self,
        url: str | None,
        timeout: float = 60.0,
        lora_step: bool = True,
        backoff_base: float = BACKOFF_BASE_S,
    ):
        self.url = resolve_scorer_url(url)
        self.lora_step = lora_step
        self.backoff_base = backoff_base
        self._client = httpx.Client(base_url=self.url, timeout=timeout)

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        last_exc = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                resp = self._client.post(path, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt + 1 < MAX_ATTEMPTS:
                    time.sleep(self.backoff_base * 2**attempt)
                continue
            if resp.status_code >= 400:
                detail = ""
                try:
                    detail = resp.json().get("detail", "")
                except Exception:
                    detail = resp.text[:200]
                raise ScoreError(f"scorer rejected {path}: {resp.status_code} {detail}")
            return resp.json()
        raise ScoreError(
            f"scorer unreachable after {MAX_ATTEMPTS} attempts: {last_exc}"
        )

    def health(self) -> dict:
        resp = self._client.get("/health")
        resp.raise_for_status()
        return resp.json()

    def register(
        self,
        run_id: str,
        prompts: list[dict],
        guidance_scale: float = 7.5,
        lora_rank: int = 4,
        lora_learning_rate: float = 1e-4,
    ):
        self._post(
            "/register",
            {
                "run_id": run_id,
                "prompts": prompts,
                "guidance_scale": guidance_scale,
                "lora_rank": lora_rank,
                "lora_learning_rate": lora_learning_rate,
            },
        )

    def score(self, req: ScoreRequest) -> ScoreResponse:
        payload = wire.score_request_to_wire(req)
        out = self._post("/score", payload)
        resp = validate_response(req, wire.score_response_from_wire(out))
        if self.lora_step:
            self._post(
                "/lora_step",
                {
                    "run_id": req.run_id,
                    "prompt_id": req.prompt_id,
                    "timestep": req.timestep,
                    "patch": payload["patch"],
                },
            )
        return resp
