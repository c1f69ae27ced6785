"""Run registry and the two scoring operations.

Requests for one run are serialized under its lock (the adapter state makes
order matter); distinct runs proceed independently. In deterministic mode
every noise draw is derived from the request content, so identical requests
produce identical gradients.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np
import torch

from .model import LoraAdapter, ToyLatentDiffusion, prompt_embedding

TEXT_DIM_UNCOND = None  # zeros embedding


class ServiceError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class RunState:
    def __init__(self, backend, reg: dict):
        self.run_id = reg["run_id"]
        self.guidance_scale = float(reg.get("guidance_scale", 7.5))
        self.lora_rank = int(reg.get("lora_rank", 4))
        self.lora_lr = float(reg.get("lora_learning_rate", 1e-4))
        self.tie_lora_debug = bool(reg.get("tie_lora_debug", False))
        self.prompts = {}
        self.negatives = {}
        for p in reg["prompts"]:
            pid = int(p["id"])
            if pid in self.prompts:
                raise ServiceError(422, f"duplicate prompt id {pid}")
            self.prompts[pid] = prompt_embedding(str(p["text"]))[None, :]
            neg = p.get("negative_text")
            self.negatives[pid] = (
                prompt_embedding(str(neg))[None, :]
                if neg
                else torch.zeros(1, self.prompts[pid].shape[1])
            )
        if self.guidance_scale < 1.0:
            raise ServiceError(422, "guidance_scale must be >= 1")
        adapter_seed = int.from_bytes(
            hashlib.sha256(("adapter:" + self.run_id).encode()).digest()[:4], "little"
        )
        self.adapter: LoraAdapter = backend.new_adapter(self.lora_rank, seed=adapter_seed)
        self.optimizer = torch.optim.Adam(self.adapter.parameters(), lr=self.lora_lr)
        self.lora_steps = 0
        self.lock = threading.Lock()

    def embedding(self, prompt_id: int):
        if prompt_id not in self.prompts:
            raise ServiceError(422, f"prompt {prompt_id} not registered")
        return self.prompts[prompt_id], self.negatives[prompt_id]


def _derive_seed(server_seed: int, *parts) -> int:
    h = hashlib.sha256()
    h.update(str(server_seed).encode())
    for p in parts:
        h.update(b"|")
        h.update(p if isinstance(p, bytes) else str(p).encode())
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


class ScorerService:
    def __init__(self, backend: ToyLatentDiffusion, deterministic: bool, seed: int = 0):
        self.backend = backend
        self.deterministic = deterministic
        self.seed = seed
        self.runs: dict[str, RunState] = {}
        self.registry_lock = threading.Lock()
        self._entropy = torch.Generator().manual_seed(torch.seed() & (2**63 - 1))

    def register(self, reg: dict) -> dict:
        run_id = reg["run_id"]
        with self.registry_lock:
            if run_id in self.runs:
                raise ServiceError(409, f"run {run_id} already registered")
            self.runs[run_id] = RunState(self.backend, reg)
        return {"ok": True, "run_id": run_id}

    def _run(self, run_id: str) -> RunState:
        with self.registry_lock:
            if run_id not in self.runs:
                raise ServiceError(404, f"run {run_id} is not registered")
            return self.runs[run_id]

    def _noise(self, shape, seed_parts) -> torch.Tensor:
        if self.deterministic:
            gen = torch.Generator().manual_seed(_derive_seed(self.seed, *seed_parts))
        else:
            gen = self._entropy
        return torch.randn(shape, generator=gen)

    def _check_patch(self, patch: np.ndarray):
        if patch.ndim != 3 or patch.shape[2] != 3 or patch.shape[0] != patch.shape[1]:
            raise ServiceError(422, f"patch must be square RGB, got {patch.shape}")
        if patch.shape[0] % 8 != 0:
            raise ServiceError(422, f"patch side {patch.shape[0]} is not divisible by 8")
        if not np.all(np.isfinite(patch)):
            raise ServiceError(422, "patch contains non-finite values")

    def score(self, req: dict, patch: np.ndarray) -> tuple[np.ndarray, dict]:
        """Pixel gradient w(t) * (eps_pretrained - eps_adapted) pulled back
        through the encoder."""
        run = self._run(req["run_id"])
        self._check_patch(patch)
        t = float(req["timestep"])
        if not (0.0 < t < 1.0):
            raise ServiceError(422, f"timestep {t} outside (0, 1)")
        cond, uncond = run.embedding(int(req["prompt_id"]))

        with run.lock:
            pixels = torch.from_numpy(
                np.ascontiguousarray(patch.transpose(2, 0, 1), dtype=np.float32)
            )[None]
            pixels.requires_grad_(True)
            z = self.backend.encode(pixels)
            sqrt_ab, sqrt_1mab, w_t = self.backend.schedule.coeffs(t)
            eps = self._noise(
                z.shape,
                ("score", req["run_id"], req.get("step", 0), f"{t:.9f}",
                 hashlib.sha256(patch.tobytes()).digest()),
            )
            z_t = sqrt_ab * z.detach() + sqrt_1mab * eps
            with torch.no_grad():
                eps_pre = self.backend.predict_noise(
                    z_t, t, cond, uncond, run.guidance_scale
                )
                if run.tie_lora_debug:
                    eps_lora = eps_pre
                else:
                    eps_lora = self.backend.predict_noise(
                        z_t, t, cond, uncond, 1.0, adapters=run.adapter
                    )
            latent_grad = w_t * (eps_pre - eps_lora)
            (pixel_grad,) = torch.autograd.grad(z, pixels, grad_outputs=latent_grad)
            grad = pixel_grad[0].numpy().transpose(1, 2, 0)

        if not np.all(np.isfinite(grad)):
            raise ServiceError(500, "non-finite gradient; request rejected")
        diagnostics = {
            "grad_norm": float(np.linalg.norm(grad)),
            "latent_grad_norm": float(latent_grad.norm()),
            "w_t": w_t,
        }
        return grad, diagnostics

    def lora_step(self, req: dict, patch: np.ndarray) -> dict:
        """One optimizer step on the adapter: predict freshly injected noise."""
        run = self._run(req["run_id"])
        self._check_patch(patch)
        t = float(req["timestep"])
        if not (0.0 < t < 1.0):
            raise ServiceError(422, f"timestep {t} outside (0, 1)")
        cond, _ = run.embedding(int(req["prompt_id"]))

        with run.lock:
            with torch.no_grad():
                pixels = torch.from_numpy(
                    np.ascontiguousarray(patch.transpose(2, 0, 1), dtype=np.float32)
                )[None]
                z = self.backend.encode(pixels)
            sqrt_ab, sqrt_1mab, _ = self.backend.schedule.coeffs(t)
            eps = self._noise(
                z.shape, ("lora", req["run_id"], run.lora_steps, f"{t:.9f}")
            )
            z_t = sqrt_ab * z + sqrt_1mab * eps
            pred = self.backend.predict_noise(z_t, t, cond, None, 1.0, adapters=run.adapter)
            loss = torch.mean((pred - eps) ** 2)
            run.optimizer.zero_grad()
            loss.backward()
            run.optimizer.step()
            run.lora_steps += 1
            steps = run.lora_steps

        value = float(loss.detach())
        if not np.isfinite(value):
            raise ServiceError(500, "non-finite adapter loss; request rejected")
        return {"ok": True, "lora_steps": steps, "loss": value}
