"""Latent-diffusion backbone with low-rank adaptation.

The service consumes a pretrained model; the bundled ``toy-*`` backend is a
small self-contained stand-in with deterministic seeded weights, a conv
encoder that downsamples pixels 8x into a 4-channel latent, and a conv
denoiser conditioned on timestep and prompt embeddings. Real checkpoints
would plug in behind the same ``LatentDiffusionBackend`` surface.

Conventions pinned here and echoed by /health: scaled-linear beta schedule
over 1000 discrete steps, w(t) = 1 - alpha_bar(t), and the latent gradient
applied to the clean latent (no alpha_bar factor) before being pulled back
through the encoder.
"""

from __future__ import annotations

import hashlib
import math

import torch
from torch import nn

LATENT_CHANNELS = 4
TEXT_EMBED_DIM = 32
TIME_EMBED_DIM = 16
COND_CHANNELS = 8


class ModelLoadError(RuntimeError):
    pass


def _seed_from(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") & (
        2**63 - 1
    )


def _seeded_init(module: nn.Module, seed: int):
    gen = torch.Generator().manual_seed(seed)
    for p in module.parameters():
        fan_in = p.shape[1] * p.shape[2] * p.shape[3] if p.dim() == 4 else (
            p.shape[-1] if p.dim() >= 2 else 1
        )
        scale = 1.0 / math.sqrt(max(fan_in, 1))
        with torch.no_grad():
            p.copy_(torch.randn(p.shape, generator=gen) * scale)


def prompt_embedding(text: str) -> torch.Tensor:
    """Deterministic stand-in for a text encoder: one vector per distinct prompt."""
    gen = torch.Generator().manual_seed(_seed_from("prompt:" + text))
    return torch.randn(TEXT_EMBED_DIM, generator=gen)


def timestep_embedding(t: torch.Tensor) -> torch.Tensor:
    half = TIME_EMBED_DIM // 2
    freqs = torch.exp(torch.linspace(0.0, math.log(1000.0), half))
    ang = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class NoiseSchedule:
    """Scaled-linear beta schedule; continuous t in (0,1) maps to 1000 bins."""

    def __init__(self, steps: int = 1000, beta_start: float = 0.00085, beta_end: float = 0.012):
        betas = torch.linspace(beta_start**0.5, beta_end**0.5, steps) ** 2
        self.alpha_bar = torch.cumprod(1.0 - betas, dim=0)
        self.steps = steps

    def coeffs(self, t: float):
        idx = min(max(int(round(t * (self.steps - 1))), 0), self.steps - 1)
        ab = self.alpha_bar[idx]
        return torch.sqrt(ab), torch.sqrt(1.0 - ab), float(1.0 - ab)


class Encoder(nn.Module):
    """Pixels in [0,1] to a latent 1/8 the side length."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, LATENT_CHANNELS, 1),
        )

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        return self.net(pixels * 2.0 - 1.0)


class Denoiser(nn.Module):
    """Noise predictor conditioned on timestep and prompt embeddings.

    ``adapters`` (from a LoraAdapter) adds a low-rank parallel branch to
    each conv; with no adapters this is the frozen pretrained branch.
    """

    def __init__(self):
        super().__init__()
        self.t_proj = nn.Linear(TIME_EMBED_DIM, COND_CHANNELS)
        self.c_proj = nn.Linear(TEXT_EMBED_DIM, COND_CHANNELS)
        in_ch = LATENT_CHANNELS + 2 * COND_CHANNELS
        self.convs = nn.ModuleList([
            nn.Conv2d(in_ch, 32, 3, padding=1),
            nn.Conv2d(32, 32, 3, padding=1),
            nn.Conv2d(32, LATENT_CHANNELS, 3, padding=1),
        ])

    def forward(self, z, t_emb, c_emb, adapters=None):
        b, _, h, w = z.shape
        tm = self.t_proj(t_emb)[:, :, None, None].expand(b, COND_CHANNELS, h, w)
        cm = self.c_proj(c_emb)[:, :, None, None].expand(b, COND_CHANNELS, h, w)
        x = torch.cat([z, tm, cm], dim=1)
        for i, conv in enumerate(self.convs):
            y = conv(x)
            if adapters is not None:
                y = y + adapters.branch(i, x)
            x = torch.nn.functional.silu(y) if i + 1 < len(self.convs) else y
        return x


class LoraAdapter(nn.Module):
    """Per-run low-rank branches over the denoiser convs; up convs start at
    zero so the adapted branch initially equals the pretrained one."""

    def __init__(self, denoiser: Denoiser, rank: int, seed: int):
        super().__init__()
        self.rank = rank
        self.downs = nn.ModuleList()
        self.ups = nn.ModuleList()
        gen = torch.Generator().manual_seed(seed)
        for conv in denoiser.convs:
            in_ch = conv.in_channels
            out_ch = conv.out_channels
            down = nn.Conv2d(in_ch, rank, 1, bias=False)
            up = nn.Conv2d(rank, out_ch, 1, bias=False)
            with torch.no_grad():
                down.weight.copy_(
                    torch.randn(down.weight.shape, generator=gen) / math.sqrt(in_ch)
                )
                up.weight.zero_()
            self.downs.append(down)
            self.ups.append(up)

    def branch(self, i: int, x: torch.Tensor) -> torch.Tensor:
        return self.ups[i](self.downs[i](x)) / self.rank


class ToyLatentDiffusion:
    """Self-contained backend: seeded weights, frozen except per-run adapters."""

    def __init__(self, model_id: str):
        seed = _seed_from("model:" + model_id)
        self.model_id = model_id
        self.encoder = Encoder()
        self.denoiser = Denoiser()
        _seeded_init(self.encoder, seed)
        _seeded_init(self.denoiser, seed + 1)
        for p in self.encoder.parameters():
            p.requires_grad_(False)
        for p in self.denoiser.parameters():
            p.requires_grad_(False)
        self.schedule = NoiseSchedule()

    def new_adapter(self, rank: int, seed: int) -> LoraAdapter:
        return LoraAdapter(self.denoiser, rank, seed)

    def encode(self, pixels: torch.Tensor) -> torch.Tensor:
        return self.encoder(pixels)

    def predict_noise(self, z_t, t, cond, uncond, guidance_scale, adapters=None):
        t_emb = timestep_embedding(torch.full((z_t.shape[0],), float(t)))
        if adapters is None and guidance_scale != 1.0:
            eps_c = self.denoiser(z_t, t_emb, cond)
            eps_u = self.denoiser(z_t, t_emb, uncond)
            return eps_u + guidance_scale * (eps_c - eps_u)
        return self.denoiser(z_t, t_emb, cond, adapters=adapters)


def load_backend(model_id: str) -> ToyLatentDiffusion:
    if model_id.startswith("toy"):
        return ToyLatentDiffusion(model_id)
    raise ModelLoadError(
        f"no weights available for model id {model_id!r} (bundled backends: toy-*)"
    )
