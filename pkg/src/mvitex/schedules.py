"""Training-time schedules: jitter ramp, camera perturbation, render size, timesteps.

All operations are pure functions of their inputs plus a caller-owned RNG,
so a fixed seed reproduces a run exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose

SIGMOID_STEEPNESS = 10.0

FOV_MIN_DEG = 1.0
FOV_MAX_DEG = 179.0


def _ramp_sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-SIGMOID_STEEPNESS * (x - 0.5)))


@dataclass
class JitterConfig:
    """Gaussian camera perturbation: per-channel sigmas scaled by the ramp value."""

    c_max: float = 0.3
    sigma_rotation: float = 1.0  # radians
    sigma_translation: float = 1.0  # scene units
    sigma_fov: float = 1.0  # degrees
    mode: str = "linear"  # "linear" | "sigmoid"

    def __post_init__(self):
        if self.c_max < 0:
            raise ValueError("c_max must be >= 0")
        if min(self.sigma_rotation, self.sigma_translation, self.sigma_fov) < 0:
            raise ValueError("jitter sigmas must be >= 0")
        if self.mode not in ("linear", "sigmoid"):
            raise ValueError(f"unknown jitter mode {self.mode!r}")


@dataclass
class ResolutionSchedule:
    initial: int = 512
    final: int = 1024
    mode: str = "sigmoid"  # "linear" | "sigmoid"

    def __post_init__(self):
        if self.initial > self.final:
            raise ValueError("initial resolution must not exceed final")
        if self.initial < 64:
            raise ValueError("resolutions must be >= 64")
        if self.mode not in ("linear", "sigmoid"):
            raise ValueError(f"unknown resolution mode {self.mode!r}")


@dataclass
class TimestepSchedule:
    range_early: tuple[float, float] = (0.02, 0.98)
    range_late: tuple[float, float] = (0.02, 0.5)
    anneal_step: int = 1000

    def __post_init__(self):
        for lo, hi in (self.range_early, self.range_late):
            if not (0.0 < lo < hi < 1.0):
                raise ValueError("timestep ranges need 0 < lo < hi < 1")

    def active_range(self, k: int) -> tuple[float, float]:
        # steps counted from 0: step anneal_step is the first annealed one
        return self.range_early if k < self.anneal_step else self.range_late


def jitter_scale(k: int, k_total: int, cfg: JitterConfig) -> float:
    """Jitter magnitude at step k: 0 at the start, c_max at the end, both modes.

    Linear mode ramps as k/k_total. Sigmoid mode follows the same S-curve as
    the resolution schedule, affinely rescaled so the endpoints are exact.
    """
    if k_total < 1:
        raise ValueError("k_total must be >= 1")
    if not (0 <= k <= k_total):
        raise ValueError(f"step {k} outside [0, {k_total}]")
    x = k / k_total
    if cfg.mode == "linear":
        return cfg.c_max * x
    lo, hi = _ramp_sigmoid(0.0), _ramp_sigmoid(1.0)
    return cfg.c_max * (_ramp_sigmoid(x) - lo) / (hi - lo)


def jitter_camera(
    base: CameraPose, scale: float, cfg: JitterConfig, rng: np.random.Generator
) -> CameraPose:
    """Perturb rotation angles, position, and fov with N(0, (scale * sigma)^2).

    scale == 0 returns the base pose unchanged (no RNG draws consumed).
    The fov is clamped to stay a valid perspective projection.
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    if scale == 0.0:
        return CameraPose(
            rotation=base.rotation.copy(),
            translation=base.translation.copy(),
            fov=base.fov,
        )
    rotation = base.rotation + rng.normal(0.0, scale * cfg.sigma_rotation, size=3)
    translation = base.translation + rng.normal(0.0, scale * cfg.sigma_translation, size=3)
    fov = base.fov + rng.normal(0.0, scale * cfg.sigma_fov)
    fov = float(np.clip(fov, FOV_MIN_DEG, FOV_MAX_DEG))
    return CameraPose(rotation=rotation, translation=translation, fov=fov)


def render_resolution(k: int, k_total: int, sched: ResolutionSchedule) -> int:
    """Render size at step k: ramp from initial to final, rounded to a multiple of 8.

    Rounding and clamping absorb the sigmoid tails, so both endpoints land on
    the configured resolutions exactly and the result never leaves
    [initial, final]. Monotone nondecreasing in k.
    """
    if k_total < 1:
        raise ValueError("k_total must be >= 1")
    if not (0 <= k <= k_total):
        raise ValueError(f"step {k} outside [0, {k_total}]")
    x = k / k_total
    frac = x if sched.mode == "linear" else _ramp_sigmoid(x)
    raw = sched.initial + frac * (sched.final - sched.initial)
    rounded = int(round(raw / 8.0)) * 8
    return int(np.clip(rounded, sched.initial, sched.final))


def sample_timestep(k: int, sched: TimestepSchedule, rng: np.random.Generator) -> float:
    """Diffusion timestep: uniform on the early range, annealed after anneal_step."""
    if k < 0:
        raise ValueError("step must be >= 0")
    lo, hi = sched.active_range(k)
    return float(rng.uniform(lo, hi))
