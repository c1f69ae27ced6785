"""Score-distillation gradient service.

Wraps a latent-diffusion backbone behind a small HTTP API: clients send
rendered pixel patches and get back pixel-space gradients computed from the
difference between the pretrained denoiser's prediction (with
classifier-free guidance) and an online low-rank-adapted copy, pulled back
through the latent encoder. A second endpoint advances the low-rank
adapter on the same renders, keeping the two updates alternating.
"""

__version__ = "0.1.0"
