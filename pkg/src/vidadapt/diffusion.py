"""DDPM noise schedule, forward noising, training loss, and ancestral sampler.

Conventions, fixed once for the whole package:

* epsilon-prediction: the model maps (x_t, t, cond) to an estimate of the
  injected noise.
* pixels live in [0, 1] at every interface; the loss and sampler rescale to
  [-1, 1] internally.
* training noise is ``eps = z + scale * o`` where ``z`` is i.i.d. standard
  normal and ``o`` is one standard-normal scalar per (sample, channel),
  broadcast over all frames and pixels — a per-channel brightness offset that
  is exactly constant along the frame axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .rng import PrngStream
from .tensor import Tensor, mse, no_grad


@dataclass
class NoiseSchedule:
    """Per-step beta/alpha tables.  Valid schedules (as produced by
    build_schedule) have all entries in (0,1) and strictly decreasing
    alpha_bars."""

    steps: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray


def build_schedule(steps: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear beta schedule over `steps` diffusion steps."""
    if steps < 2:
        raise ConfigError(f"schedule needs at least 2 steps, got {steps}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError(f"betas must satisfy 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    betas = np.linspace(beta_min, beta_max, steps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(steps, betas, alphas, alpha_bars)


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Diffuse x0 to step t:  sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    if x0.shape != eps.shape:
        raise ContractError(f"x0 and eps shapes differ: {x0.shape} vs {eps.shape}")
    if not (0 <= t < sched.steps):
        raise ContractError(f"step {t} outside schedule range [0, {sched.steps})")
    ab = sched.alpha_bars[t]
    return (np.float32(np.sqrt(ab)) * x0 + np.float32(np.sqrt(1.0 - ab)) * eps).astype(np.float32)


def sample_offset_noise(shape, scale: float, rng: PrngStream) -> np.ndarray:
    """Gaussian noise plus a per-(sample, channel) offset shared across
    frames and pixels.  `shape` is [B, ..., C]; with scale=0 this is plain
    i.i.d. noise."""
    if scale < 0:
        raise ContractError(f"offset scale must be >= 0, got {scale}")
    shape = tuple(int(s) for s in shape)
    z = rng.normal(shape)
    if scale == 0.0:
        return z
    b, c = shape[0], shape[-1]
    o = rng.normal((b, c))
    o_shape = (b,) + (1,) * (len(shape) - 2) + (c,)
    return (z + np.float32(scale) * o.reshape(o_shape)).astype(np.float32)


def denoise_loss(model_fn, pixels: np.ndarray, conds: np.ndarray, sched: NoiseSchedule,
                 offset_scale: float, rng: PrngStream) -> Tensor:
    """Noise-prediction MSE for a batch.

    `pixels` is [B, ..., C] in [0, 1] (images or stacked video clips);
    `model_fn(x_t, t, conds)` must return the noise estimate as a Tensor of
    the same shape.  Timesteps are drawn per sample.
    """
    if pixels.ndim < 2 or pixels.shape[0] == 0:
        raise ContractError("denoise_loss requires a non-empty batch")
    b = pixels.shape[0]
    x0 = (pixels.astype(np.float32) * 2.0 - 1.0)
    t = rng.integers(0, sched.steps, (b,))
    eps = sample_offset_noise(pixels.shape, offset_scale, rng)
    ab = sched.alpha_bars[t].reshape((b,) + (1,) * (pixels.ndim - 1))
    x_t = (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(np.float32)
    eps_hat = model_fn(x_t, t, conds)
    return mse(eps_hat, Tensor(eps))


def ddpm_sample(model_fn, shape, sched: NoiseSchedule, rng, conds=None) -> np.ndarray:
    """Ancestral reverse diffusion from pure noise; output clamped to [0, 1].

    `rng` is either one PrngStream for the whole batch or a list with one
    stream per batch element — the latter makes each element's noise
    identical to what a standalone single-element run would draw, so paired
    multi-seed evaluations stay reproducible per seed.
    """
    shape = tuple(int(s) for s in shape)
    b = shape[0]
    streams = rng if isinstance(rng, (list, tuple)) else None
    if streams is not None and len(streams) != b:
        raise ContractError(f"need one stream per batch element: {len(streams)} != {b}")

    def draw():
        if streams is None:
            return rng.normal(shape)
        return np.stack([s.normal(shape[1:]) for s in streams])

    x = draw()
    with no_grad():
        for t in range(sched.steps - 1, -1, -1):
            eps_hat = model_fn(x, t, conds).data
            beta = sched.betas[t]
            ab = sched.alpha_bars[t]
            mean = (x - np.float32(beta / np.sqrt(1.0 - ab)) * eps_hat) * np.float32(
                1.0 / np.sqrt(sched.alphas[t])
            )
            if t > 0:
                ab_prev = sched.alpha_bars[t - 1]
                sigma = np.sqrt((1.0 - ab_prev) / (1.0 - ab) * beta)
                x = mean + np.float32(sigma) * draw()
            else:
                x = mean
    return np.clip((x + 1.0) * 0.5, 0.0, 1.0).astype(np.float32)
