"""Continuous-sigma diffusion: preconditioning, noise schedule, Heun sampler.

The denoiser is parameterized as D(x, s, c) = c_skip*x + c_out*F(c_in*x, c_noise, c)
with

    c_skip = sd^2/(s^2+sd^2)   c_out = s*sd/sqrt(s^2+sd^2)
    c_in   = 1/sqrt(s^2+sd^2)  c_noise = ln(s)/4

and the training loss weight lam(s) = (s^2+sd^2)/(s*sd)^2 makes the effective
regression target unit-variance across noise levels. Sampling integrates the
probability-flow ODE with deterministic 2nd-order Heun steps over the
rho-warped sigma ladder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..seeding import derive_seed


@dataclass
class EDMParams:
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    n_steps: int = 18

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.sigma_data <= 0:
            raise ValueError("sigma_data must be positive")

    def to_dict(self):
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d):
        return EDMParams(**d)


def precondition(sigma: float, params: EDMParams):
    """(c_skip, c_out, c_in, c_noise) at one noise level."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sd = params.sigma_data
    den = sigma**2 + sd**2
    c_skip = sd**2 / den
    c_out = sigma * sd / den**0.5
    c_in = 1.0 / den**0.5
    c_noise = float(np.log(sigma)) / 4.0
    return c_skip, c_out, c_in, c_noise


def loss_weight(sigma: float, params: EDMParams) -> float:
    sd = params.sigma_data
    return (sigma**2 + sd**2) / (sigma * sd) ** 2


def sample_sigma(seed: int, params: EDMParams, n: int = 1):
    """ln(sigma) ~ N(p_mean, p_std^2), clamped to [sigma_min, sigma_max]."""
    rng = np.random.default_rng(seed % 2**63)
    s = np.exp(rng.normal(params.p_mean, params.p_std, size=n))
    s = np.clip(s, params.sigma_min, params.sigma_max)
    return float(s[0]) if n == 1 else s


def add_noise(t0: torch.Tensor, sigma: float, seed: int) -> torch.Tensor:
    """Forward process: noisy = t0 + sigma * eps, deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return t0.clone()
    gen = torch.Generator().manual_seed(int(seed) % 2**63)
    eps = torch.randn(t0.shape, generator=gen, dtype=t0.dtype)
    return t0 + sigma * eps


def karras_schedule(params: EDMParams) -> np.ndarray:
    """Descending sigma ladder: s_0 = sigma_max, s_{n-1} = sigma_min."""
    n = params.n_steps
    if n == 1:
        return np.array([params.sigma_max])
    inv_rho = 1.0 / params.rho
    i = np.arange(n)
    return (
        params.sigma_max**inv_rho + i / (n - 1) * (params.sigma_min**inv_rho - params.sigma_max**inv_rho)
    ) ** params.rho


def heun_sample(denoise_fn, shape, params: EDMParams, seed: int, trace=None) -> torch.Tensor:
    """Deterministic probability-flow integration from sigma_max down to 0.

    denoise_fn(x, sigma) must return D(x, sigma) (condition already bound) and
    is responsible for any dtype casting; integration state is float64 so the
    large-sigma steps keep full precision. Raises on non-finite state,
    reporting the failing step.
    """
    gen = torch.Generator().manual_seed(derive_seed(seed, "heun_init") % 2**63)
    sigmas = np.append(karras_schedule(params), 0.0)
    x = params.sigma_max * torch.randn(shape, generator=gen, dtype=torch.float64)
    for i in range(len(sigmas) - 1):
        s, s_next = float(sigmas[i]), float(sigmas[i + 1])
        d = (x - denoise_fn(x, s)) / s
        x_next = x + (s_next - s) * d
        if s_next > 0:  # 2nd-order correction except on the final step to 0
            d_next = (x_next - denoise_fn(x_next, s_next)) / s_next
            x_next = x + (s_next - s) * 0.5 * (d + d_next)
        if not torch.isfinite(x_next).all():
            raise FloatingPointError(f"sampler diverged at step {i} (sigma {s:.4g} -> {s_next:.4g})")
        if trace is not None:
            trace.append((i, s_next, float(x_next.norm())))
        x = x_next
    return x


def heun_sample_batch(denoise_fn, shape_per, params: EDMParams, seeds, trace=None) -> torch.Tensor:
    """Batched variant of heun_sample: independent trajectories, one schedule.

    Initial noise is drawn per element from its own seed, so each element's
    trajectory is a function of (its seed, the shared schedule) only.
    denoise_fn(x (B, *shape_per), sigma) -> same shape.
    """
    inits = []
    for seed in seeds:
        gen = torch.Generator().manual_seed(derive_seed(seed, "heun_init") % 2**63)
        inits.append(torch.randn(shape_per, generator=gen, dtype=torch.float64))
    x = params.sigma_max * torch.stack(inits)
    sigmas = np.append(karras_schedule(params), 0.0)
    for i in range(len(sigmas) - 1):
        s, s_next = float(sigmas[i]), float(sigmas[i + 1])
        d = (x - denoise_fn(x, s)) / s
        x_next = x + (s_next - s) * d
        if s_next > 0:
            d_next = (x_next - denoise_fn(x_next, s_next)) / s_next
            x_next = x + (s_next - s) * 0.5 * (d + d_next)
        if not torch.isfinite(x_next).all():
            raise FloatingPointError(f"sampler diverged at step {i} (sigma {s:.4g} -> {s_next:.4g})")
        if trace is not None:
            trace.append((i, s_next, float(x_next.norm())))
        x = x_next
    return x


def diffusion_loss(denoise_fn, t0: torch.Tensor, sigma: float, params: EDMParams, seed: int) -> torch.Tensor:
    """lam(sigma) * mean((D(t0 + n, sigma) - t0)^2) with n ~ N(0, sigma^2 I)."""
    noisy = add_noise(t0, sigma, seed)
    d = denoise_fn(noisy, sigma)
    return loss_weight(sigma, params) * (d - t0).square().mean()
