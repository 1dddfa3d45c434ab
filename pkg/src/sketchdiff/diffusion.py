"""Gaussian diffusion mathematics: schedules, forward noising, reverse steps,
samplers, and the noise-prediction training loss.

Conventions used throughout:

- timesteps are 1-based, t in [1, T]; the cumulative signal coefficient
  alpha_bar(0) is defined as 1 (a step to t=0 returns the clean estimate)
- schedule arrays are 0-based, so ``betas[t - 1]`` holds beta_t
- the reverse variance is fixed at sigma_t^2 = beta_t with sigma_1 = 0, so
  the final reverse step is deterministic
- all operations are pure; randomness enters only through an explicit
  ``torch.Generator``

Core identities:

    forward:   x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
    reverse:   mu  = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps) / sqrt(alpha_t)
    loss:      mean squared error between true and predicted noise
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import torch

Predictor = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed variance schedule for a T-step diffusion.

    All arrays have length T and are stored in float64; ``betas[i]`` is the
    variance added going from step i to step i+1 (1-based beta_{i+1}).
    """

    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor
    posterior_sigmas: torch.Tensor

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product of alphas up to t; alpha_bar(0) == 1."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        self._check_t(t)
        return float(self.posterior_sigmas[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "betas": self.betas.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        betas = torch.as_tensor(d["betas"], dtype=torch.float64)
        if betas.shape[0] != d["T"]:
            raise ValueError("schedule length does not match T")
        return _from_betas(betas)


def _from_betas(betas: torch.Tensor) -> NoiseSchedule:
    if torch.any(betas <= 0) or torch.any(betas >= 1):
        raise ValueError("betas must lie strictly inside (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    sigmas = torch.sqrt(betas.clone())
    sigmas[0] = 0.0
    return NoiseSchedule(betas, alphas, alpha_bars, sigmas)


def make_schedule(
    T: int,
    kind: str = "linear",
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> NoiseSchedule:
    """Build a variance schedule with betas interpolated inclusive of both
    endpoints.  The default linear 1e-4 -> 0.02 over T=1000 is the standard
    choice; the sampling std-dev is sqrt(beta_t), locked to 0 at t=1.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    return _from_betas(betas)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def _gather(values: torch.Tensor, t: torch.Tensor, ndim: int) -> torch.Tensor:
    """Pick per-sample schedule values and reshape for broadcasting."""
    out = values.to(torch.float64)[t - 1]
    return out.reshape(t.shape + (1,) * (ndim - t.dim()))


def forward_sample(
    x0: torch.Tensor,
    t: int | torch.Tensor,
    eps: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Closed-form forward process: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps.

    ``t`` is either a scalar step or a 1-D tensor of per-sample steps for a
    batched ``x0``.
    """
    _check_same_shape(x0, eps, "forward_sample")
    if isinstance(t, torch.Tensor) and t.dim() > 0:
        if torch.any(t < 1) or torch.any(t > sched.T):
            raise ValueError(f"timesteps outside [1, {sched.T}]")
        ab = _gather(sched.alpha_bars, t, x0.dim())
        return (torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps).to(x0.dtype)
    t = int(t)
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside [1, {sched.T}]")
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def chain_forward(
    x0: torch.Tensor,
    t: int,
    sched: NoiseSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """Step-by-step Markov forward process.

    Applies x_i = sqrt(1-beta_i) x_{i-1} + sqrt(beta_i) xi for i = 1..t.
    Exists as the brute-force counterpart of :func:`forward_sample`; the two
    agree in distribution.
    """
    sched._check_t(t)
    x = x0
    for i in range(1, t + 1):
        b = sched.beta(i)
        xi = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
        x = math.sqrt(1.0 - b) * x + math.sqrt(b) * xi
    return x


def posterior_mean(
    x_t: torch.Tensor,
    t: int,
    eps_pred: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Reverse-step mean from the noise reparameterization:

        mu = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t)
    """
    _check_same_shape(x_t, eps_pred, "posterior_mean")
    a = sched.alpha(t)
    ab = sched.alpha_bar(t)
    coef = (1.0 - a) / math.sqrt(1.0 - ab)
    return (x_t - coef * eps_pred) / math.sqrt(a)


def ddpm_step(
    x_t: torch.Tensor,
    t: int,
    eps_pred: torch.Tensor,
    sched: NoiseSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """One ancestral sampling step x_t -> x_{t-1}.

    Adds sigma_t * xi around the posterior mean; sigma_1 = 0 makes the final
    step deterministic.
    """
    mean = posterior_mean(x_t, t, eps_pred, sched)
    sigma = sched.sigma(t)
    if sigma == 0.0:
        return mean
    xi = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
    return mean + sigma * xi


def ddim_step(
    x_t: torch.Tensor,
    t: int,
    t_prev: int,
    eps_pred: torch.Tensor,
    sched: NoiseSchedule,
    eta: float = 0.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Jump step x_t -> x_{t_prev} via the predicted clean sample.

        x0_hat = (x_t - sqrt(1-abar_t) * eps) / sqrt(abar_t)
        x_prev = sqrt(abar_prev) * x0_hat + sqrt(1-abar_prev-sigma^2) * eps + sigma * xi

    eta = 0 gives the deterministic update; t_prev = 0 returns x0_hat.
    """
    if not 0 <= t_prev < t <= sched.T:
        raise ValueError(f"need 0 <= t_prev < t <= {sched.T}, got t={t}, t_prev={t_prev}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    _check_same_shape(x_t, eps_pred, "ddim_step")
    ab = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    x0_hat = (x_t - math.sqrt(1.0 - ab) * eps_pred) / math.sqrt(ab)
    sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab)) * math.sqrt(1.0 - ab / ab_prev)
    direction = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_pred
    out = math.sqrt(ab_prev) * x0_hat + direction
    if sigma > 0.0:
        if generator is None:
            raise ValueError("eta > 0 requires a generator")
        out = out + sigma * torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
    return out


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Evenly spaced decreasing subsequence T = tau_steps > ... > tau_1 > 0."""
    if not 1 <= steps <= T:
        raise ValueError(f"steps must lie in [1, {T}], got {steps}")
    ts = torch.linspace(T, 0, steps + 1).round().to(torch.long).tolist()
    return ts


def sample_loop(
    predictor: Predictor,
    cond: torch.Tensor,
    sched: NoiseSchedule,
    sampler: str,
    steps: int,
    generator: torch.Generator,
    eta: float = 0.0,
) -> torch.Tensor:
    """Draw z_T from a standard normal and iterate reverse steps down to z_0.

    ``predictor(z_t, t, cond)`` must return a noise estimate with z's shape.
    The latent has 3 channels at the conditioning map's spatial size.  For
    the ddpm sampler, ``steps`` may be at most T; steps < T starts the chain
    at t = steps (truncated chain, z_steps treated as pure noise).
    """
    if sampler not in ("ddpm", "ddim"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if not 1 <= steps <= sched.T:
        raise ValueError(f"steps must lie in [1, {sched.T}], got {steps}")
    if cond.dim() < 3:
        raise ValueError("cond must have at least (channels, h, w) dims")
    shape = cond.shape[:-3] + (3,) + cond.shape[-2:]
    z = torch.randn(shape, generator=generator, dtype=torch.float32)

    def predict(z: torch.Tensor, t: int) -> torch.Tensor:
        eps = predictor(z, torch.tensor(t), cond)
        _check_same_shape(z, eps, "sample_loop predictor output")
        return eps

    if sampler == "ddpm":
        for t in range(steps, 0, -1):
            z = ddpm_step(z, t, predict(z, t), sched, generator)
        return z

    ts = ddim_timesteps(sched.T, steps)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        z = ddim_step(z, t, t_prev, predict(z, t), sched, eta, generator)
    return z


def noise_prediction_loss(eps_true: torch.Tensor, eps_pred: torch.Tensor) -> torch.Tensor:
    """Training objective: elementwise mean squared error between the noise
    actually added and the network's estimate.  Mean reduction keeps the
    magnitude independent of resolution.
    """
    _check_same_shape(eps_true, eps_pred, "noise_prediction_loss")
    return torch.mean((eps_true - eps_pred) ** 2)
