"""Conditional DDPM mathematics: schedule, forward noising, posterior,
training objectives and the reverse sampler.

Timesteps are 1-based: ``alpha[t]`` for ``t = 1..T``; index 0 of ``abar``
holds the convention ``abar[0] = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Tensor, l1_loss, no_grad
from .lightfield import ScaleFactor

Array = Union[np.ndarray, Tensor]
EpsModel = Callable[[Tensor, Union[int, np.ndarray], Optional[Tensor]], Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha: np.ndarray  # length T+1, alpha[0] unused (set to 1)
    abar: np.ndarray  # length T+1, abar[0] == 1
    sigma2: np.ndarray  # length T+1, sigma2[0] unused (0)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return t

    def posterior_coefs(self, t: int) -> Tuple[float, float]:
        """Weights of ``x0`` and ``xt`` in the posterior mean."""
        t = self.check_t(t)
        a, ab, ab_prev = self.alpha[t], self.abar[t], self.abar[t - 1]
        c0 = np.sqrt(ab_prev) * (1.0 - a) / (1.0 - ab)
        ct = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
        return float(c0), float(ct)


def schedule_from_alphas(alphas: Sequence[float]) -> NoiseSchedule:
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(alphas <= 0) or np.any(alphas >= 1):
        raise ValueError("every alpha_t must lie strictly inside (0, 1)")
    T = len(alphas)
    alpha = np.concatenate([[1.0], alphas])
    abar = np.cumprod(alpha)
    sigma2 = np.zeros(T + 1)
    sigma2[1:] = (1.0 - abar[:-1]) * (1.0 - alpha[1:]) / (1.0 - abar[1:])
    for arr in (alpha, abar, sigma2):
        arr.flags.writeable = False
    return NoiseSchedule(T, alpha, abar, sigma2)


def cosine_schedule(T: int, s: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Cosine schedule: ``abar_t = f(t)/f(0)``, ``f(t) = cos^2((t/T + s)/(1 + s) * pi/2)``,
    with per-step ``beta_t = 1 - abar_t/abar_{t-1}`` clipped to ``max_beta``."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos((steps / T + s) / (1.0 + s) * np.pi / 2.0) ** 2
    abar = f / f[0]
    betas = np.minimum(1.0 - abar[1:] / abar[:-1], max_beta)
    return schedule_from_alphas(1.0 - betas)


def linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    return schedule_from_alphas(1.0 - np.linspace(beta_start, beta_end, T))


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    if kind == "cosine":
        return cosine_schedule(T)
    if kind == "linear":
        return linear_schedule(T)
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass
class DiffusionConfig:
    T: int = 100
    schedule: str = "cosine"
    residual_mode: bool = True
    stochastic_sampling: bool = True
    sr_scale: int = 2
    clip_x0: bool = True  # project the x0 estimate onto the data range while sampling

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("DiffusionConfig.T must be >= 1")
        ScaleFactor(self.sr_scale)

    def make_schedule(self) -> NoiseSchedule:
        return make_schedule(self.schedule, self.T)


# ----------------------------------------------------------------- forward


def _arr(x: Array) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def q_sample(x0: Array, t: int, eps: Array, sched: NoiseSchedule) -> np.ndarray:
    """Draw from ``q(x_t | x_0)`` given the noise: ``sqrt(abar_t) x0 + sqrt(1-abar_t) eps``."""
    t = sched.check_t(t)
    x0, eps = _arr(x0), _arr(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x0 {x0.shape}")
    ab = sched.abar[t]
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype, copy=False)


def q_sample_batch(x0: np.ndarray, t: np.ndarray, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Per-sample timesteps along the leading axis."""
    t = np.asarray(t)
    if t.min() < 1 or t.max() > sched.T:
        raise ValueError(f"timesteps must lie in [1, {sched.T}]")
    shape = (-1,) + (1,) * (x0.ndim - 1)
    ab = sched.abar[t].reshape(shape)
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype, copy=False)


def q_step(x_prev: Array, t: int, eps: Array, sched: NoiseSchedule) -> np.ndarray:
    """One forward step ``q(x_t | x_{t-1})``: ``sqrt(alpha_t) x_{t-1} + sqrt(1-alpha_t) eps``."""
    t = sched.check_t(t)
    x_prev, eps = _arr(x_prev), _arr(eps)
    if x_prev.shape != eps.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x_prev {x_prev.shape}")
    a = sched.alpha[t]
    return (np.sqrt(a) * x_prev + np.sqrt(1.0 - a) * eps).astype(x_prev.dtype, copy=False)


def posterior_params(x0: Array, xt: Array, t: int, sched: NoiseSchedule) -> Tuple[np.ndarray, float]:
    """Mean and variance of ``q(x_{t-1} | x_t, x_0)``."""
    c0, ct = sched.posterior_coefs(t)
    x0, xt = _arr(x0), _arr(xt)
    mu = (c0 * x0 + ct * xt).astype(np.result_type(x0, xt), copy=False)
    return mu, float(sched.sigma2[t])


def predict_x0_from_eps(xt: Array, t: int, eps_pred: Array, sched: NoiseSchedule) -> np.ndarray:
    t = sched.check_t(t)
    xt, eps_pred = _arr(xt), _arr(eps_pred)
    ab = sched.abar[t]
    return ((xt - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab)).astype(xt.dtype, copy=False)


def p_step(
    xt: Array,
    t: int,
    eps_pred: Array,
    noise: Optional[Array],
    stochastic: bool,
    sched: NoiseSchedule,
    x0_bounds: Optional[Tuple[Array, Array]] = None,
) -> np.ndarray:
    """One reverse step:
    ``x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps_pred)/sqrt(alpha_t) + sigma_t * noise``.

    Noise is skipped when ``stochastic`` is false and at ``t == 1``.

    With ``x0_bounds = (lo, hi)`` the implied ``x0`` estimate is clipped to
    that range and the mean is rebuilt from the posterior coefficients. For an
    estimate already inside the range this equals the plain update.
    """
    t = sched.check_t(t)
    xt, eps_pred = _arr(xt), _arr(eps_pred)
    a, ab = sched.alpha[t], sched.abar[t]
    if x0_bounds is None:
        out = (xt - (1.0 - a) / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(a)
    else:
        x0 = np.clip((xt - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab), x0_bounds[0], x0_bounds[1])
        c0, ct = sched.posterior_coefs(t)
        out = c0 * x0 + ct * xt
    if stochastic and t > 1:
        if noise is None:
            raise ValueError("stochastic p_step needs a noise array")
        out = out + np.sqrt(sched.sigma2[t]) * _arr(noise)
    return out.astype(xt.dtype, copy=False)


# ----------------------------------------------------------------- training


def _draw(rng: np.random.Generator, x0: np.ndarray, T: int):
    b = x0.shape[0]
    t = rng.integers(1, T + 1, size=b)
    eps = rng.standard_normal(x0.shape).astype(x0.dtype)
    return t, eps


def diffusion_loss(
    model: EpsModel,
    x0: np.ndarray,
    cond: Optional[Tensor],
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> Tensor:
    """L1 between the drawn noise and the model's prediction at a random timestep.

    ``t`` is drawn uniformly from ``{1..T}`` per batch element.
    """
    x0 = np.asarray(x0)
    t, eps = _draw(rng, x0, sched.T)
    xt = q_sample_batch(x0, t, eps, sched)
    pred = model(Tensor(xt), t, cond)
    return l1_loss(pred, Tensor(eps))


def loss_residual(
    model: EpsModel,
    x0_res: np.ndarray,
    cond: Optional[Tensor],
    rng: np.random.Generator,
    sched: NoiseSchedule,
) -> Tensor:
    """Objective on the residual ``HR - up(LR)``."""
    return diffusion_loss(model, x0_res, cond, sched, rng)


def loss_direct(
    model: EpsModel,
    x0: np.ndarray,
    cond: Optional[Tensor],
    rng: np.random.Generator,
    sched: NoiseSchedule,
) -> Tensor:
    """Objective on the HR image itself (ablation)."""
    return diffusion_loss(model, x0, cond, sched, rng)


# ---------------------------------------------------------------- sampling


def sample(
    model: EpsModel,
    cond: Optional[Tensor],
    sched: NoiseSchedule,
    stochastic: bool,
    rng: np.random.Generator,
    shape: Optional[Tuple[int, ...]] = None,
    x_init: Optional[np.ndarray] = None,
    dtype=np.float32,
    trajectory: Optional[List[np.ndarray]] = None,
    x0_bounds: Optional[Tuple[Array, Array]] = None,
) -> np.ndarray:
    """Run the reverse chain from ``t = T`` down to 1.

    The start state is ``x_init`` when given; otherwise a standard normal
    draw in stochastic mode and zeros (the prior mean) in deterministic mode.
    """
    if x_init is None:
        if shape is None:
            raise ValueError("sample needs either shape or x_init")
        x = rng.standard_normal(shape).astype(dtype) if stochastic else np.zeros(shape, dtype=dtype)
    else:
        x = np.array(x_init, dtype=dtype)
    with no_grad():
        for t in range(sched.T, 0, -1):
            eps_pred = model(Tensor(x), t, cond)
            noise = rng.standard_normal(x.shape).astype(dtype) if (stochastic and t > 1) else None
            x = p_step(x, t, eps_pred, noise, stochastic, sched, x0_bounds)
            if trajectory is not None:
                trajectory.append(x)
    return x


def sample_chains(
    model: EpsModel,
    cond: Optional[Tensor],
    sched: NoiseSchedule,
    stochastic: bool,
    rngs: Sequence[np.random.Generator],
    shape: Tuple[int, ...],
    dtype=np.float32,
    x0_bounds: Optional[Tuple[Array, Array]] = None,
) -> np.ndarray:
    """Batched reverse chains, one per generator; chain ``i`` draws all of its
    noise from ``rngs[i]`` so its result does not depend on the batch it runs in.

    ``shape`` is the per-chain shape; the result is ``(len(rngs),) + shape``.
    """
    n = len(rngs)
    if stochastic:
        x = np.stack([r.standard_normal(shape) for r in rngs]).astype(dtype)
    else:
        x = np.zeros((n,) + tuple(shape), dtype=dtype)
    with no_grad():
        for t in range(sched.T, 0, -1):
            eps_pred = model(Tensor(x), t, cond)
            noise = None
            if stochastic and t > 1:
                noise = np.stack([r.standard_normal(shape) for r in rngs]).astype(dtype)
            x = p_step(x, t, eps_pred, noise, stochastic, sched, x0_bounds)
    return x


def sample_average(samples: Sequence[np.ndarray]) -> np.ndarray:
    if len(samples) == 0:
        raise ValueError("sample_average needs at least one sample")
    first = np.asarray(samples[0])
    for s in samples[1:]:
        if np.shape(s) != first.shape:
            raise ValueError(f"sample shapes differ: {np.shape(s)} vs {first.shape}")
    return np.mean(np.stack([np.asarray(s) for s in samples]), axis=0)


def oracle_eps_model(x0: np.ndarray, sched: NoiseSchedule) -> EpsModel:
    """Noise predictor that knows ``x0``: ``(x_t - sqrt(abar_t) x0)/sqrt(1-abar_t)``."""

    def model(x: Tensor, t, cond=None) -> Tensor:
        t = int(np.asarray(t).reshape(-1)[0])
        ab = sched.abar[t]
        return Tensor(((x.data - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)).astype(x.dtype))

    return model
