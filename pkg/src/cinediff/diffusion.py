"""Conditional denoising-diffusion core.

The ancestral sampler consumes an *explicit* noise trajectory (initial draw
plus every per-step injection) instead of a hidden RNG. That makes sampling
a pure function of (model, condition, trajectory) and lets callers feed the
sampler a trajectory and its negation, which is what antithetic pairing
needs. Images are complex data carried as 2 real channels, shape (2,T,H,W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import SamplingDivergenceError, TrainingDivergenceError
from .kspace import KSpaceData, zero_filled_recon
from .phantom import CineSequence
from .util import complex_to_channels

__all__ = [
    "NoiseSchedule",
    "NoiseTrajectory",
    "Condition",
    "make_schedule",
    "q_sample",
    "build_condition",
    "diffusion_loss",
    "ancestral_sample",
    "ancestral_sample_batch",
    "train_denoiser",
    "ZeroDenoiser",
    "LinearDenoiser",
    "OracleDenoiser",
]


@dataclass
class NoiseSchedule:
    """Step count with beta/alpha/alpha_bar arrays and sampling sigmas.

    posterior_sigma[t] multiplies the injection noise of the reverse step at
    index t; index 0 (the final reverse step) injects none.
    """

    n_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_sigma: np.ndarray


def make_schedule(
    n_steps: int,
    beta_min: float | None = None,
    beta_max: float | None = None,
    kind: str = "linear",
) -> NoiseSchedule:
    """Linear beta ramp with endpoints rescaled for the step count.

    Defaults are 1e-4*(1000/n_steps) .. 0.02*(1000/n_steps), which keeps the
    total corruption roughly independent of ``n_steps``.
    """
    if kind != "linear":
        raise ValueError(f"unsupported schedule kind {kind!r}")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    scale = 1000.0 / n_steps
    if beta_min is None:
        beta_min = 1e-4 * scale
    if beta_max is None:
        beta_max = 0.02 * scale
    if not 0.0 < beta_min < beta_max < 1.0:
        raise ValueError(f"need 0 < beta_min < beta_max < 1, got ({beta_min}, {beta_max})")
    beta = np.linspace(beta_min, beta_max, n_steps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    if not np.all(np.diff(alpha_bar) < 0):
        raise ValueError("alpha_bar is not strictly decreasing")
    posterior_sigma = np.sqrt(beta)
    posterior_sigma[0] = 0.0
    return NoiseSchedule(n_steps, beta, alpha, alpha_bar, posterior_sigma)


def check_production_schedule(s: NoiseSchedule) -> None:
    """Reject schedules too weak (or too strong) for actual generation runs."""
    if s.alpha_bar[0] <= 0.9:
        raise ValueError(f"alpha_bar[0] = {s.alpha_bar[0]:.4f} should exceed 0.9")
    if s.alpha_bar[-1] >= 0.05:
        raise ValueError(f"alpha_bar[-1] = {s.alpha_bar[-1]:.4f} should stay below 0.05")


@dataclass
class NoiseTrajectory:
    """Every random draw one ancestral sampling run consumes.

    ``initial`` is the x_T draw; ``per_step[i]`` is the injection noise used
    by the i-th executed reverse step (so the last entries go with small t;
    the final step consumes none). ``negated()`` flips the sign of all of it.
    """

    seed: int
    initial: np.ndarray
    per_step: np.ndarray

    @classmethod
    def from_seed(cls, seed: int, image_shape: tuple[int, ...], n_steps: int) -> "NoiseTrajectory":
        rng = np.random.default_rng(seed)
        initial = rng.standard_normal(image_shape, dtype=np.float32)
        per_step = np.stack(
            [rng.standard_normal(image_shape, dtype=np.float32) for _ in range(n_steps - 1)]
        ) if n_steps > 1 else np.zeros((0, *image_shape), dtype=np.float32)
        return cls(seed, initial, per_step)

    def negated(self) -> "NoiseTrajectory":
        return NoiseTrajectory(self.seed, -self.initial, -self.per_step)

    @property
    def n_steps(self) -> int:
        return self.per_step.shape[0] + 1


class _MaterializedNoise:
    """Step-wise view over a NoiseTrajectory."""

    def __init__(self, traj: NoiseTrajectory):
        self._traj = traj
        self._i = 0

    def initial(self) -> np.ndarray:
        return self._traj.initial

    def next_step(self) -> np.ndarray:
        field = self._traj.per_step[self._i]
        self._i += 1
        return field


class _StreamedNoise:
    """Replays exactly the draws of NoiseTrajectory.from_seed without storing them."""

    def __init__(self, seed: int, image_shape: tuple[int, ...], sign: int = 1):
        self._rng = np.random.default_rng(seed)
        self._shape = image_shape
        self._sign = float(sign)

    def initial(self) -> np.ndarray:
        return self._sign * self._rng.standard_normal(self._shape, dtype=np.float32)

    def next_step(self) -> np.ndarray:
        return self._sign * self._rng.standard_normal(self._shape, dtype=np.float32)


@dataclass
class Condition:
    """Conditioning stack: (zero-filled re/im, baseline re/im) / scale.

    ``normalization_scale`` is the 95th percentile of the baseline magnitude;
    generated samples live in the same normalized range and are multiplied
    back by it before any metric sees them.
    """

    channels: np.ndarray
    normalization_scale: float

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 4 or self.channels.shape[0] != 4:
            raise ValueError(f"condition channels must be (4,T,H,W), got {self.channels.shape}")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("condition channels contain non-finite values")
        if self.normalization_scale <= 0:
            raise ValueError("normalization_scale must be positive")

    @property
    def image_shape(self) -> tuple[int, ...]:
        return (2, *self.channels.shape[1:])


def build_condition(k: KSpaceData, baseline: CineSequence) -> Condition:
    """Stack the zero-filled acquisition image and the de-aliased baseline."""
    zf = zero_filled_recon(k)
    if zf.data.shape != baseline.data.shape:
        raise ValueError("k-space and baseline shapes disagree")
    scale = float(np.percentile(np.abs(baseline.data), 95))
    if scale <= 0:
        raise ValueError("baseline has (near) zero energy; cannot normalize")
    channels = np.concatenate(
        [complex_to_channels(zf.data), complex_to_channels(baseline.data)]
    ) / np.float32(scale)
    return Condition(channels.astype(np.float32), scale)


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Forward corruption: sqrt(a_bar_t)*x0 + sqrt(1-a_bar_t)*eps."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    if not 0 <= t < s.n_steps:
        raise ValueError(f"t={t} outside [0, {s.n_steps})")
    ab = s.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def _to_tensor(a: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(a))


def _model_batch(model, x: torch.Tensor, t_idx: int, cond: torch.Tensor) -> torch.Tensor:
    t = torch.full((x.shape[0],), t_idx, dtype=torch.long)
    return model(x, t, cond)


def _reverse_steps(model, x: torch.Tensor, cond: torch.Tensor, s: NoiseSchedule, sources) -> torch.Tensor:
    """Run the full reverse chain in place; ``sources`` yield injection noise."""
    with torch.no_grad():
        for i, t_idx in enumerate(range(s.n_steps - 1, -1, -1)):
            eps_hat = _model_batch(model, x, t_idx, cond)
            coef_eps = float(s.beta[t_idx] / np.sqrt(1.0 - s.alpha_bar[t_idx]))
            coef_x = float(1.0 / np.sqrt(s.alpha[t_idx]))
            x = coef_x * (x - coef_eps * eps_hat)
            if t_idx > 0:
                sigma = float(s.posterior_sigma[t_idx])
                noise = np.stack([src.next_step() for src in sources])
                x = x + sigma * _to_tensor(noise).to(x.dtype)
            if not torch.isfinite(x).all():
                raise SamplingDivergenceError(t_idx)
    return x


def ancestral_sample(model, cond: Condition, s: NoiseSchedule, Z: NoiseTrajectory) -> np.ndarray:
    """Deterministic ancestral sampling driven by the explicit trajectory ``Z``.

    Returns the x_0 estimate, shape (2,T,H,W), same dtype as ``Z.initial``.
    """
    if Z.n_steps != s.n_steps:
        raise ValueError(f"trajectory has {Z.n_steps} steps, schedule has {s.n_steps}")
    if tuple(Z.initial.shape) != tuple(cond.image_shape):
        raise ValueError(f"trajectory shape {Z.initial.shape} != image shape {cond.image_shape}")
    src = _MaterializedNoise(Z)
    x = _to_tensor(src.initial()[None].copy())
    cond_t = _to_tensor(cond.channels[None]).to(x.dtype)
    x = _reverse_steps(model, x, cond_t, s, [src])
    return x[0].numpy()


def ancestral_sample_batch(
    model,
    conds: list[Condition],
    s: NoiseSchedule,
    seeds: list[int],
    signs: list[int] | None = None,
) -> np.ndarray:
    """Sample many trajectories at once (one condition per trajectory).

    Noise is streamed from each seed in the exact order
    ``NoiseTrajectory.from_seed`` would draw it, so item i reproduces
    ``ancestral_sample`` with that trajectory (up to conv batching round-off).
    ``signs[i] = -1`` negates trajectory i, which is how antithetic partners
    are run in bulk.
    """
    if signs is None:
        signs = [1] * len(seeds)
    if not (len(conds) == len(seeds) == len(signs)):
        raise ValueError("conds, seeds, signs must have equal lengths")
    shape = conds[0].image_shape
    for c in conds:
        if c.image_shape != shape:
            raise ValueError("all conditions in a batch must share the image shape")
    sources = [_StreamedNoise(seed, shape, sign) for seed, sign in zip(seeds, signs)]
    x = _to_tensor(np.stack([src.initial() for src in sources]))
    cond_t = _to_tensor(np.stack([c.channels for c in conds])).to(x.dtype)
    x = _reverse_steps(model, x, cond_t, s, sources)
    return x.numpy()


def _batched_loss(
    model,
    x0: torch.Tensor,
    cond: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    s: NoiseSchedule,
) -> torch.Tensor:
    """Differentiable epsilon-prediction MSE averaged over the batch."""
    ab = torch.from_numpy(s.alpha_bar[t.numpy()]).to(x0.dtype)
    shape = (-1,) + (1,) * (x0.ndim - 1)
    x_t = torch.sqrt(ab).view(shape) * x0 + torch.sqrt(1.0 - ab).view(shape) * eps
    eps_hat = model(x_t, t, cond)
    return torch.mean((eps_hat - eps) ** 2)


def diffusion_loss(model, x0: np.ndarray, cond: Condition, t: int, eps: np.ndarray, s: NoiseSchedule) -> float:
    """Epsilon-prediction MSE for one image at one diffusion step."""
    x0 = np.asarray(x0, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    if x0.shape != eps.shape or tuple(x0.shape) != tuple(cond.image_shape):
        raise ValueError("x0, eps, and condition shapes must agree")
    if not 0 <= t < s.n_steps:
        raise ValueError(f"t={t} outside [0, {s.n_steps})")
    with torch.no_grad():
        loss = _batched_loss(
            model,
            _to_tensor(x0[None]),
            _to_tensor(cond.channels[None]),
            torch.tensor([t], dtype=torch.long),
            _to_tensor(eps[None]),
            s,
        )
    value = float(loss)
    if not np.isfinite(value):
        raise TrainingDivergenceError(0, "non-finite diffusion loss")
    return value


def train_denoiser(
    model,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    s: NoiseSchedule,
    learning_rate: float = 2e-3,
    n_updates: int = 400,
    batch_size: int = 2,
    seed: int = 0,
) -> list[float]:
    """Train an epsilon predictor on (condition channels, x0 channels) pairs.

    Returns the loss history; entry 0 is the pre-training loss on a fixed
    probe batch, so history[-1] < history[0] measures actual progress.
    Raises TrainingDivergenceError with the failing update index if the
    loss leaves the reals.
    """
    if not pairs:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(model.parameters(), lr=learning_rate)

    conds = [_to_tensor(c) for c, _ in pairs]
    x0s = [_to_tensor(x) for _, x in pairs]

    def probe_loss() -> float:
        g = np.random.default_rng(seed + 1)
        idx = g.integers(0, len(pairs), size=min(4, len(pairs)))
        t = torch.from_numpy(g.integers(0, s.n_steps, size=len(idx)))
        eps = _to_tensor(g.standard_normal((len(idx), *pairs[0][1].shape), dtype=np.float32))
        with torch.no_grad():
            return float(
                _batched_loss(
                    model,
                    torch.stack([x0s[i] for i in idx]),
                    torch.stack([conds[i] for i in idx]),
                    t,
                    eps,
                    s,
                )
            )

    history = [probe_loss()]
    model.train()
    for step in range(n_updates):
        idx = rng.integers(0, len(pairs), size=batch_size)
        t = torch.from_numpy(rng.integers(0, s.n_steps, size=batch_size))
        eps = _to_tensor(rng.standard_normal((batch_size, *pairs[0][1].shape), dtype=np.float32))
        loss = _batched_loss(
            model,
            torch.stack([x0s[i] for i in idx]),
            torch.stack([conds[i] for i in idx]),
            t,
            eps,
            s,
        )
        if not torch.isfinite(loss):
            raise TrainingDivergenceError(step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    model.eval()
    history.append(probe_loss())
    return history


# ---------------------------------------------------------------------------
# Reference denoisers used to verify sampler algebra.


class ZeroDenoiser:
    """Predicts zero noise; the sampler reduces to a known linear recursion."""

    def __call__(self, x_t, t, cond):
        return torch.zeros_like(x_t)

    def parameters(self):
        return iter(())


class LinearDenoiser:
    """eps_hat = gain * x_t + cond_gain * cond[:, :2].

    Linear in x_t (pure when cond_gain = 0), so sampling is an affine map of
    the trajectory and antithetic averages collapse to the condition-driven
    part exactly.
    """

    def __init__(self, gain: float = 0.1, cond_gain: float = 0.0):
        self.gain = gain
        self.cond_gain = cond_gain

    def __call__(self, x_t, t, cond):
        out = self.gain * x_t
        if self.cond_gain != 0.0:
            out = out + self.cond_gain * cond[:, :2]
        return out


class OracleDenoiser:
    """Returns a fixed noise field regardless of input (perfect-predictor stub)."""

    def __init__(self, eps: np.ndarray):
        self._eps = _to_tensor(np.asarray(eps, dtype=np.float32))

    def __call__(self, x_t, t, cond):
        return self._eps[None].expand_as(x_t).to(x_t.dtype)
