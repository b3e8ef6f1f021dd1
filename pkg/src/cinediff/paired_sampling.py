"""Single, averaged, and antithetic (paired) diffusion sampling modes.

Paired sampling runs the ancestral sampler twice, once with a noise
trajectory Z and once with its negation -Z (initial draw and every per-step
injection flipped), and averages. Components of the output that are odd in
Z cancel exactly; for a denoiser linear in its input the average is
therefore completely seed-independent, and for trained models the bulk of
the sampling noise (which is approximately Z-linear) is suppressed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import Condition, NoiseSchedule, NoiseTrajectory, ancestral_sample

__all__ = ["PairedSample", "sample_single", "sample_avg", "sample_paired", "noise_component_correlation"]


@dataclass
class PairedSample:
    """The two antithetic branches, their average, and the bookkeeping.

    x_pair is stored as exactly (x_pos + x_neg)/2; half_difference is
    (x_pos - x_neg)/2, the empirical antisymmetric (noise-like) component,
    so x_pos = x_pair + half_difference and x_neg = x_pair - half_difference.
    """

    x_pos: np.ndarray
    x_neg: np.ndarray
    x_pair: np.ndarray
    trajectory_seed: int
    half_difference: np.ndarray


def sample_single(model, cond: Condition, s: NoiseSchedule, seed: int) -> np.ndarray:
    """One ancestral sampling run with the trajectory drawn from ``seed``."""
    z = NoiseTrajectory.from_seed(seed, cond.image_shape, s.n_steps)
    return ancestral_sample(model, cond, s, z)


def sample_avg(model, cond: Condition, s: NoiseSchedule, seed_a: int, seed_b: int) -> np.ndarray:
    """Mean of two independent sampling runs (must use distinct seeds)."""
    if seed_a == seed_b:
        raise ValueError("seed_a and seed_b must differ; equal seeds would duplicate one run")
    xa = sample_single(model, cond, s, seed_a)
    xb = sample_single(model, cond, s, seed_b)
    return (xa + xb) / 2


def sample_paired(model, cond: Condition, s: NoiseSchedule, seed: int) -> PairedSample:
    """Antithetic pair: sample with Z and with -Z, then average."""
    z = NoiseTrajectory.from_seed(seed, cond.image_shape, s.n_steps)
    x_pos = ancestral_sample(model, cond, s, z)
    x_neg = ancestral_sample(model, cond, s, z.negated())
    x_pair = (x_pos + x_neg) / 2
    half_difference = (x_pos - x_neg) / 2
    return PairedSample(x_pos, x_neg, x_pair, seed, half_difference)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel().astype(np.float64)
    b = b.ravel().astype(np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a**2).sum() * (b**2).sum())
    if denom == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float((a * b).sum() / denom)


def noise_component_correlation(ps_set, reference: np.ndarray | None = None) -> float:
    """How opposite the two branches' deviations are, averaged over samples.

    Without a reference this correlates (x_pos - x_pair) with
    -(x_neg - x_pair), which is 1 identically by construction and serves as
    a self-check. With a reference image it correlates (x_pos - reference)
    with -(x_neg - reference), the empirically meaningful opposition
    measure for the noise picked up by each branch.
    """
    ps_set = list(ps_set)
    if len(ps_set) < 2:
        raise ValueError("need at least 2 paired samples from distinct seeds")
    corrs = []
    for ps in ps_set:
        if reference is None:
            corrs.append(_pearson(ps.x_pos - ps.x_pair, -(ps.x_neg - ps.x_pair)))
        else:
            ref = np.asarray(reference)
            corrs.append(_pearson(ps.x_pos - ref, -(ps.x_neg - ref)))
    return float(np.mean(corrs))
