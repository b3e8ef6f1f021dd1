"""Cartesian Fourier encoding, line masks, undersampling, and data consistency.

Convention used by every module in the package: centered, orthonormal 2D
FFT per frame (DC at array center, Parseval holds with no extra scaling).
Masks select whole phase-encode lines (rows) per frame; a block of
``center_lines`` central rows is always acquired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phantom import CineSequence
from .util import rng_from

__all__ = [
    "SamplingMask",
    "KSpaceData",
    "fft2c",
    "ifft2c",
    "make_mask",
    "undersample",
    "zero_filled_recon",
    "data_consistency",
]

MASK_PATTERNS = ("uniform-interleaved", "variable-density-random")


@dataclass
class SamplingMask:
    """Per-frame phase-encode line selection.

    lines has shape (T, H); True marks an acquired row in that frame.
    ``measured_R`` is the realized acceleration (T*H over acquired lines).
    """

    lines: np.ndarray
    center_lines: int
    requested_R: float
    measured_R: float

    def __post_init__(self):
        self.lines = np.asarray(self.lines, dtype=bool)
        if self.lines.ndim != 2:
            raise ValueError(f"mask lines must be (T,H), got {self.lines.shape}")
        t, h = self.lines.shape
        start, stop = _center_block(h, self.center_lines)
        if not self.lines[:, start:stop].all():
            raise ValueError("central lines must be acquired in every frame")
        n_true = int(self.lines.sum())
        if n_true == 0:
            raise ValueError("mask acquires no lines")
        expected = (t * h) / n_true
        if not math.isclose(expected, self.measured_R, rel_tol=1e-9):
            raise ValueError(f"measured_R {self.measured_R} inconsistent with mask ({expected})")

    @property
    def n_frames(self) -> int:
        return self.lines.shape[0]

    @property
    def n_lines(self) -> int:
        return self.lines.shape[1]


@dataclass
class KSpaceData:
    """Masked k-space measurements: zero wherever the mask is False."""

    samples: np.ndarray
    mask: SamplingMask
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if not np.iscomplexobj(self.samples):
            raise ValueError("k-space samples must be complex")
        if self.samples.ndim != 3:
            raise ValueError(f"k-space samples must be (T,H,W), got {self.samples.shape}")
        t, h, _ = self.samples.shape
        if (t, h) != self.mask.lines.shape:
            raise ValueError("samples and mask shapes disagree")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        off = self.samples[~self.mask.lines, :]
        if off.size and np.any(off != 0):
            raise ValueError("samples must be exactly zero at unsampled lines")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.samples.shape


def _center_block(h: int, center_lines: int) -> tuple[int, int]:
    start = (h - center_lines) // 2
    return start, start + center_lines


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, CineSequence) else np.asarray(x)


def fft2c(x) -> np.ndarray:
    """Centered orthonormal per-frame 2D DFT of (..., H, W) complex data.

    Output dtype matches the input's complex dtype; ||fft2c(x)|| = ||x||.
    """
    a = _as_array(x)
    if not np.all(np.isfinite(a)):
        raise ValueError("fft2c input contains non-finite values")
    k = np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(a, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )
    return k.astype(np.promote_types(a.dtype, np.complex64), copy=False)


def ifft2c(k) -> np.ndarray:
    """Inverse of :func:`fft2c` (exact up to floating-point round-off)."""
    a = _as_array(k)
    if not np.all(np.isfinite(a)):
        raise ValueError("ifft2c input contains non-finite values")
    x = np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(a, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )
    return x.astype(np.promote_types(a.dtype, np.complex64), copy=False)


def _per_frame_line_counts(n_frames: int, n_lines: int, requested_R: float) -> np.ndarray:
    """Split the total line budget T*H/R across frames as evenly as possible."""
    target_total = n_frames * n_lines / requested_R
    cum = np.floor(np.arange(n_frames + 1) * target_total / n_frames + 0.5).astype(int)
    counts = np.diff(cum)
    return np.minimum(counts, n_lines)


def make_mask(
    n_frames: int,
    n_lines: int,
    requested_R: float,
    center_lines: int = 4,
    pattern: str = "uniform-interleaved",
    seed: int = 0,
) -> SamplingMask:
    """Build a per-frame Cartesian line mask at acceleration ``requested_R``.

    ``uniform-interleaved`` places lines on a regular grid whose offset
    rotates from frame to frame, so the union over time covers every row
    whenever the per-frame budget allows. ``variable-density-random`` draws
    lines (per frame, seeded) with probability decaying away from the
    k-space center. The central ``center_lines`` rows are always on.
    Realized acceleration stays within 10% of the request.
    """
    if not 1.0 <= requested_R <= 32.0:
        raise ValueError(f"requested_R must lie in [1, 32], got {requested_R}")
    if pattern not in MASK_PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {MASK_PATTERNS}")
    if center_lines < 0 or center_lines > n_lines:
        raise ValueError(f"center_lines must lie in [0, {n_lines}]")
    if center_lines > n_lines / requested_R:
        raise ValueError(
            f"infeasible: {center_lines} center lines exceed the per-frame budget "
            f"{n_lines / requested_R:.2f} at R={requested_R}"
        )
    if n_frames < 1 or n_lines < 1:
        raise ValueError("n_frames and n_lines must be positive")

    counts = _per_frame_line_counts(n_frames, n_lines, requested_R)
    counts = np.maximum(counts, center_lines)
    start, stop = _center_block(n_lines, center_lines)
    noncenter_rows = np.concatenate([np.arange(start), np.arange(stop, n_lines)])
    n_nc = noncenter_rows.size

    rng = rng_from(seed)
    if pattern == "variable-density-random":
        dist = np.abs(noncenter_rows - (n_lines - 1) / 2.0)
        weights = np.exp(-0.5 * (dist / (n_lines / 6.0)) ** 2) + 1e-3
        weights = weights / weights.sum()

    lines = np.zeros((n_frames, n_lines), dtype=bool)
    lines[:, start:stop] = True
    for t in range(n_frames):
        m = int(counts[t]) - center_lines
        if m <= 0:
            continue
        if pattern == "uniform-interleaved":
            step = n_nc / m
            n_offsets = max(1, min(n_frames, math.ceil(step)))
            offset = (t % n_offsets) * step / n_offsets
            idx = np.floor(np.arange(m) * step + offset).astype(int) % n_nc
        else:
            idx = rng.choice(n_nc, size=m, replace=False, p=weights)
        lines[t, noncenter_rows[idx]] = True

    measured = (n_frames * n_lines) / int(lines.sum())
    if abs(measured - requested_R) > 0.1 * requested_R:
        raise ValueError(
            f"could not realize R={requested_R} within 10% "
            f"(got {measured:.3f}); adjust center_lines or pattern"
        )
    return SamplingMask(lines, center_lines, float(requested_R), float(measured))


def undersample(
    seq: CineSequence, mask: SamplingMask, noise_sigma: float = 0.0, seed: int = 0
) -> KSpaceData:
    """Acquire masked k-space from ``seq``.

    samples = fft2c(seq) on acquired lines (plus complex Gaussian noise of
    per-component std ``noise_sigma`` there), exactly zero elsewhere.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    t, h, _ = seq.data.shape
    if (t, h) != mask.lines.shape:
        raise ValueError(
            f"sequence frames/lines {(t, h)} do not match mask {mask.lines.shape}"
        )
    k = fft2c(seq.data)
    samples = np.where(mask.lines[:, :, None], k, 0).astype(k.dtype)
    if noise_sigma > 0:
        rng = rng_from(seed)
        noise = rng.standard_normal(k.shape) + 1j * rng.standard_normal(k.shape)
        samples = samples + noise_sigma * np.where(mask.lines[:, :, None], noise, 0)
        samples = samples.astype(k.dtype)
    return KSpaceData(samples, mask, noise_sigma)


def zero_filled_recon(k: KSpaceData) -> CineSequence:
    """Inverse FFT of the zero-filled measurements (the aliased baseline)."""
    return CineSequence(ifft2c(k.samples))


def data_consistency(img: CineSequence, k: KSpaceData) -> CineSequence:
    """Replace the Fourier coefficients of ``img`` with measured values.

    Hard projection: at acquired lines the output spectrum equals
    ``k.samples`` exactly; elsewhere it keeps the spectrum of ``img``.
    Idempotent and linear (for k = 0) by construction.
    """
    if img.data.shape != k.samples.shape:
        raise ValueError(f"image shape {img.data.shape} != k-space shape {k.samples.shape}")
    spectrum = fft2c(img.data)
    merged = np.where(k.mask.lines[:, :, None], k.samples.astype(spectrum.dtype), spectrum)
    return CineSequence(
        ifft2c(merged).astype(img.data.dtype, copy=False),
        img.pixel_spacing_mm,
        img.frame_interval_ms,
    )
