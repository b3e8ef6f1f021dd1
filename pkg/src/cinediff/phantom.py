"""Synthetic dynamic phantom: a beating annulus plus elliptical structures.

Stands in for clinical cine acquisitions at desk scale. Everything is a pure
function of the spec (seed included), so datasets are exactly reproducible.
The scene is complex-valued: a smooth low-order polynomial phase field is
attached to the magnitude so the Fourier pipeline is exercised end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .util import rng_from

__all__ = ["PhantomSpec", "CineSequence", "generate_phantom", "add_reference_noise"]


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the synthetic beating-heart scene.

    ``cardiac_period`` is in frames; all motion (annular contraction and
    ellipse drift) is strictly periodic in it and scales with
    ``contraction_amplitude``, so amplitude 0 freezes the scene entirely.
    """

    seed: int = 0
    n_frames: int = 16
    height: int = 64
    width: int = 64
    n_ellipses: int = 5
    cardiac_period: int = 8
    contraction_amplitude: float = 0.15
    background_texture_scale: float = 0.1
    intensity_range: tuple[float, float] = (0.0, 1.0)

    def validate(self) -> None:
        if self.n_frames < 4:
            raise ValueError(f"n_frames must be >= 4, got {self.n_frames}")
        for name, n in (("height", self.height), ("width", self.width)):
            if n < 8 or (n & (n - 1)) != 0:
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        if not 0.0 <= self.contraction_amplitude <= 0.5:
            raise ValueError(
                f"contraction_amplitude must lie in [0, 0.5], got {self.contraction_amplitude}"
            )
        if self.cardiac_period < 1:
            raise ValueError("cardiac_period must be >= 1")
        if self.n_ellipses < 0:
            raise ValueError("n_ellipses must be >= 0")
        if self.background_texture_scale < 0:
            raise ValueError("background_texture_scale must be >= 0")
        lo, hi = self.intensity_range
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"intensity_range must satisfy 0 <= lo < hi <= 1, got {self.intensity_range}")


@dataclass
class CineSequence:
    """Complex 2D+time image stack, the carrier type for the whole pipeline.

    data has shape (T, H, W); defaults for spacing and frame interval follow
    a typical retrospectively gated cine protocol (1.82 mm, 34 ms).
    """

    data: np.ndarray
    pixel_spacing_mm: tuple[float, float] = (1.82, 1.82)
    frame_interval_ms: float = 34.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if not np.iscomplexobj(self.data):
            raise ValueError("CineSequence.data must be complex-valued")
        if self.data.ndim != 3:
            raise ValueError(f"CineSequence.data must be (T,H,W), got shape {self.data.shape}")
        t, h, w = self.data.shape
        if t < 1 or h < 8 or w < 8:
            raise ValueError(f"need T >= 1, H >= 8, W >= 8, got ({t},{h},{w})")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("CineSequence.data contains non-finite samples")
        if self.pixel_spacing_mm[0] <= 0 or self.pixel_spacing_mm[1] <= 0:
            raise ValueError("pixel_spacing_mm must be positive")
        if self.frame_interval_ms <= 0:
            raise ValueError("frame_interval_ms must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    def copy(self) -> "CineSequence":
        return CineSequence(self.data.copy(), self.pixel_spacing_mm, self.frame_interval_ms)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(np.clip(z, -60.0, 60.0)))


def _soft_annulus(r: np.ndarray, r_in: float, r_out: float, edge: float) -> np.ndarray:
    """Smooth ring indicator: ~1 for r in [r_in, r_out], soft edges of width ``edge``."""
    return _sigmoid(-(r - r_in) / edge) - _sigmoid(-(r - r_out) / edge)


def _soft_ellipse(x, y, cx, cy, ax, ay, angle, edge):
    ca, sa = np.cos(angle), np.sin(angle)
    u = (x - cx) * ca + (y - cy) * sa
    v = -(x - cx) * sa + (y - cy) * ca
    r = np.sqrt((u / ax) ** 2 + (v / ay) ** 2)
    return _sigmoid((r - 1.0) / edge)


def generate_phantom(spec: PhantomSpec) -> CineSequence:
    """Render the beating-annulus scene described by ``spec``.

    Per frame t the motion phase is ``2*pi*(t % cardiac_period)/cardiac_period``,
    computed from the reduced integer so frames one period apart are
    bit-identical. Magnitudes land in ``spec.intensity_range`` (within [0,1]);
    the phase field is static, smooth, and bounded by +/- 0.9*pi.
    """
    spec.validate()
    rng = rng_from(spec.seed)
    T, H, W = spec.n_frames, spec.height, spec.width
    y, x = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W), indexing="ij")

    # Scene randomization (static across frames).
    cx0, cy0 = rng.uniform(-0.08, 0.08, size=2)
    r_out0 = rng.uniform(0.42, 0.5)
    thickness = rng.uniform(0.1, 0.16)
    ring_intensity = rng.uniform(0.75, 0.95)
    pool_intensity = rng.uniform(0.35, 0.55)
    edge = 0.02

    ellipses = []
    for i in range(spec.n_ellipses):
        ellipses.append(
            dict(
                cx=rng.uniform(-0.75, 0.75),
                cy=rng.uniform(-0.75, 0.75),
                ax=rng.uniform(0.05, 0.18),
                ay=rng.uniform(0.05, 0.18),
                angle=rng.uniform(0, np.pi),
                intensity=rng.uniform(0.25, 0.7),
                drifting=bool(i % 2),  # alternate static / drifting
                drift_dir=rng.uniform(0, 2 * np.pi),
                drift_amp=rng.uniform(0.1, 0.4),  # displacement per unit contraction amplitude
                drift_phase=rng.uniform(0, 2 * np.pi),
            )
        )

    # Static smooth background texture: a few broad Gaussian blobs.
    background = np.zeros((H, W))
    if spec.background_texture_scale > 0:
        for _ in range(6):
            bx, by = rng.uniform(-1, 1, size=2)
            bs = rng.uniform(0.3, 0.8)
            amp = rng.uniform(-1.0, 1.0)
            background += amp * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * bs**2))
        background = spec.background_texture_scale * background / max(np.abs(background).max(), 1e-12)
    background = background + 0.08  # faint tissue floor so air is not exactly zero

    # Static low-order polynomial phase field, bounded away from the branch cut.
    c = rng.uniform(-1, 1, size=6)
    poly = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x**2 + c[5] * y**2
    phase = 0.9 * np.pi * poly / max(np.abs(poly).max(), 1e-12)

    amp = spec.contraction_amplitude
    frames = np.empty((T, H, W), dtype=np.complex64)
    for t in range(T):
        theta = 2.0 * np.pi * ((t % spec.cardiac_period) / spec.cardiac_period)
        contraction = 1.0 - amp * (1.0 - np.cos(theta)) / 2.0
        r_out = r_out0 * contraction
        r_in = (r_out0 - thickness) * contraction
        r = np.sqrt((x - cx0) ** 2 + (y - cy0) ** 2)
        mag = background.copy()
        mag += pool_intensity * _sigmoid((r - r_in) / edge)  # blood pool
        mag += ring_intensity * _soft_annulus(r, r_in, r_out, edge)  # myocardium ring
        for e in ellipses:
            dx = dy = 0.0
            if e["drifting"]:
                swing = amp * e["drift_amp"] * np.cos(theta + e["drift_phase"])
                dx = swing * np.cos(e["drift_dir"])
                dy = swing * np.sin(e["drift_dir"])
            mag += e["intensity"] * _soft_ellipse(x, y, e["cx"] + dx, e["cy"] + dy, e["ax"], e["ay"], e["angle"], edge)
        lo, hi = spec.intensity_range
        mag = lo + (hi - lo) * np.clip(mag, 0.0, 1.0)
        frames[t] = (mag * np.exp(1j * phase)).astype(np.complex64)

    return CineSequence(frames)


def add_reference_noise(seq: CineSequence, sigma: float, seed: int) -> CineSequence:
    """Add iid complex Gaussian noise, std ``sigma`` per real/imag component.

    Emulates the measurement noise present on "fully sampled" training
    references. ``sigma = 0`` returns a bit-identical copy.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return seq.copy()
    rng = rng_from(seed)
    noise = rng.standard_normal(seq.data.shape) + 1j * rng.standard_normal(seq.data.shape)
    data = (seq.data + sigma * noise).astype(seq.data.dtype)
    return CineSequence(data, seq.pixel_spacing_mm, seq.frame_interval_ms)


def spec_for_sequence(template: PhantomSpec, master_seed: int, index: int) -> PhantomSpec:
    """Template spec with a per-sequence seed derived as hash(master, index).

    Derivation is order-free, so parallel dataset generation yields the same
    sequences regardless of scheduling.
    """
    from .util import STAGE_PHANTOM, derive_seed

    return replace(template, seed=derive_seed(master_seed, STAGE_PHANTOM, index))
