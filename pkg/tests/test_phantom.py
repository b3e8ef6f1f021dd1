import numpy as np
import pytest

from cinediff.phantom import CineSequence, PhantomSpec, add_reference_noise, generate_phantom


def test_zero_motion_freezes_every_frame():
    seq = generate_phantom(PhantomSpec(seed=2, contraction_amplitude=0.0))
    for t in range(1, seq.data.shape[0]):
        assert np.array_equal(seq.data[t], seq.data[0])


def test_periodicity_is_exact():
    spec = PhantomSpec(seed=5, n_frames=16, cardiac_period=8)
    seq = generate_phantom(spec)
    for t in range(8):
        assert np.array_equal(seq.data[t], seq.data[t + 8])


def test_motion_present_at_nonzero_amplitude():
    seq = generate_phantom(PhantomSpec(seed=5, contraction_amplitude=0.2))
    assert np.abs(seq.data[4] - seq.data[0]).max() > 1e-3


def test_seed_determinism_and_sensitivity():
    a = generate_phantom(PhantomSpec(seed=7))
    b = generate_phantom(PhantomSpec(seed=7))
    c = generate_phantom(PhantomSpec(seed=8))
    assert np.array_equal(a.data, b.data)
    assert np.abs(a.data - c.data).max() > 0


def test_magnitude_and_phase_ranges():
    seq = generate_phantom(PhantomSpec(seed=11))
    mag = seq.magnitude()
    # complex64 rounding can push |z| a hair past the clip bound
    assert mag.min() >= 0.0
    assert mag.max() <= 1.0 + 1e-6
    phase = np.angle(seq.data)
    assert phase.min() >= -np.pi and phase.max() <= np.pi
    assert np.all(np.isfinite(seq.data))


def test_intensity_range_respected():
    seq = generate_phantom(PhantomSpec(seed=1, intensity_range=(0.1, 0.8)))
    mag = seq.magnitude()
    assert mag.min() >= 0.1 - 1e-6
    assert mag.max() <= 0.8 + 1e-6


@pytest.mark.parametrize(
    "bad",
    [
        dict(n_frames=3),
        dict(height=48),       # not a power of two
        dict(width=4),         # below minimum
        dict(contraction_amplitude=0.6),
        dict(contraction_amplitude=-0.1),
        dict(intensity_range=(0.5, 0.2)),
    ],
)
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        generate_phantom(PhantomSpec(**bad))


def test_reference_noise_zero_sigma_is_identity(small_phantom):
    out = add_reference_noise(small_phantom, 0.0, seed=9)
    assert np.array_equal(out.data, small_phantom.data)
    assert out.data is not small_phantom.data


def test_reference_noise_statistics():
    seq = generate_phantom(PhantomSpec(seed=4, n_frames=16, height=64, width=64))
    sigma = 0.05
    noisy = add_reference_noise(seq, sigma, seed=21)
    delta = (noisy.data - seq.data).astype(np.complex128)
    n = delta.size
    for comp in (delta.real, delta.imag):
        assert abs(comp.mean()) < 4 * sigma / np.sqrt(n)
        assert abs(comp.std() - sigma) < 0.05 * sigma


def test_reference_noise_seed_contract(small_phantom):
    a = add_reference_noise(small_phantom, 0.02, seed=1)
    b = add_reference_noise(small_phantom, 0.02, seed=1)
    c = add_reference_noise(small_phantom, 0.02, seed=2)
    assert np.array_equal(a.data, b.data)
    assert np.abs(a.data - c.data).max() > 0


def test_negative_sigma_rejected(small_phantom):
    with pytest.raises(ValueError):
        add_reference_noise(small_phantom, -0.1, seed=0)


def test_cine_sequence_validation():
    with pytest.raises(ValueError):
        CineSequence(np.ones((4, 4, 16), dtype=np.complex64))  # H too small
    with pytest.raises(ValueError):
        CineSequence(np.ones((4, 16, 16)))  # not complex
    bad = np.ones((4, 16, 16), dtype=np.complex64)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        CineSequence(bad)
