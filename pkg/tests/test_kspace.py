import numpy as np
import pytest

from cinediff.kspace import (
    KSpaceData,
    data_consistency,
    fft2c,
    ifft2c,
    make_mask,
    undersample,
    zero_filled_recon,
)
from cinediff.phantom import CineSequence, PhantomSpec, generate_phantom


def dft2c_bruteforce(frame: np.ndarray) -> np.ndarray:
    """Direct O(N^2) centered orthonormal 2D DFT."""
    h, w = frame.shape
    ch, cw = h // 2, w // 2
    out = np.zeros((h, w), dtype=np.complex128)
    for kh in range(h):
        for kw in range(w):
            acc = 0.0 + 0.0j
            for nh in range(h):
                for nw in range(w):
                    ang = -2j * np.pi * ((kh - ch) * (nh - ch) / h + (kw - cw) * (nw - cw) / w)
                    acc += frame[nh, nw] * np.exp(ang)
            out[kh, kw] = acc / np.sqrt(h * w)
    return out


# ---------------------------------------------------------------------------
# FFT


def test_fft2c_dc_of_ones():
    k = fft2c(np.ones((1, 4, 4), dtype=np.complex128))
    assert k[0, 2, 2] == pytest.approx(4.0)
    rest = np.delete(k.ravel(), 2 * 4 + 2)
    assert np.abs(rest).max() < 1e-12


def test_fft2c_parseval_single_precision(rng):
    x = (rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))).astype(np.complex64)
    assert abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x)) <= 1e-6 * np.linalg.norm(x)


def test_fft2c_parseval_double_precision(rng):
    x = rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16))
    assert abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)


def test_fft2c_matches_bruteforce_dft(rng):
    frame = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.abs(fft2c(frame[None])[0] - dft2c_bruteforce(frame)).max() < 1e-10


def test_ifft2c_roundtrip(rng):
    x = (rng.standard_normal((16, 64, 64)) + 1j * rng.standard_normal((16, 64, 64))).astype(np.complex64)
    back = ifft2c(fft2c(x))
    assert np.abs(back - x).max() <= 1e-6 * np.abs(x).max()


def test_ifft2c_dc_impulse():
    k = np.zeros((1, 4, 4), dtype=np.complex128)
    k[0, 2, 2] = 4.0
    assert np.abs(ifft2c(k) - 1.0).max() < 1e-12


def test_fft_adjoint_identity(rng):
    for _ in range(20):
        x = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
        y = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
        lhs = np.vdot(y, fft2c(x))
        rhs = np.vdot(ifft2c(y), x)
        assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


def test_fft_rejects_nonfinite():
    bad = np.ones((1, 8, 8), dtype=np.complex128)
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        fft2c(bad)


# ---------------------------------------------------------------------------
# Masks


def test_mask_full_sampling():
    m = make_mask(16, 64, 1.0, center_lines=4)
    assert m.lines.all()
    assert m.measured_R == 1.0


def test_mask_interleaved_example_exact():
    m = make_mask(16, 128, 8.0, center_lines=4, pattern="uniform-interleaved")
    assert (m.lines.sum(axis=1) == 16).all()
    assert m.measured_R == 8.0


def test_mask_accepts_fractional_acceleration():
    m = make_mask(16, 64, 14.8, center_lines=4, seed=1)
    assert 13.3 <= m.measured_R <= 16.3


@pytest.mark.parametrize("requested", [4.0, 8.0, 12.0, 14.8, 16.0])
@pytest.mark.parametrize("pattern", ["uniform-interleaved", "variable-density-random"])
@pytest.mark.parametrize("n_lines", [64, 128])
def test_mask_acceleration_within_ten_percent(requested, pattern, n_lines):
    m = make_mask(16, n_lines, requested, center_lines=4, pattern=pattern, seed=2)
    assert abs(m.measured_R - requested) <= 0.1 * requested


def test_mask_center_always_on():
    m = make_mask(8, 64, 8.0, center_lines=4, pattern="variable-density-random", seed=3)
    assert m.lines[:, 30:34].all()


def test_mask_interleaved_covers_all_rows_over_time():
    for n_lines in (64, 128):
        m = make_mask(16, n_lines, 8.0, center_lines=4, pattern="uniform-interleaved")
        assert m.lines.any(axis=0).all()


def test_mask_deterministic_in_seed():
    a = make_mask(8, 64, 8.0, 4, "variable-density-random", seed=9)
    b = make_mask(8, 64, 8.0, 4, "variable-density-random", seed=9)
    c = make_mask(8, 64, 8.0, 4, "variable-density-random", seed=10)
    assert np.array_equal(a.lines, b.lines)
    assert not np.array_equal(a.lines, c.lines)


def test_mask_infeasible_center_rejected():
    with pytest.raises(ValueError):
        make_mask(8, 64, 32.0, center_lines=4)  # budget is 2 lines/frame
    with pytest.raises(ValueError):
        make_mask(8, 64, 0.5, center_lines=4)
    with pytest.raises(ValueError):
        make_mask(8, 64, 8.0, center_lines=4, pattern="radial")


# ---------------------------------------------------------------------------
# Undersampling / zero-filled / data consistency


def test_undersample_full_mask_identity(small_phantom):
    m = make_mask(4, 16, 1.0, center_lines=2)
    k = undersample(small_phantom, m)
    rec = zero_filled_recon(k)
    assert np.abs(rec.data - small_phantom.data).max() <= 1e-5 * np.abs(small_phantom.data).max()


def test_undersample_offmask_exact_zero(small_phantom):
    m = make_mask(4, 16, 4.0, center_lines=2, seed=1)
    k = undersample(small_phantom, m)
    assert np.all(k.samples[~m.lines, :] == 0)


def test_undersample_energy_fraction(rng):
    # flat-spectrum inputs: sampled energy ~ 1/R of total
    ratios = []
    for i in range(20):
        data = (rng.standard_normal((4, 32, 32)) + 1j * rng.standard_normal((4, 32, 32))).astype(np.complex64)
        seq = CineSequence(data)
        m = make_mask(4, 32, 4.0, center_lines=2, pattern="variable-density-random", seed=i)
        k = undersample(seq, m)
        total = np.linalg.norm(np.asarray(np.fft.fft2(data, norm="ortho"))) ** 2
        ratios.append(np.linalg.norm(k.samples) ** 2 / total * m.measured_R)
    assert abs(np.mean(ratios) - 1.0) < 0.3


def test_undersample_noise_seeded(small_phantom):
    m = make_mask(4, 16, 2.0, center_lines=2, seed=0)
    a = undersample(small_phantom, m, noise_sigma=0.02, seed=5)
    b = undersample(small_phantom, m, noise_sigma=0.02, seed=5)
    c = undersample(small_phantom, m, noise_sigma=0.02, seed=6)
    assert np.array_equal(a.samples, b.samples)
    assert np.abs(a.samples - c.samples).max() > 0
    assert np.all(a.samples[~m.lines, :] == 0)


def test_zero_filled_zero_input(small_kspace):
    zeros = KSpaceData(np.zeros_like(small_kspace.samples), small_kspace.mask, 0.0)
    assert np.abs(zero_filled_recon(zeros).data).max() == 0


def test_data_consistency_idempotent_and_exact(rng):
    for case in range(20):
        g = np.random.default_rng(case)
        data = g.standard_normal((2, 16, 16)) + 1j * g.standard_normal((2, 16, 16))
        seq = CineSequence(data)
        m = make_mask(2, 16, 2.0, center_lines=2, pattern="variable-density-random", seed=case)
        k = undersample(CineSequence(g.standard_normal((2, 16, 16)) + 1j * g.standard_normal((2, 16, 16))), m)
        once = data_consistency(seq, k)
        twice = data_consistency(once, k)
        assert np.abs(twice.data - once.data).max() < 1e-10
        spectrum = np.asarray(
            np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(once.data, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))
        )
        assert np.abs(spectrum[m.lines, :] - k.samples[m.lines, :]).max() < 1e-10


def test_data_consistency_fixed_point(small_phantom):
    m = make_mask(4, 16, 1.0, center_lines=2)
    k = undersample(small_phantom, m)
    img = zero_filled_recon(k)
    out = data_consistency(img, k)
    assert np.abs(out.data - img.data).max() <= 1e-6


def test_data_consistency_linear_when_k_zero(rng):
    m = make_mask(2, 16, 2.0, center_lines=2, seed=3)
    kz = KSpaceData(np.zeros((2, 16, 16), dtype=np.complex128), m, 0.0)
    x = CineSequence(rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16)))
    y = CineSequence(rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16)))
    a, b = 0.7, -2.1
    combo = CineSequence(a * x.data + b * y.data)
    lhs = data_consistency(combo, kz).data
    rhs = a * data_consistency(x, kz).data + b * data_consistency(y, kz).data
    assert np.abs(lhs - rhs).max() < 1e-10


def test_shape_mismatch_rejected(small_phantom):
    m = make_mask(4, 32, 4.0, center_lines=2)
    with pytest.raises(ValueError):
        undersample(small_phantom, m)


def test_kspace_data_validates_offmask_zeros(small_kspace):
    samples = small_kspace.samples.copy()
    off = ~small_kspace.mask.lines
    samples[off, :] = 1.0
    with pytest.raises(ValueError):
        KSpaceData(samples, small_kspace.mask, 0.0)
