import itertools

import numpy as np
import pytest

from cinediff.errors import DegenerateDataError
from cinediff.metrics import (
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
    compute_report,
    high_frequency_energy_ratio,
    nmse,
    psnr,
    ssim,
    wilcoxon_signed_rank,
)
from cinediff.phantom import CineSequence, PhantomSpec, add_reference_noise, generate_phantom


# ---------------------------------------------------------------------------
# Independent brute-force oracles


def nmse_oracle(x, ref):
    mx, mr = np.abs(x), np.abs(ref)
    return np.sum((mx - mr) ** 2) / np.sum(mr**2)


def psnr_oracle(x, ref):
    mx, mr = np.abs(x), np.abs(ref)
    return 10 * np.log10(mr.max() ** 2 / np.mean((mx - mr) ** 2))


def ssim_oracle(x, ref):
    """Sliding-window re-implementation with explicit loops."""
    mx, mr = np.abs(x).astype(np.float64), np.abs(ref).astype(np.float64)
    w = SSIM_WINDOW
    half = w // 2
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1]
    win = np.exp(-(xx**2 + yy**2) / (2 * SSIM_SIGMA**2))
    win /= win.sum()
    L = mr.max()
    c1, c2 = (SSIM_K1 * L) ** 2, (SSIM_K2 * L) ** 2
    frame_scores = []
    for fx, fr in zip(mx, mr):
        h, wd = fx.shape
        vals = []
        for i in range(h - w + 1):
            for j in range(wd - w + 1):
                px = fx[i : i + w, j : j + w]
                pr = fr[i : i + w, j : j + w]
                mu_x = (win * px).sum()
                mu_r = (win * pr).sum()
                var_x = (win * px * px).sum() - mu_x**2
                var_r = (win * pr * pr).sum() - mu_r**2
                cov = (win * px * pr).sum() - mu_x * mu_r
                vals.append(
                    ((2 * mu_x * mu_r + c1) * (2 * cov + c2))
                    / ((mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2))
                )
        frame_scores.append(np.mean(vals))
    return np.mean(frame_scores)


def wilcoxon_oracle(a, b):
    """Exact two-sided P by enumerating all 2^n sign assignments."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    n = len(d)
    absd = np.abs(d)
    order = np.argsort(absd)
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    w_plus = ranks[d > 0].sum()
    dist = []
    for signs in itertools.product([0, 1], repeat=n):
        dist.append(sum(r for s, r in zip(signs, ranks) if s))
    dist = np.array(dist)
    p_low = np.mean(dist <= w_plus + 1e-12)
    p_high = np.mean(dist >= w_plus - 1e-12)
    return min(1.0, 2 * min(p_low, p_high))


# ---------------------------------------------------------------------------
# NMSE / PSNR


def test_nmse_identity_and_scaling(small_phantom):
    assert nmse(small_phantom, small_phantom) == 0.0
    ref = CineSequence(np.full((2, 8, 8), 0.5, dtype=np.complex128))
    double = CineSequence(2 * ref.data)
    assert nmse(double, ref) == pytest.approx(1.0, abs=1e-12)


def test_nmse_zero_reference_rejected():
    z = CineSequence(np.zeros((1, 8, 8), dtype=np.complex128))
    x = CineSequence(np.ones((1, 8, 8), dtype=np.complex128))
    with pytest.raises(ValueError):
        nmse(x, z)


def test_psnr_identity_and_formula(small_phantom):
    assert psnr(small_phantom, small_phantom) == float("inf")
    ref = np.ones((1, 10, 10))
    x = ref + 0.1  # mse = 0.01, peak = 1
    assert psnr(x.astype(complex), ref.astype(complex)) == pytest.approx(20.0, abs=1e-9)


def test_psnr_matches_oracle(rng):
    for _ in range(10):
        x = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
        ref = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
        assert psnr(x, ref) == pytest.approx(psnr_oracle(x, ref), abs=1e-9)


# ---------------------------------------------------------------------------
# SSIM


def test_ssim_identity(small_phantom):
    assert ssim(small_phantom, small_phantom) == pytest.approx(1.0, abs=1e-9)


def test_ssim_constant_frames_closed_form():
    a, b = 0.6, 0.3
    x = np.full((1, 16, 16), a, dtype=np.complex128)
    r = np.full((1, 16, 16), b, dtype=np.complex128)
    c1 = (SSIM_K1 * b) ** 2
    expected = (2 * a * b + c1) / (a**2 + b**2 + c1)
    assert ssim(x, r) == pytest.approx(expected, abs=1e-9)


def test_ssim_matches_bruteforce_oracle(rng):
    for _ in range(5):
        x = rng.random((1, 16, 16)) + 1j * 0
        r = rng.random((1, 16, 16)) + 1j * 0
        assert ssim(x, r) == pytest.approx(ssim_oracle(x, r), abs=1e-6)


def test_ssim_small_frames_rejected():
    tiny = np.ones((1, 8, 6), dtype=np.complex128)
    with pytest.raises(ValueError):
        ssim(tiny, tiny)


def test_metric_oracle_agreement_50_random_inputs(rng):
    for i in range(50):
        g = np.random.default_rng(i)
        x = g.random((2, 12, 12)) + 1j * g.random((2, 12, 12))
        r = g.random((2, 12, 12)) + 1j * g.random((2, 12, 12))
        assert nmse(x, r) == pytest.approx(nmse_oracle(x, r), abs=1e-6)
        assert psnr(x, r) == pytest.approx(psnr_oracle(x, r), abs=1e-6)
        assert ssim(x, r) == pytest.approx(ssim_oracle(x, r), abs=1e-6)


def test_metrics_monotone_in_noise():
    seq = generate_phantom(PhantomSpec(seed=6, n_frames=4, height=32, width=32, cardiac_period=4))
    nm, ps, ss = [], [], []
    for sigma in (0.01, 0.02, 0.05, 0.1):
        noisy = add_reference_noise(seq, sigma, seed=17)
        nm.append(nmse(noisy, seq))
        ps.append(psnr(noisy, seq))
        ss.append(ssim(noisy, seq))
    assert all(a < b for a, b in zip(nm, nm[1:]))
    assert all(a > b for a, b in zip(ps, ps[1:]))
    assert all(a > b for a, b in zip(ss, ss[1:]))


def test_ssim_bounds(rng):
    # arbitrary pairs stay in [-1, 1]; recon-style (correlated) pairs in [0, 1]
    for i in range(10):
        g = np.random.default_rng(100 + i)
        x = g.random((1, 12, 12)).astype(complex)
        r = g.random((1, 12, 12)).astype(complex)
        assert -1.0 <= ssim(x, r) <= 1.0
    seq = generate_phantom(PhantomSpec(seed=14, n_frames=4, height=32, width=32, cardiac_period=4))
    for sigma in (0.02, 0.1, 0.3):
        val = ssim(add_reference_noise(seq, sigma, seed=2), seq)
        assert 0.0 <= val <= 1.0


# ---------------------------------------------------------------------------
# Wilcoxon


def test_wilcoxon_one_differing_pair_large_p():
    a = np.arange(10.0)
    b = a.copy()
    b[4] += 1.0
    stat, p = wilcoxon_signed_rank(a, b)
    assert p > 0.5


def test_wilcoxon_all_greater_minimal_statistic():
    a = np.arange(10.0) + 1.0
    b = np.arange(10.0)
    stat, p = wilcoxon_signed_rank(a, b)
    assert stat == 0.0
    assert p == pytest.approx(2 / 2**10, rel=1e-12)


def test_wilcoxon_two_sided_symmetry(rng):
    a = rng.standard_normal(12)
    b = rng.standard_normal(12)
    _, p_ab = wilcoxon_signed_rank(a, b)
    _, p_ba = wilcoxon_signed_rank(b, a)
    assert p_ab == pytest.approx(p_ba, rel=1e-12)


def test_wilcoxon_matches_enumeration_oracle_n10():
    for i in range(20):
        g = np.random.default_rng(i)
        a = g.standard_normal(10)
        b = g.standard_normal(10)
        _, p = wilcoxon_signed_rank(a, b)
        assert p == pytest.approx(wilcoxon_oracle(a, b), abs=1e-12)


def test_wilcoxon_with_ties_matches_oracle():
    for i in range(10):
        g = np.random.default_rng(1000 + i)
        a = g.integers(0, 4, size=10).astype(float)
        b = g.integers(0, 4, size=10).astype(float)
        if np.all(a == b):
            continue
        _, p = wilcoxon_signed_rank(a, b)
        assert p == pytest.approx(wilcoxon_oracle(a, b), abs=1e-12)


def test_wilcoxon_normal_approximation_reasonable(rng):
    a = rng.standard_normal(40) + 1.5
    b = rng.standard_normal(40)
    _, p = wilcoxon_signed_rank(a, b)
    assert p < 1e-3


def test_wilcoxon_normal_approximation_near_exact_at_boundary():
    # n=26 uses the approximation; n=25 the exact enumeration. A one-pair
    # change should not move P dramatically across the switch.
    from cinediff.metrics import _exact_signed_rank_p, _midranks

    g = np.random.default_rng(7)
    a = g.standard_normal(26) + 0.45
    b = g.standard_normal(26)
    _, p_normal = wilcoxon_signed_rank(a, b)
    d = a - b
    d = d[d != 0]
    ranks = _midranks(np.abs(d))
    p_exact = _exact_signed_rank_p(ranks, float(ranks[d > 0].sum()))
    assert p_normal == pytest.approx(p_exact, rel=0.25)


def test_wilcoxon_degenerate_and_parameter_errors():
    with pytest.raises(DegenerateDataError):
        wilcoxon_signed_rank(np.ones(8), np.ones(8))
    with pytest.raises(ValueError):
        wilcoxon_signed_rank(np.ones(4), np.ones(4))


# ---------------------------------------------------------------------------
# HF energy ratio and report plumbing


def test_hf_energy_ratio_blur_below_one():
    seq = generate_phantom(PhantomSpec(seed=9, n_frames=4, height=32, width=32, cardiac_period=4))
    blurred = seq.data.copy()
    blurred = 0.25 * (
        blurred
        + np.roll(blurred, 1, axis=-1)
        + np.roll(blurred, 1, axis=-2)
        + np.roll(np.roll(blurred, 1, axis=-1), 1, axis=-2)
    )
    assert high_frequency_energy_ratio(CineSequence(blurred), seq) < 1.0
    assert high_frequency_energy_ratio(seq, seq) == pytest.approx(1.0)


def test_compute_report_rows_summary_significance(small_phantom):
    refs = {}
    noisy = {}
    noisier = {}
    for i in range(6):
        seq = generate_phantom(PhantomSpec(seed=50 + i, n_frames=4, height=16, width=16, cardiac_period=4))
        refs[f"s{i}"] = seq
        noisy[f"s{i}"] = add_reference_noise(seq, 0.02, seed=i)
        noisier[f"s{i}"] = add_reference_noise(seq, 0.1, seed=100 + i)
    report = compute_report({"low": noisy, "high": noisier}, refs)
    assert len(report.per_sequence) == 12
    assert set(report.summary) == {"low", "high"}
    assert "low|high" in report.significance
    _, p = report.significance["low|high"]["nmse"]
    assert p < 0.05  # 0.1 noise loses to 0.02 noise on every sequence


def test_report_serialization_roundtrip(tmp_path, small_phantom):
    refs = {"a": small_phantom}
    report = compute_report({"m": {"a": small_phantom}}, refs)
    report.to_csv(tmp_path / "m.csv")
    report.to_json(tmp_path / "m.json")
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == "sequence_id,method,nmse,psnr_db,ssim"
    assert "inf" in text  # psnr sentinel for identical images
