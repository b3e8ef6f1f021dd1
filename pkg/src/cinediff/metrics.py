"""Image-quality metrics on magnitude sequences and paired significance tests.

Conventions (fixed here and documented because comparisons elsewhere only
use orderings): metrics act on magnitude images; PSNR peak and SSIM data
range are the reference magnitude peak; SSIM uses a 7x7 Gaussian window
(sigma 1.5, K1=0.01, K2=0.03) evaluated at fully interior positions and is
averaged per frame then over frames.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError

__all__ = [
    "nmse",
    "psnr",
    "ssim",
    "wilcoxon_signed_rank",
    "high_frequency_energy_ratio",
    "MetricsReport",
    "compute_report",
]

SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _magnitude(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.abs(np.asarray(data)).astype(np.float64)


def nmse(x, ref) -> float:
    """Normalized mean squared error between magnitude sequences.

    || |x| - |ref| ||^2 / || |ref| ||^2 over all frames.
    """
    mx, mr = _magnitude(x), _magnitude(ref)
    if mx.shape != mr.shape:
        raise ValueError(f"shape mismatch: {mx.shape} vs {mr.shape}")
    denom = float(np.sum(mr**2))
    if denom == 0:
        raise ValueError("reference has zero energy")
    return float(np.sum((mx - mr) ** 2) / denom)


def psnr(x, ref) -> float:
    """Peak signal-to-noise ratio in dB; peak is the reference magnitude max.

    Returns ``float('inf')`` when the images are identical.
    """
    mx, mr = _magnitude(x), _magnitude(ref)
    if mx.shape != mr.shape:
        raise ValueError(f"shape mismatch: {mx.shape} vs {mr.shape}")
    mse = float(np.mean((mx - mr) ** 2))
    if mse == 0:
        return float("inf")
    peak = float(mr.max())
    return float(10.0 * math.log10(peak**2 / mse))


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    g = np.exp(-np.arange(-half, half + 1) ** 2 / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2D correlation with ``window``, evaluated at fully interior positions."""
    w = window.shape[0]
    h, wd = img.shape
    out = np.zeros((h - w + 1, wd - w + 1))
    for i in range(w):
        for j in range(w):
            out += window[i, j] * img[i : i + h - w + 1, j : j + wd - w + 1]
    return out


def ssim(x, ref) -> float:
    """Mean structural similarity over frames of two magnitude sequences."""
    mx, mr = _magnitude(x), _magnitude(ref)
    if mx.shape != mr.shape:
        raise ValueError(f"shape mismatch: {mx.shape} vs {mr.shape}")
    if mx.ndim == 2:
        mx, mr = mx[None], mr[None]
    _, h, w = mx.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"frames must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    data_range = float(mr.max())
    if data_range == 0:
        raise ValueError("reference has zero peak")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    window = _gaussian_window()
    scores = []
    for fx, fr in zip(mx, mr):
        mu_x = _filter_valid(fx, window)
        mu_r = _filter_valid(fr, window)
        var_x = _filter_valid(fx * fx, window) - mu_x**2
        var_r = _filter_valid(fr * fr, window) - mu_r**2
        cov = _filter_valid(fx * fr, window) - mu_x * mu_r
        s = ((2 * mu_x * mu_r + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2)
        )
        scores.append(float(s.mean()))
    return float(np.mean(scores))


def high_frequency_energy_ratio(x, ref) -> float:
    """Spectral energy outside the central quarter-area k-space box of ``x``
    relative to the same energy of ``ref``.

    Values below 1 mean ``x`` carries less high-frequency content than the
    reference, i.e. it is blurrier.
    """
    from .kspace import fft2c  # local import; kspace depends on nothing here

    dx = np.asarray(getattr(x, "data", x))
    dr = np.asarray(getattr(ref, "data", ref))
    if dx.shape != dr.shape:
        raise ValueError(f"shape mismatch: {dx.shape} vs {dr.shape}")
    h, w = dx.shape[-2:]
    hs, ws = (h - h // 2) // 2, (w - w // 2) // 2
    box = np.zeros((h, w), dtype=bool)
    box[hs : hs + h // 2, ws : ws + w // 2] = True

    def hf_energy(d):
        spectrum = np.abs(fft2c(d)) ** 2
        return float(spectrum[..., ~box].sum())

    denom = hf_energy(dr)
    if denom == 0:
        raise ValueError("reference has no high-frequency energy")
    return hf_energy(dx) / denom


def _midranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their midrank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_signed_rank_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided exact P for the signed-rank statistic under H0.

    Enumerates the distribution of W+ over all 2^n sign assignments via
    dynamic programming on doubled ranks (midranks are multiples of 1/2, so
    doubling makes them integers).
    """
    doubled = np.round(ranks * 2).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    w2 = int(round(w_plus * 2))
    p_low = float(counts[: w2 + 1].sum())
    p_high = float(counts[w2:].sum())
    return min(1.0, 2.0 * min(p_low, p_high))


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired observations.

    Zero differences are dropped; ties in |difference| take midranks. The
    statistic is min(W+, W-). Exact enumeration is used for up to 25
    non-zero pairs, a normal approximation with tie correction above that.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1D arrays of equal length")
    if len(a) < 6:
        raise ValueError(f"need at least 6 pairs, got {len(a)}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateDataError("all paired differences are zero")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)
    if n <= 25:
        p = _exact_signed_rank_p(ranks, w_plus)
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
        z = (w_plus - mu) / math.sqrt(var)
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return statistic, p


# ---------------------------------------------------------------------------
# Aggregated reporting


def _json_safe(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class MetricsReport:
    """Per-sequence metric rows plus per-method summaries and significance.

    per_sequence rows are dicts with keys (sequence_id, method, nmse,
    psnr_db, ssim). summary maps method -> metric -> (mean, std).
    significance maps "methodA|methodB" -> metric -> (statistic, p).
    """

    per_sequence: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    significance: dict = field(default_factory=dict)

    METRICS = ("nmse", "psnr_db", "ssim")

    def methods(self) -> list[str]:
        seen = []
        for row in self.per_sequence:
            if row["method"] not in seen:
                seen.append(row["method"])
        return seen

    def values(self, method: str, metric: str) -> np.ndarray:
        rows = [r for r in self.per_sequence if r["method"] == method]
        rows.sort(key=lambda r: r["sequence_id"])
        return np.array([r[metric] for r in rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["sequence_id", "method", "nmse", "psnr_db", "ssim"])
            for row in sorted(self.per_sequence, key=lambda r: (r["sequence_id"], r["method"])):
                writer.writerow(
                    [row["sequence_id"], row["method"], repr(row["nmse"]), repr(row["psnr_db"]), repr(row["ssim"])]
                )

    def to_json(self, path) -> None:
        payload = {
            "summary": {
                m: {k: [_json_safe(v) for v in pair] for k, pair in d.items()}
                for m, d in self.summary.items()
            },
            "significance": self.significance,
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)


def compute_report(recons: dict, references: dict) -> MetricsReport:
    """Score every method against the per-sequence references.

    recons: method name -> {sequence_id -> CineSequence}.
    references: sequence_id -> CineSequence.
    Pairwise Wilcoxon tests are attached when at least 6 sequences exist.
    """
    report = MetricsReport()
    for method, by_seq in recons.items():
        for seq_id in sorted(by_seq):
            ref = references[seq_id]
            rec = by_seq[seq_id]
            report.per_sequence.append(
                {
                    "sequence_id": seq_id,
                    "method": method,
                    "nmse": nmse(rec, ref),
                    "psnr_db": psnr(rec, ref),
                    "ssim": ssim(rec, ref),
                }
            )
    for method in recons:
        report.summary[method] = {}
        for metric in MetricsReport.METRICS:
            vals = report.values(method, metric)
            finite = vals[np.isfinite(vals)]
            mean = float(finite.mean()) if finite.size else float("nan")
            std = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
            report.summary[method][metric] = (mean, std)
    methods = list(recons)
    n_seq = len(references)
    if n_seq >= 6:
        for i, ma in enumerate(methods):
            for mb in methods[i + 1 :]:
                key = f"{ma}|{mb}"
                report.significance[key] = {}
                for metric in MetricsReport.METRICS:
                    va, vb = report.values(ma, metric), report.values(mb, metric)
                    if not (np.all(np.isfinite(va)) and np.all(np.isfinite(vb))):
                        continue
                    try:
                        stat, p = wilcoxon_signed_rank(va, vb)
                    except DegenerateDataError:
                        continue
                    report.significance[key][metric] = (stat, p)
    return report
