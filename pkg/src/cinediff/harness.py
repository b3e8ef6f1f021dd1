"""Experiment orchestration: dataset generation, two-stage training, the
method comparison (zero-filled / recurrent baseline / diffusion single,
averaged, paired), metric evaluation, and image reports.

Everything is keyed by an ExperimentConfig plus an output directory, and in
reference mode the whole pipeline is bit-reproducible from the config alone:
every random draw comes from a seed derived as hash(master_seed, stage, index).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .arrayio import ensure_dir, load_checkpoint, read_array, save_checkpoint, write_array
from .denoiser_net import STUNet, STUNetConfig
from .diffusion import (
    NoiseSchedule,
    ancestral_sample_batch,
    build_condition,
    check_production_schedule,
    make_schedule,
    train_denoiser,
)
from .kspace import KSpaceData, SamplingMask, make_mask, undersample, zero_filled_recon
from .metrics import MetricsReport, compute_report, high_frequency_energy_ratio
from .phantom import CineSequence, PhantomSpec, add_reference_noise, generate_phantom
from .recon_baseline import CRNNConfig, CRNNModel, CRNNParams, crnn_forward, crnn_train
from .util import (
    STAGE_KSPACE_NOISE,
    STAGE_MASK,
    STAGE_PHANTOM,
    STAGE_REFERENCE_NOISE,
    STAGE_SAMPLING,
    channels_to_complex,
    complex_to_channels,
    derive_seed,
    fingerprint_of,
    reference_mode,
)

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "generate_dataset",
    "train_baseline",
    "train_diffusion",
    "reconstruct",
    "evaluate",
    "emit_report",
    "run_pipeline",
    "validate_manifest",
    "real_time_cine_config",
]

DIFFUSION_METHODS = ("diff_single", "diff_avg", "diff_pair")
ALL_METHODS = ("zero_filled", "crnn") + DIFFUSION_METHODS


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one desk-scale experiment.

    Splits are disjoint by construction: sequence ids are global indices and
    the train/val/test ranges do not overlap. ``accelerations`` is cycled
    over sequences.
    """

    master_seed: int = 0
    n_train: int = 60
    n_val: int = 20
    n_test: int = 20
    phantom: PhantomSpec = PhantomSpec()
    frame_interval_ms: float = 34.0
    accelerations: tuple[float, ...] = (8.0, 12.0, 16.0)
    mask_pattern: str = "uniform-interleaved"
    center_lines: int = 4
    kspace_noise_sigma: float = 0.0
    reference_noise_sigma: float = 0.03
    crnn: CRNNConfig = CRNNConfig()
    stunet: STUNetConfig = STUNetConfig()
    n_diffusion_steps: int = 200
    beta_min: float | None = None
    beta_max: float | None = None
    diffusion_learning_rate: float = 2e-3
    diffusion_updates: int = 400
    diffusion_batch_size: int = 2
    methods: tuple[str, ...] = ALL_METHODS
    ensemble_size: int = 16
    ensemble_sequences: int = 2
    sampler_batch: int = 12

    def validate(self) -> None:
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("split sizes must be >= 1")
        self.phantom.validate()
        self.crnn.validate()
        self.stunet.validate()
        if not self.accelerations:
            raise ValueError("need at least one acceleration")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.ensemble_size < 2 or self.ensemble_sequences < 1 or self.sampler_batch < 1:
            raise ValueError("ensemble_size >= 2, ensemble_sequences >= 1, sampler_batch >= 1")

    def fingerprint(self) -> str:
        return fingerprint_of(self)

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.n_diffusion_steps, self.beta_min, self.beta_max)

    @property
    def n_sequences(self) -> int:
        return self.n_train + self.n_val + self.n_test

    def split_ids(self) -> dict[str, list[str]]:
        ids = [f"seq_{i:04d}" for i in range(self.n_sequences)]
        return {
            "train": ids[: self.n_train],
            "val": ids[self.n_train : self.n_train + self.n_val],
            "test": ids[self.n_train + self.n_val :],
        }

    def acceleration_for(self, index: int) -> float:
        return float(self.accelerations[index % len(self.accelerations)])

    # -- JSON round trip ----------------------------------------------------

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(dataclasses.asdict(self), f, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "phantom" in d:
            ph = dict(d["phantom"])
            if "intensity_range" in ph:
                ph["intensity_range"] = tuple(ph["intensity_range"])
            d["phantom"] = PhantomSpec(**ph)
        if "crnn" in d:
            d["crnn"] = CRNNConfig(**d["crnn"])
        if "stunet" in d:
            d["stunet"] = STUNetConfig(**d["stunet"])
        for key in ("accelerations", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def real_time_cine_config(base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Preset for the single-shot real-time arm: R = 14.8, 42 ms frames."""
    base = base or ExperimentConfig()
    return replace(base, accelerations=(14.8,), frame_interval_ms=42.0)


@dataclass
class RunManifest:
    """Record of one pipeline run: provenance, artifacts, timings, seeds."""

    config_fingerprint: str
    code_version: str
    checkpoints: dict[str, str] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(dataclasses.asdict(self), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as f:
            return cls(**json.load(f))


# ---------------------------------------------------------------------------
# Dataset stage


def _sequence_index(seq_id: str) -> int:
    return int(seq_id.split("_")[1])


def generate_dataset(cfg: ExperimentConfig, out_dir) -> Path:
    """Write ground truth, noisy reference, mask, and k-space per sequence."""
    cfg.validate()
    out = ensure_dir(Path(out_dir) / "dataset")
    splits = cfg.split_ids()
    fingerprint = cfg.fingerprint()
    index = {"config_fingerprint": fingerprint, "splits": splits}
    for split, ids in splits.items():
        for seq_id in ids:
            i = _sequence_index(seq_id)
            spec = replace(cfg.phantom, seed=derive_seed(cfg.master_seed, STAGE_PHANTOM, i))
            gt = generate_phantom(spec)
            gt = CineSequence(gt.data, gt.pixel_spacing_mm, cfg.frame_interval_ms)
            ref = add_reference_noise(
                gt, cfg.reference_noise_sigma, derive_seed(cfg.master_seed, STAGE_REFERENCE_NOISE, i)
            )
            r = cfg.acceleration_for(i)
            mask = make_mask(
                spec.n_frames,
                spec.height,
                r,
                cfg.center_lines,
                cfg.mask_pattern,
                derive_seed(cfg.master_seed, STAGE_MASK, i),
            )
            k = undersample(
                gt, mask, cfg.kspace_noise_sigma, derive_seed(cfg.master_seed, STAGE_KSPACE_NOISE, i)
            )
            seq_dir = ensure_dir(out / seq_id)
            write_array(seq_dir / "ground_truth.cinearr", gt.data)
            write_array(seq_dir / "reference.cinearr", ref.data)
            write_array(seq_dir / "mask.cinearr", mask.lines.astype(np.uint8))
            write_array(seq_dir / "kspace.cinearr", k.samples)
            meta = {
                "config_fingerprint": fingerprint,
                "split": split,
                "sequence_index": i,
                "pixel_spacing_mm": list(gt.pixel_spacing_mm),
                "frame_interval_ms": cfg.frame_interval_ms,
                "requested_R": r,
                "measured_R": mask.measured_R,
                "center_lines": mask.center_lines,
                "mask_pattern": cfg.mask_pattern,
                "phantom_seed": spec.seed,
                "reference_noise_sigma": cfg.reference_noise_sigma,
                "kspace_noise_sigma": cfg.kspace_noise_sigma,
            }
            with open(seq_dir / "meta.json", "w") as f:
                json.dump(meta, f, indent=2, sort_keys=True)
    with open(out / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return out


def _load_sequence(out_dir, seq_id: str):
    seq_dir = Path(out_dir) / "dataset" / seq_id
    with open(seq_dir / "meta.json") as f:
        meta = json.load(f)
    spacing = tuple(meta["pixel_spacing_mm"])
    interval = meta["frame_interval_ms"]
    gt = CineSequence(read_array(seq_dir / "ground_truth.cinearr"), spacing, interval)
    ref = CineSequence(read_array(seq_dir / "reference.cinearr"), spacing, interval)
    lines = read_array(seq_dir / "mask.cinearr").astype(bool)
    mask = SamplingMask(
        lines,
        meta["center_lines"],
        meta["requested_R"],
        (lines.size) / int(lines.sum()),
    )
    k = KSpaceData(read_array(seq_dir / "kspace.cinearr"), mask, meta["kspace_noise_sigma"])
    return gt, ref, k, meta


def _load_split(out_dir) -> dict[str, list[str]]:
    with open(Path(out_dir) / "dataset" / "index.json") as f:
        return json.load(f)["splits"]


# ---------------------------------------------------------------------------
# Training stages


def train_baseline(cfg: ExperimentConfig, out_dir) -> Path:
    """Train the recurrent de-aliasing stage on (k-space, noisy reference)."""
    splits = _load_split(out_dir)
    dataset = []
    for seq_id in splits["train"]:
        _, ref, k, _ = _load_sequence(out_dir, seq_id)
        dataset.append((k, ref))
    params = crnn_train(dataset, cfg.crnn)
    ckpt_dir = ensure_dir(Path(out_dir) / "checkpoints")
    path = ckpt_dir / "crnn.ckpt"
    header = {
        "kind": "crnn",
        "config": dataclasses.asdict(cfg.crnn),
        "config_fingerprint": cfg.crnn.fingerprint(),
        "experiment_fingerprint": cfg.fingerprint(),
        "n_parameters": params.n_parameters,
        "loss_history": params.loss_history,
        "seed": cfg.crnn.seed,
        "optimizer": "adam",
    }
    save_checkpoint(path, header, params.state_arrays())
    return path


def load_baseline(path) -> CRNNParams:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "crnn":
        raise ValueError(f"{path} is not a baseline checkpoint")
    config = CRNNConfig(**header["config"])
    model = CRNNModel(config)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    model.eval()
    return CRNNParams(model, config, list(header["loss_history"]))


def _diffusion_training_pairs(cfg, out_dir, params: CRNNParams):
    splits = _load_split(out_dir)
    pairs = []
    for seq_id in splits["train"]:
        _, ref, k, _ = _load_sequence(out_dir, seq_id)
        baseline = crnn_forward(params, k)
        cond = build_condition(k, baseline)
        x0 = complex_to_channels(ref.data) / np.float32(cond.normalization_scale)
        pairs.append((cond.channels, x0))
    return pairs


def train_diffusion(cfg: ExperimentConfig, out_dir) -> Path:
    """Train the conditional denoiser on (condition, normalized reference)."""
    ckpt_dir = Path(out_dir) / "checkpoints"
    params = load_baseline(ckpt_dir / "crnn.ckpt")
    schedule = cfg.schedule()
    check_production_schedule(schedule)
    pairs = _diffusion_training_pairs(cfg, out_dir, params)
    torch.manual_seed(derive_seed(cfg.master_seed, STAGE_SAMPLING, 0))
    model = STUNet(cfg.stunet)
    history = train_denoiser(
        model,
        pairs,
        schedule,
        learning_rate=cfg.diffusion_learning_rate,
        n_updates=cfg.diffusion_updates,
        batch_size=cfg.diffusion_batch_size,
        seed=derive_seed(cfg.master_seed, STAGE_SAMPLING, 1),
    )
    path = ensure_dir(ckpt_dir) / "diffusion.ckpt"
    header = {
        "kind": "diffusion",
        "config": dataclasses.asdict(cfg.stunet),
        "config_fingerprint": fingerprint_of(cfg.stunet),
        "experiment_fingerprint": cfg.fingerprint(),
        "n_parameters": model.n_parameters(),
        "loss_history": history,
        "seed": cfg.master_seed,
        "schedule": {
            "n_steps": cfg.n_diffusion_steps,
            "beta_min": cfg.beta_min,
            "beta_max": cfg.beta_max,
        },
        "optimizer": "adam",
    }
    save_checkpoint(path, header, {k: v.detach().numpy().copy() for k, v in model.state_dict().items()})
    return path


def load_denoiser(path) -> tuple[STUNet, NoiseSchedule, dict]:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "diffusion":
        raise ValueError(f"{path} is not a diffusion checkpoint")
    config = STUNetConfig(**header["config"])
    model = STUNet(config)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    model.eval()
    sched = header["schedule"]
    schedule = make_schedule(sched["n_steps"], sched["beta_min"], sched["beta_max"])
    return model, schedule, header


# ---------------------------------------------------------------------------
# Reconstruction stage


def _sampling_seed(cfg: ExperimentConfig, seq_index: int, draw: int) -> int:
    return derive_seed(cfg.master_seed, STAGE_SAMPLING, 100 + seq_index, draw)


def reconstruct(cfg: ExperimentConfig, out_dir) -> Path:
    """Produce every method's reconstruction for each test sequence.

    Diffusion trajectories are shared across methods per sequence (common
    random numbers): diff_single uses Z0, diff_avg averages Z0 and Z1, and
    diff_pair averages Z0 and -Z0. The first ``ensemble_sequences`` test
    sequences additionally get an ``ensemble_size``-seed ensemble per
    diffusion method, summarized as the median per-pixel std in
    ensemble_stats.json.
    """
    splits = _load_split(out_dir)
    test_ids = splits["test"]
    crnn_params = load_baseline(Path(out_dir) / "checkpoints" / "crnn.ckpt")
    model, schedule, _ = load_denoiser(Path(out_dir) / "checkpoints" / "diffusion.ckpt")

    recon_dir = ensure_dir(Path(out_dir) / "recon")
    for method in cfg.methods:
        ensure_dir(recon_dir / method)

    conds = {}
    scales = {}
    baselines = {}
    for seq_id in test_ids:
        _, _, k, _ = _load_sequence(out_dir, seq_id)
        baseline = crnn_forward(crnn_params, k)
        baselines[seq_id] = baseline
        if any(m in cfg.methods for m in DIFFUSION_METHODS):
            cond = build_condition(k, baseline)
            conds[seq_id] = cond
            scales[seq_id] = cond.normalization_scale
        if "zero_filled" in cfg.methods:
            write_array(recon_dir / "zero_filled" / f"{seq_id}.cinearr", zero_filled_recon(k).data)
        if "crnn" in cfg.methods:
            write_array(recon_dir / "crnn" / f"{seq_id}.cinearr", baseline.data)

    ensemble_stats: dict[str, dict[str, float]] = {m: {} for m in DIFFUSION_METHODS}
    if any(m in cfg.methods for m in DIFFUSION_METHODS):
        ensemble_ids = test_ids[: cfg.ensemble_sequences]
        jobs: dict[tuple[str, int, int], None] = {}

        def add_job(seq_id, draw, sign):
            jobs.setdefault((seq_id, draw, sign), None)

        for seq_id in test_ids:
            add_job(seq_id, 0, 1)
            add_job(seq_id, 1, 1)
            add_job(seq_id, 0, -1)
        for seq_id in ensemble_ids:
            for e in range(cfg.ensemble_size):
                add_job(seq_id, 2 * e, 1)
                add_job(seq_id, 2 * e + 1, 1)
                add_job(seq_id, 2 * e, -1)

        outputs: dict[tuple[str, int, int], np.ndarray] = {}
        job_list = list(jobs)
        for start in range(0, len(job_list), cfg.sampler_batch):
            chunk = job_list[start : start + cfg.sampler_batch]
            batch = ancestral_sample_batch(
                model,
                [conds[s] for s, _, _ in chunk],
                schedule,
                [_sampling_seed(cfg, _sequence_index(s), d) for s, d, _ in chunk],
                [sign for _, _, sign in chunk],
            )
            for key, out in zip(chunk, batch):
                outputs[key] = out

        def to_complex(seq_id, channels):
            return channels_to_complex(channels) * np.complex64(scales[seq_id])

        for seq_id in test_ids:
            z0 = outputs[(seq_id, 0, 1)]
            z1 = outputs[(seq_id, 1, 1)]
            z0n = outputs[(seq_id, 0, -1)]
            per_method = {
                "diff_single": z0,
                "diff_avg": (z0 + z1) / 2,
                "diff_pair": (z0 + z0n) / 2,
            }
            for method, channels in per_method.items():
                if method in cfg.methods:
                    write_array(recon_dir / method / f"{seq_id}.cinearr", to_complex(seq_id, channels))

        for seq_id in ensemble_ids:
            stacks = {m: [] for m in DIFFUSION_METHODS}
            for e in range(cfg.ensemble_size):
                a = outputs[(seq_id, 2 * e, 1)]
                b = outputs[(seq_id, 2 * e + 1, 1)]
                an = outputs[(seq_id, 2 * e, -1)]
                stacks["diff_single"].append(a)
                stacks["diff_avg"].append((a + b) / 2)
                stacks["diff_pair"].append((a + an) / 2)
            for method, stack in stacks.items():
                arr = np.stack(stack) * scales[seq_id]  # back to physical intensity units
                per_pixel_std = arr.std(axis=0, ddof=1)
                ensemble_stats[method][seq_id] = float(np.median(per_pixel_std))

    with open(recon_dir / "ensemble_stats.json", "w") as f:
        json.dump(
            {"ensemble_size": cfg.ensemble_size, "median_pixel_std": ensemble_stats},
            f,
            indent=2,
            sort_keys=True,
        )
    return recon_dir


# ---------------------------------------------------------------------------
# Evaluation stage


def _load_recons(cfg, out_dir) -> tuple[dict, dict, dict]:
    splits = _load_split(out_dir)
    recon_dir = Path(out_dir) / "recon"
    recons = {m: {} for m in cfg.methods}
    gts, refs = {}, {}
    for seq_id in splits["test"]:
        gt, ref, _, _ = _load_sequence(out_dir, seq_id)
        gts[seq_id] = gt
        refs[seq_id] = ref
        for method in cfg.methods:
            data = read_array(recon_dir / method / f"{seq_id}.cinearr")
            recons[method][seq_id] = CineSequence(data, gt.pixel_spacing_mm, gt.frame_interval_ms)
    return recons, gts, refs


def evaluate(cfg: ExperimentConfig, out_dir) -> dict:
    """Score reconstructions against the noise-free ground truth (primary)
    and against the noisy reference (acquisition-faithful variant)."""
    recons, gts, refs = _load_recons(cfg, out_dir)
    metrics_dir = ensure_dir(Path(out_dir) / "metrics")
    report_gt = compute_report(recons, gts)
    report_gt.to_csv(metrics_dir / "metrics_noise_free.csv")
    report_gt.to_json(metrics_dir / "metrics_noise_free.json")
    report_ref = compute_report(recons, refs)
    report_ref.to_csv(metrics_dir / "metrics_noisy_reference.csv")
    report_ref.to_json(metrics_dir / "metrics_noisy_reference.json")

    hf_ratio = {}
    if "crnn" in cfg.methods:
        hf_ratio = {
            seq_id: high_frequency_energy_ratio(recons["crnn"][seq_id], gts[seq_id])
            for seq_id in gts
        }
    stats_path = Path(out_dir) / "recon" / "ensemble_stats.json"
    ensemble = json.loads(stats_path.read_text()) if stats_path.exists() else {}
    evaluation = {
        "config_fingerprint": cfg.fingerprint(),
        "hf_energy_ratio_crnn": hf_ratio,
        "ensemble": ensemble,
    }
    with open(metrics_dir / "evaluation.json", "w") as f:
        json.dump(evaluation, f, indent=2, sort_keys=True)
    return evaluation


# ---------------------------------------------------------------------------
# Report stage


def _frame_grid(mag: np.ndarray) -> np.ndarray:
    t, h, w = mag.shape
    cols = int(np.ceil(np.sqrt(t)))
    rows = int(np.ceil(t / cols))
    grid = np.zeros((rows * h, cols * w))
    for i in range(t):
        r, c = divmod(i, cols)
        grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = mag[i]
    return grid


def emit_report(cfg: ExperimentConfig, out_dir) -> Path:
    """Write montages, x-t profiles, and shared-scale difference maps."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    recons, gts, _ = _load_recons(cfg, out_dir)
    report_dir = ensure_dir(Path(out_dir) / "report")
    montage_dir = ensure_dir(report_dir / "montage")
    xt_dir = ensure_dir(report_dir / "xt")
    diff_dir = ensure_dir(report_dir / "diff")

    mad = {m: {} for m in cfg.methods}
    for seq_id, gt in gts.items():
        gt_mag = gt.magnitude()
        vmax = float(gt_mag.max())
        h = gt_mag.shape[1]
        plt.imsave(montage_dir / f"{seq_id}_ground_truth.png", _frame_grid(gt_mag), cmap="gray", vmin=0, vmax=vmax)
        plt.imsave(xt_dir / f"{seq_id}_ground_truth.png", gt_mag[:, h // 2, :], cmap="gray", vmin=0, vmax=vmax)

        fig, axes = plt.subplots(1, len(cfg.methods), figsize=(3 * len(cfg.methods), 3))
        if len(cfg.methods) == 1:
            axes = [axes]
        diff_vmax = 0.3 * vmax
        for ax, method in zip(axes, cfg.methods):
            mag = recons[method][seq_id].magnitude()
            plt.imsave(montage_dir / f"{seq_id}_{method}.png", _frame_grid(mag), cmap="gray", vmin=0, vmax=vmax)
            plt.imsave(xt_dir / f"{seq_id}_{method}.png", mag[:, h // 2, :], cmap="gray", vmin=0, vmax=vmax)
            diff = np.abs(mag - gt_mag)
            mad[method][seq_id] = float(diff.mean())
            ax.imshow(diff[diff.shape[0] // 2], cmap="inferno", vmin=0, vmax=diff_vmax)
            ax.set_title(method, fontsize=8)
            ax.axis("off")
        fig.tight_layout()
        fig.savefig(diff_dir / f"{seq_id}.png", dpi=80)
        plt.close(fig)

    with open(report_dir / "summary.json", "w") as f:
        json.dump({"mean_abs_difference": mad}, f, indent=2, sort_keys=True)
    return report_dir


# ---------------------------------------------------------------------------
# Full pipeline


def run_pipeline(cfg: ExperimentConfig, out_dir, use_reference_mode: bool = False, make_report: bool = True) -> RunManifest:
    """Dataset -> baseline training -> diffusion training -> reconstruction
    -> evaluation (-> report), returning the manifest it writes."""
    cfg.validate()
    out = ensure_dir(out_dir)

    def timed(name, fn):
        t0 = time.perf_counter()
        result = fn()
        timings[name] = time.perf_counter() - t0
        return result

    timings: dict[str, float] = {}

    def stages():
        timed("generate_dataset", lambda: generate_dataset(cfg, out))
        crnn_path = timed("train_baseline", lambda: train_baseline(cfg, out))
        diff_path = timed("train_diffusion", lambda: train_diffusion(cfg, out))
        timed("reconstruct", lambda: reconstruct(cfg, out))
        timed("evaluate", lambda: evaluate(cfg, out))
        if make_report:
            timed("report", lambda: emit_report(cfg, out))
        return crnn_path, diff_path

    if use_reference_mode:
        with reference_mode():
            crnn_path, diff_path = stages()
    else:
        crnn_path, diff_path = stages()

    manifest = RunManifest(
        config_fingerprint=cfg.fingerprint(),
        code_version=__version__,
        checkpoints={"crnn": str(crnn_path), "diffusion": str(diff_path)},
        timings_s=timings,
        seeds={
            "master_seed": cfg.master_seed,
            "stage_tags": {
                "phantom": STAGE_PHANTOM,
                "reference_noise": STAGE_REFERENCE_NOISE,
                "mask": STAGE_MASK,
                "kspace_noise": STAGE_KSPACE_NOISE,
                "sampling": STAGE_SAMPLING,
            },
            "reference_mode": use_reference_mode,
        },
        artifacts={
            "dataset_index": str(Path(out) / "dataset" / "index.json"),
            "metrics_noise_free": str(Path(out) / "metrics" / "metrics_noise_free.csv"),
            "metrics_noisy_reference": str(Path(out) / "metrics" / "metrics_noisy_reference.csv"),
            "evaluation": str(Path(out) / "metrics" / "evaluation.json"),
        },
    )
    cfg.to_json(Path(out) / "config.json")
    manifest.save(Path(out) / "manifest.json")
    return manifest


def validate_manifest(out_dir) -> None:
    """Check that every referenced artifact exists and matches the config."""
    out = Path(out_dir)
    manifest = RunManifest.load(out / "manifest.json")
    for name, path in list(manifest.artifacts.items()) + list(manifest.checkpoints.items()):
        if not Path(path).exists():
            raise FileNotFoundError(f"manifest artifact {name} missing: {path}")
    with open(out / "dataset" / "index.json") as f:
        index = json.load(f)
    if index["config_fingerprint"] != manifest.config_fingerprint:
        raise ValueError("dataset was generated from a different config")
    for kind in ("crnn", "diffusion"):
        header, _ = load_checkpoint(manifest.checkpoints[kind])
        if header["experiment_fingerprint"] != manifest.config_fingerprint:
            raise ValueError(f"{kind} checkpoint belongs to a different config")
