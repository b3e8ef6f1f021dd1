"""Unrolled recurrent de-aliasing reconstructor (non-generative first stage).

A small recurrent network with spatiotemporal convolutions refines the
zero-filled image over a fixed number of iterations; every iteration ends
with a hard data-consistency projection, so forward outputs always match
the measured k-space exactly at acquired lines. This is the model whose
output (de-aliased but blurry) conditions the diffusion stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import TrainingDivergenceError
from .kspace import KSpaceData, zero_filled_recon
from .nn_blocks import TemporalConv
from .phantom import CineSequence
from .util import complex_to_channels, fingerprint_of

__all__ = ["CRNNConfig", "CRNNParams", "CRNNModel", "init_params", "crnn_forward", "crnn_train"]


@dataclass(frozen=True)
class CRNNConfig:
    n_iterations: int = 4
    hidden_channels: int = 16
    spatial_kernel: int = 3
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be >= 1")
        if self.spatial_kernel < 1 or self.spatial_kernel % 2 == 0:
            raise ValueError("spatial_kernel must be odd")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, batch_size must be positive")

    def fingerprint(self) -> str:
        return fingerprint_of(self)


# -- torch-side centered orthonormal FFT helpers (match kspace.fft2c) --------

def _fftshift(x, dims=(-2, -1)):
    return torch.fft.fftshift(x, dim=dims)

def _ifftshift(x, dims=(-2, -1)):
    return torch.fft.ifftshift(x, dim=dims)

def fft2c_t(x: torch.Tensor) -> torch.Tensor:
    return _fftshift(torch.fft.fft2(_ifftshift(x), norm="ortho"))

def ifft2c_t(k: torch.Tensor) -> torch.Tensor:
    return _fftshift(torch.fft.ifft2(_ifftshift(k), norm="ortho"))


def _channels_to_complex_t(x: torch.Tensor) -> torch.Tensor:
    # (B,2,T,H,W) real -> (B,T,H,W) complex
    return torch.complex(x[:, 0], x[:, 1])

def _complex_to_channels_t(z: torch.Tensor) -> torch.Tensor:
    return torch.stack([z.real, z.imag], dim=1)


def data_consistency_t(x: torch.Tensor, samples: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Hard DC on channel images: replace spectrum at acquired lines.

    x: (B,2,T,H,W) real; samples: (B,T,H,W) complex; mask: (B,T,H) bool.
    """
    spectrum = fft2c_t(_channels_to_complex_t(x))
    merged = torch.where(mask[..., None], samples.to(spectrum.dtype), spectrum)
    return _complex_to_channels_t(ifft2c_t(merged))


def _dc_frames_major(x: torch.Tensor, samples: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # x: (B,T,2,H,W) real; samples: (B,T,H,W) complex; mask: (B,T,H) bool
    spectrum = fft2c_t(torch.complex(x[:, :, 0], x[:, :, 1]))
    merged = torch.where(mask[..., None], samples.to(spectrum.dtype), spectrum)
    img = ifft2c_t(merged)
    return torch.stack([img.real, img.imag], dim=2)


class CRNNModel(nn.Module):
    """Recurrent refinement: hidden state and residual update, then hard DC.

    Weights are shared across iterations. The residual head is
    zero-initialized, so an untrained model is the identity on the
    zero-filled image (modulo the FFT round trip of the DC projection).
    """

    def __init__(self, config: CRNNConfig):
        super().__init__()
        config.validate()
        self.config = config
        k = config.spatial_kernel
        h = config.hidden_channels
        self.conv_in = TemporalConv(4 + h, h, 3, k)
        self.conv_hidden = TemporalConv(h, h, 3, k)
        self.conv_out = TemporalConv(h, 2, 3, k)
        self.conv_out.zero_()

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, zf: torch.Tensor, samples: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # zf: (B,2,T,H,W) zero-filled channels; samples/mask as in data_consistency_t
        b, _, t, hh, ww = zf.shape
        zf_tm = zf.permute(0, 2, 1, 3, 4).contiguous()  # frames-major (B,T,2,H,W)
        x = zf_tm
        hidden = zf.new_zeros((b, t, self.config.hidden_channels, hh, ww))
        for _ in range(self.config.n_iterations):
            hidden = F.silu(self.conv_in(torch.cat([x, zf_tm, hidden], dim=2)))
            hidden = F.silu(self.conv_hidden(hidden))
            x = _dc_frames_major(x + self.conv_out(hidden), samples, mask)
        return x.permute(0, 2, 1, 3, 4)


@dataclass
class CRNNParams:
    """Trained (or initialized) reconstructor parameters plus provenance."""

    model: CRNNModel
    config: CRNNConfig
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_parameters(self) -> int:
        return self.model.n_parameters()

    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy().copy() for k, v in self.model.state_dict().items()}

    def assert_finite(self) -> None:
        for name, p in self.model.state_dict().items():
            if not torch.isfinite(p).all():
                raise TrainingDivergenceError(-1, f"non-finite parameter {name}")


def init_params(config: CRNNConfig) -> CRNNParams:
    """Deterministically initialized parameters under ``config.seed``.

    The residual head starts at zero, so an untrained model reproduces the
    zero-filled reconstruction (its refinement passes through hard DC only).
    """
    torch.manual_seed(config.seed)
    model = CRNNModel(config)
    model.eval()
    return CRNNParams(model, config)


def _dataset_tensors(dataset: list[tuple[KSpaceData, CineSequence]]):
    zfs, samples, masks, refs = [], [], [], []
    shape = dataset[0][0].samples.shape
    for k, ref in dataset:
        if k.samples.shape != shape or ref.data.shape != shape:
            raise ValueError("all dataset entries must share one (T,H,W) shape")
        zfs.append(torch.from_numpy(complex_to_channels(zero_filled_recon(k).data)))
        samples.append(torch.from_numpy(k.samples.astype(np.complex64)))
        masks.append(torch.from_numpy(k.mask.lines.copy()))
        refs.append(torch.from_numpy(complex_to_channels(ref.data)))
    return torch.stack(zfs), torch.stack(samples), torch.stack(masks), torch.stack(refs)


def crnn_forward(params: CRNNParams, k: KSpaceData) -> CineSequence:
    """Reconstruct one sequence; output is hard-DC consistent with ``k``."""
    zf = zero_filled_recon(k)
    with torch.no_grad():
        out = params.model(
            torch.from_numpy(complex_to_channels(zf.data))[None],
            torch.from_numpy(k.samples.astype(np.complex64))[None],
            torch.from_numpy(k.mask.lines.copy())[None],
        )
    data = (out[0, 0].numpy() + 1j * out[0, 1].numpy()).astype(np.complex64)
    return CineSequence(data, zf.pixel_spacing_mm, zf.frame_interval_ms)


def crnn_train(
    dataset: list[tuple[KSpaceData, CineSequence]],
    config: CRNNConfig,
) -> CRNNParams:
    """Train the reconstructor on (undersampled, reference) pairs.

    Minimizes MSE between the forward output and the reference (complex data
    as two real channels). Deterministic for a fixed seed in single-threaded
    mode. Records the per-epoch loss curve on the returned params.
    """
    if not dataset:
        raise ValueError("empty training set")
    config.validate()
    params = init_params(config)
    model = params.model
    model.train()
    zfs, samples, masks, refs = _dataset_tensors(dataset)
    n = len(dataset)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            out = model(zfs[idx], samples[idx], masks[idx])
            loss = torch.mean((out - refs[idx]) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
            step += 1
        params.loss_history.append(float(np.mean(epoch_losses)))
    model.eval()
    params.assert_finite()
    return params
