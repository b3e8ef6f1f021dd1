"""Shared network building blocks."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = ["TemporalConv"]


class TemporalConv(nn.Module):
    """(kt, k, k) spatiotemporal convolution over frames-major (B,T,C,H,W) input.

    Mathematically identical to ``nn.Conv3d`` with zero padding
    ``(kt//2, k//2, k//2)``, but evaluated as one 2D convolution per temporal
    tap followed by temporally shifted accumulation. This keeps every
    convolution on torch's fast mkldnn 2D path (the CPU conv3d kernel falls
    back to a slow reference implementation at batch size 1) and never
    leaves the frames-major layout.
    """

    def __init__(self, c_in: int, c_out: int, temporal_kernel: int, spatial_kernel: int):
        super().__init__()
        if temporal_kernel < 1 or temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be odd")
        self.c_in = c_in
        self.c_out = c_out
        self.temporal_kernel = temporal_kernel
        self.spatial_kernel = spatial_kernel
        # Same parameter shape family as Conv2d(kt*c_in, c_out, k); tap j owns
        # the channel block [j*c_in, (j+1)*c_in).
        self.conv = nn.Conv2d(
            c_in * temporal_kernel, c_out, spatial_kernel, padding=spatial_kernel // 2
        )

    def zero_(self) -> None:
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, c, h, w = x.shape
        if c != self.c_in:
            raise ValueError(f"expected {self.c_in} channels, got {c}")
        kt = self.temporal_kernel
        half = kt // 2
        pad = self.spatial_kernel // 2
        if b > 1:
            # mkldnn conv3d is fast for batches >= 2
            w3d = self.conv.weight.reshape(self.c_out, kt, c, *self.conv.weight.shape[-2:]).transpose(1, 2)
            z = F.conv3d(x.transpose(1, 2), w3d, self.conv.bias, padding=(half, pad, pad))
            return z.transpose(1, 2)
        flat = x.reshape(b * t, c, h, w)
        out = None
        for j in range(kt):
            weight = self.conv.weight[:, j * c : (j + 1) * c]
            bias = self.conv.bias if j == half else None
            z = F.conv2d(flat, weight, bias, padding=pad).reshape(b, t, self.c_out, h, w)
            dt = j - half
            if out is None:
                out = x.new_zeros((b, t, self.c_out, h, w))
            t_lo, t_hi = max(0, -dt), min(t, t - dt)
            out[:, t_lo:t_hi] = out[:, t_lo:t_hi] + z[:, t_lo + dt : t_hi + dt]
        return out
