"""Spatiotemporal U-Net noise predictor.

2D U-Net backbone over frames, with each resolution level augmented by a 3D
spatiotemporal convolution and a temporal self-attention layer (attention
runs along the frame axis independently at every spatial location).
Diffusion step indices enter through a sinusoidal embedding added to channel
activations. Downsampling is spatial only; the frame count is preserved.

Internally activations are carried frames-major, (B,T,C,H,W), so every
per-frame 2D operation is a free reshape instead of a copy; only the
temporal conv and attention layers permute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .nn_blocks import TemporalConv

__all__ = ["STUNetConfig", "STUNet", "TemporalAttention", "stunet_forward", "temporal_attention"]

_GN_GROUPS = 4


@dataclass(frozen=True)
class STUNetConfig:
    base_channels: int = 16
    depth: int = 2
    temporal_kernel: int = 3
    attention_heads: int = 2
    time_embedding_dim: int = 64
    max_frames: int = 64
    input_channels: int = 6  # 2 noisy-image channels + 4 condition channels
    output_channels: int = 2

    def validate(self) -> None:
        if self.base_channels < _GN_GROUPS or self.base_channels % _GN_GROUPS:
            raise ValueError(f"base_channels must be a positive multiple of {_GN_GROUPS}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be odd")
        if self.attention_heads < 1 or self.base_channels % self.attention_heads:
            raise ValueError("attention_heads must divide base_channels")
        if self.time_embedding_dim < 2 or self.time_embedding_dim % 2:
            raise ValueError("time_embedding_dim must be even and >= 2")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")

    def channels_at(self, level: int) -> int:
        return self.base_channels * (2**level)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Classic sin/cos embedding of integer step indices, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / max(half - 1, 1)
    )
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class TemporalAttention(nn.Module):
    """Multi-head self-attention along the frame axis at each (h, w) location.

    Learned temporal position embeddings are added to the tokens before the
    QKV projections; setting ``use_position_embedding = False`` removes them,
    which makes the layer exactly equivariant to frame permutations.
    """

    def __init__(self, channels: int, heads: int, max_frames: int):
        super().__init__()
        if channels % heads:
            raise ValueError(f"{heads} heads do not divide {channels} channels")
        self.channels = channels
        self.heads = heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)
        self.position = nn.Parameter(0.02 * torch.randn(max_frames, channels))
        self.use_position_embedding = True

    def _attend(self, tokens: torch.Tensor, return_weights: bool):
        # tokens: (N, T, C); residual around the attended value projection
        n, t, c = tokens.shape
        attended = tokens
        if self.use_position_embedding:
            if t > self.position.shape[0]:
                raise ValueError(f"{t} frames exceed max_frames={self.position.shape[0]}")
            attended = attended + self.position[:t].to(tokens.dtype)
        q, k, v = self.qkv(attended).chunk(3, dim=-1)
        dh = c // self.heads

        def split(z):  # (N,T,C) -> (N,heads,T,dh)
            return z.reshape(n, t, self.heads, dh).permute(0, 2, 1, 3)

        q, k, v = split(q), split(k), split(v)
        weights = None
        if return_weights:
            weights = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
            y = weights @ v
        else:
            y = F.scaled_dot_product_attention(q, k, v)
        y = y.permute(0, 2, 1, 3).reshape(n, t, c)
        return tokens + self.proj(y), weights

    def forward(self, x: torch.Tensor, return_weights: bool = False):
        # x: (B,C,T,H,W)
        b, c, t, h, w = x.shape
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        tokens = x.permute(0, 3, 4, 2, 1).reshape(b * h * w, t, c)
        out, weights = self._attend(tokens, return_weights)
        out = out.reshape(b, h, w, t, c).permute(0, 4, 3, 1, 2)
        if return_weights:
            return out, weights
        return out

    def forward_tm(self, x: torch.Tensor) -> torch.Tensor:
        # frames-major fast path: x is (B,T,C,H,W)
        b, t, c, h, w = x.shape
        tokens = x.permute(0, 3, 4, 1, 2).reshape(b * h * w, t, c)
        out, _ = self._attend(tokens, False)
        return out.reshape(b, h, w, t, c).permute(0, 3, 4, 1, 2).contiguous()


class _SpatialResBlock(nn.Module):
    """Two per-frame 3x3 convolutions with step-embedding injection.

    Operates on the folded (B*T, C, H, W) view.
    """

    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_GN_GROUPS, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, c_out)
        self.norm2 = nn.GroupNorm(_GN_GROUPS, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, flat: torch.Tensor, temb_rep: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(flat)))
        h = h + self.temb_proj(temb_rep)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(flat) + h


class _TemporalConvBlock(nn.Module):
    """Residual spatiotemporal convolution mixing neighbouring frames."""

    def __init__(self, channels: int, temporal_kernel: int):
        super().__init__()
        self.norm = nn.GroupNorm(_GN_GROUPS, channels)
        self.conv = TemporalConv(channels, channels, temporal_kernel, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B,T,C,H,W); normalization runs per frame on the folded view
        b, t, c, h, w = x.shape
        a = F.silu(self.norm(x.reshape(b * t, c, h, w))).reshape(b, t, c, h, w)
        return x + self.conv(a)


class _LevelBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, cfg: STUNetConfig):
        super().__init__()
        self.spatial = _SpatialResBlock(c_in, c_out, cfg.time_embedding_dim)
        self.temporal = _TemporalConvBlock(c_out, cfg.temporal_kernel)
        self.attention = TemporalAttention(c_out, cfg.attention_heads, cfg.max_frames)

    def forward(self, x: torch.Tensor, temb_rep: torch.Tensor) -> torch.Tensor:
        # x: (B,T,C,H,W) contiguous
        b, t, c, h, w = x.shape
        flat = self.spatial(x.reshape(b * t, c, h, w), temb_rep)
        x = flat.reshape(b, t, -1, h, w)
        x = self.temporal(x)
        return self.attention.forward_tm(x)


class STUNet(nn.Module):
    """epsilon predictor: forward(x_t (B,2,T,H,W), t (B,), cond (B,4,T,H,W))."""

    def __init__(self, cfg: STUNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        ted = cfg.time_embedding_dim
        self.temb_mlp = nn.Sequential(nn.Linear(ted, ted), nn.SiLU(), nn.Linear(ted, ted))
        self.stem = nn.Conv2d(cfg.input_channels, cfg.channels_at(0), 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_convs = nn.ModuleList()
        for i in range(cfg.depth):
            self.down_blocks.append(_LevelBlock(cfg.channels_at(i), cfg.channels_at(i), cfg))
            self.down_convs.append(
                nn.Conv2d(cfg.channels_at(i), cfg.channels_at(i + 1), 3, stride=2, padding=1)
            )
        self.mid = _LevelBlock(cfg.channels_at(cfg.depth), cfg.channels_at(cfg.depth), cfg)
        self.up_convs = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for i in reversed(range(cfg.depth)):
            self.up_convs.append(
                nn.Conv2d(cfg.channels_at(i + 1), cfg.channels_at(i), 3, padding=1)
            )
            self.up_blocks.append(_LevelBlock(2 * cfg.channels_at(i), cfg.channels_at(i), cfg))

        self.head_norm = nn.GroupNorm(_GN_GROUPS, cfg.channels_at(0))
        self.head = nn.Conv2d(cfg.channels_at(0), cfg.output_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def set_position_embeddings(self, enabled: bool) -> None:
        for m in self.modules():
            if isinstance(m, TemporalAttention):
                m.use_position_embedding = enabled

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if x_t.ndim != 5 or x_t.shape[1] != cfg.output_channels:
            raise ValueError(f"x_t must be (B,{cfg.output_channels},T,H,W), got {tuple(x_t.shape)}")
        if cond.shape[1] != cfg.input_channels - cfg.output_channels or cond.shape[2:] != x_t.shape[2:]:
            raise ValueError("condition shape does not match the noisy image")
        h_, w_ = x_t.shape[-2:]
        factor = 2**cfg.depth
        if h_ % factor or w_ % factor:
            raise ValueError(f"H and W must be divisible by {factor}, got ({h_},{w_})")

        b, _, nt, _, _ = x_t.shape
        temb = self.temb_mlp(sinusoidal_embedding(t, cfg.time_embedding_dim).to(x_t.dtype))
        temb_rep = F.silu(temb).repeat_interleave(nt, dim=0)  # one row per folded frame
        # to frames-major: (B,T,C,H,W)
        h = torch.cat([x_t, cond], dim=1).permute(0, 2, 1, 3, 4).contiguous()

        def fold(z):
            bb, tt, cc, hh, ww = z.shape
            return z.reshape(bb * tt, cc, hh, ww)

        def unfold(z):
            return z.reshape(b, nt, *z.shape[1:])

        h = unfold(self.stem(fold(h)))
        skips = []
        for block, down in zip(self.down_blocks, self.down_convs):
            h = block(h, temb_rep)
            skips.append(h)
            h = unfold(down(fold(h)))
        h = self.mid(h, temb_rep)
        for upconv, block in zip(self.up_convs, self.up_blocks):
            h = unfold(upconv(F.interpolate(fold(h), scale_factor=2, mode="nearest")))
            h = block(torch.cat([h, skips.pop()], dim=2), temb_rep)

        out = self.head(F.silu(self.head_norm(fold(h))))
        return unfold(out).permute(0, 2, 1, 3, 4)


def stunet_forward(model: STUNet, x_t: np.ndarray, t: int, cond) -> np.ndarray:
    """Numpy wrapper: predict noise for one (2,T,H,W) image."""
    channels = getattr(cond, "channels", cond)
    xt = torch.from_numpy(np.ascontiguousarray(x_t))
    with torch.no_grad():
        out = model(
            xt[None],
            torch.tensor([t], dtype=torch.long),
            torch.from_numpy(np.ascontiguousarray(channels))[None].to(xt.dtype),
        )
    return out[0].numpy()


def temporal_attention(features: np.ndarray, module: TemporalAttention) -> np.ndarray:
    """Numpy wrapper: apply one attention layer to a (C,T,H,W) feature map."""
    with torch.no_grad():
        out = module(
            torch.from_numpy(np.ascontiguousarray(features))[None].to(next(module.parameters()).dtype)
        )
    return out[0].numpy()
