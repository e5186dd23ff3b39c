"""
Time-frequency attention blocks.

Each block runs a frequency sub-block (attention across bands, one sequence
per frame) followed by a temporal sub-block (attention across frames, one
sequence per band). A sub-block is macaron shaped: half-step convolutional
SwiGLU, self-attention, half-step convolutional SwiGLU, each pre-normalized
and residual.
"""

import math

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from ..core.grid import (
    FeatureGrid,
    check_grid,
    fold_bands,
    fold_sequence,
    require_finite,
    unfold_bands,
    unfold_sequence,
)
from .config import ModelConfig, StackConfig


def rotate_half(x: torch.Tensor) -> torch.Tensor:
    x1, x2 = x[..., : x.shape[-1] // 2], x[..., x.shape[-1] // 2 :]
    return torch.cat([-x2, x1], dim=-1)


class RotaryEmbedding(nn.Module):
    """Rotary position encoding applied to queries and keys shaped (N, H, S, E)"""

    def __init__(self, head_dim: int, base: float = 10000.0):
        super().__init__()
        inv_freq = 1.0 / (base ** (torch.arange(0, head_dim, 2).double() / head_dim))
        self.register_buffer("inv_freq", inv_freq, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(x.shape[-2], device=x.device, dtype=self.inv_freq.dtype)
        freqs = torch.einsum("s,e->se", positions, self.inv_freq)
        emb = torch.cat([freqs, freqs], dim=-1).to(x.dtype)
        return x * emb.cos() + rotate_half(x) * emb.sin()


class RMSGroupNorm(nn.Module):
    """RMS normalization over channel groups, with per-channel scale and shift"""

    def __init__(self, num_groups: int, dim: int, eps: float = 1e-8):
        super().__init__()
        if dim % num_groups:
            raise ValueError(f"dim ({dim}) must be divisible by num_groups ({num_groups})")
        self.num_groups = num_groups
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        grouped = rearrange(x, "... (g c) -> ... g c", g=self.num_groups)
        grouped = grouped * torch.rsqrt(grouped.pow(2).mean(-1, keepdim=True) + self.eps)
        return rearrange(grouped, "... g c -> ... (g c)") * self.weight + self.bias


class ConvSwiGLU(nn.Module):
    """
    Convolutional SwiGLU feed-forward: strided conv to 2C channels, SiLU gate,
    transposed conv back to D. Output length equals input length.
    """

    def __init__(self, dim: int, hidden: int, kernel: int, stride: int):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.conv = nn.Conv1d(dim, 2 * hidden, kernel, stride=stride)
        self.deconv = nn.ConvTranspose1d(hidden, dim, kernel, stride=stride)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        length = x.shape[1]
        x = rearrange(x, "n l d -> n d l")
        padded = math.ceil((length + self.kernel) / self.stride) * self.stride + self.kernel
        x = F.pad(x, (self.kernel, padded - length - self.kernel))
        value, gate = self.conv(x).chunk(2, dim=1)
        x = self.deconv(value * F.silu(gate))
        return rearrange(x[..., self.kernel : self.kernel + length], "n d l -> n l d")


class SelfAttention(nn.Module):
    """Multi-head self-attention over (N, S, D) sequences"""

    def __init__(self, dim: int, num_heads: int, head_dim: int, rotary: bool):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = nn.Linear(dim, 3 * num_heads * head_dim, bias=False)
        self.out = nn.Linear(num_heads * head_dim, dim, bias=False)
        self.rope = RotaryEmbedding(head_dim) if rotary else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = rearrange(
            self.qkv(x), "n s (three h e) -> three n h s e", three=3, h=self.num_heads
        )
        if self.rope is not None:
            q, k = self.rope(q), self.rope(k)
        y = F.scaled_dot_product_attention(q, k, v)
        return self.out(rearrange(y, "n h s e -> n s (h e)"))


class MacaronSubBlock(nn.Module):
    def __init__(
        self,
        config: ModelConfig,
        stack: StackConfig,
        kernel: int,
        rotary: bool,
        name: str,
    ):
        super().__init__()
        dim, groups = config.embed_dim, config.norm_groups
        self.name = name
        self.check_finite = True
        self.ffn1_norm = RMSGroupNorm(groups, dim)
        self.ffn1 = ConvSwiGLU(dim, stack.ffn_hidden, kernel, config.conv_stride)
        self.attn_norm = RMSGroupNorm(groups, dim)
        self.attn = SelfAttention(dim, config.num_heads, stack.attn_hidden, rotary)
        self.ffn2_norm = RMSGroupNorm(groups, dim)
        self.ffn2 = ConvSwiGLU(dim, stack.ffn_hidden, kernel, config.conv_stride)

    def _checked(self, x: torch.Tensor, stage: str) -> torch.Tensor:
        if self.check_finite:
            require_finite(x, f"{self.name}.{stage}")
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self._checked(x + 0.5 * self.ffn1(self.ffn1_norm(x)), "ffn1")
        x = self._checked(x + self.attn(self.attn_norm(x)), "attention")
        return self._checked(x + 0.5 * self.ffn2(self.ffn2_norm(x)), "ffn2")


class LocoformerBlock(nn.Module):
    """Frequency sub-block then temporal sub-block on a (B, S, K, D) grid"""

    def __init__(self, config: ModelConfig, stack: StackConfig, name: str):
        super().__init__()
        self.frequency = MacaronSubBlock(
            config, stack, config.conv_kernel, rotary=False, name=f"{name}.frequency"
        )
        self.temporal = MacaronSubBlock(
            config,
            stack,
            config.temporal_kernel(stack),
            rotary=config.positional_encoding,
            name=f"{name}.temporal",
        )

    def forward(self, grid: FeatureGrid) -> FeatureGrid:
        batch = grid.shape[0]
        grid = unfold_bands(self.frequency(fold_bands(grid)), batch)
        return unfold_sequence(self.temporal(fold_sequence(grid)), batch)


class LocoformerStack(nn.Module):
    def __init__(self, config: ModelConfig, stack: StackConfig, name: str):
        super().__init__()
        self.embed_dim = config.embed_dim
        self.blocks = nn.ModuleList(
            LocoformerBlock(config, stack, f"{name}[{i}]") for i in range(stack.num_blocks)
        )

    def set_finite_checks(self, enabled: bool):
        for module in self.modules():
            if isinstance(module, MacaronSubBlock):
                module.check_finite = enabled

    def forward(self, grid: FeatureGrid) -> FeatureGrid:
        check_grid(grid, self.embed_dim)
        for block in self.blocks:
            grid = block(grid)
        return grid
