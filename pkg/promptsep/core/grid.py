"""
Feature grids: D-channel features laid out over (sequence position x band).

A grid is a tensor shaped (batch, sequence, bands, channels). When prompts are
attached, the first N sequence rows hold the prompts and the remaining T rows
hold the mixture frames.
"""

import torch
from einops import rearrange, repeat

from .errors import NonFiniteError, SignalError

type FeatureGrid = torch.Tensor


def check_grid(grid: FeatureGrid, channels: int | None = None):
    """Raise if grid is not (B, S, K, D), optionally with D == channels"""
    if grid.dim() != 4:
        raise SignalError(
            f"feature grid must be (batch, sequence, bands, channels), got shape {tuple(grid.shape)}"
        )
    if channels is not None and grid.shape[-1] != channels:
        raise SignalError(
            f"feature grid has {grid.shape[-1]} channels, expected {channels}"
        )


def require_finite(grid: torch.Tensor, stage: str):
    if not torch.isfinite(grid).all():
        raise NonFiniteError(stage)


def assemble_prompt_sequence(prompts: torch.Tensor, features: FeatureGrid) -> FeatureGrid:
    """
    Broadcast each prompt vector over every band and prepend the prompts
    to the mixture rows: (N, D) or (B, N, D) with (B, T, K, D) -> (B, N+T, K, D).
    """
    check_grid(features)
    batch, _, bands, channels = features.shape
    if prompts.dim() == 2:
        prompts = repeat(prompts, "n d -> b n d", b=batch)
    if prompts.shape[1] == 0:
        raise SignalError("cannot assemble a prompt sequence without prompts")
    if prompts.shape[-1] != channels:
        raise SignalError(
            f"prompt vectors have {prompts.shape[-1]} channels, features have {channels}"
        )
    rows = repeat(prompts, "b n d -> b n k d", k=bands)
    return torch.cat([rows, features], dim=1)


def split_prompt_sequence(
    grid: FeatureGrid, num_prompts: int
) -> tuple[FeatureGrid, FeatureGrid]:
    """Inverse of assemble_prompt_sequence: (prompt rows, mixture rows)"""
    check_grid(grid)
    if not 0 < num_prompts < grid.shape[1]:
        raise SignalError(
            f"cannot split {num_prompts} prompt rows from a sequence of length {grid.shape[1]}"
        )
    return grid[:, :num_prompts], grid[:, num_prompts:]


def fold_bands(grid: FeatureGrid) -> torch.Tensor:
    """Every sequence position becomes its own band sequence: (B*S, K, D)"""
    return rearrange(grid, "b s k d -> (b s) k d")


def unfold_bands(flat: torch.Tensor, batch: int) -> FeatureGrid:
    return rearrange(flat, "(b s) k d -> b s k d", b=batch)


def fold_sequence(grid: FeatureGrid) -> torch.Tensor:
    """Every band becomes its own sequence: (B*K, S, D)"""
    return rearrange(grid, "b s k d -> (b k) s d")


def unfold_sequence(flat: torch.Tensor, batch: int) -> FeatureGrid:
    return rearrange(flat, "(b k) s d -> b s k d", b=batch)
