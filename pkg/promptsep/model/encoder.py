import torch
from einops import rearrange
from torch import nn

from ..core.errors import SignalError
from ..core.grid import FeatureGrid
from .config import ModelConfig


class BandSplitEncoder(nn.Module):
    """
    Split a (B, 2, T, F) spectrogram into K bands and project each band's
    real/imag bins to D channels: RMS normalization then a linear map.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.band_widths = list(config.band_spec.band_widths)
        self.norms = nn.ModuleList(nn.RMSNorm(2 * width, eps=1e-8) for width in self.band_widths)
        self.projections = nn.ModuleList(
            nn.Linear(2 * width, config.embed_dim) for width in self.band_widths
        )

    def forward(self, spec: torch.Tensor) -> FeatureGrid:
        if spec.dim() != 4 or spec.shape[1] != 2:
            raise SignalError(
                f"spectrogram must be (batch, 2, frames, bins), got shape {tuple(spec.shape)}"
            )
        if spec.shape[-1] != sum(self.band_widths):
            raise SignalError(
                f"band widths must sum to F (sum is {sum(self.band_widths)}, F is {spec.shape[-1]})"
            )
        bands = torch.split(spec, self.band_widths, dim=-1)
        features = [
            projection(norm(rearrange(band, "b c t f -> b t (c f)")))
            for band, norm, projection in zip(bands, self.norms, self.projections)
        ]
        return torch.stack(features, dim=2)
