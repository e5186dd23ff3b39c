import torch
from einops import rearrange
from torch import nn

from ..core.errors import SignalError
from ..core.grid import FeatureGrid, check_grid
from .config import ModelConfig

# Pre-activation of the GLU gate used by force_mask; sigmoid rounds to exactly 1
SATURATED_GATE = 100.0


class BandMaskDecoder(nn.Module):
    """
    Per-band MLP (D -> 4D, tanh, -> 4 b_k, GLU) producing a complex mask
    that multiplies the mixture spectrogram: estimate = mask * mixture.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        dim = config.embed_dim
        hidden = config.decoder_expansion * dim
        self.band_widths = list(config.band_spec.band_widths)
        self.mlps = nn.ModuleList(
            nn.Sequential(
                nn.Linear(dim, hidden),
                nn.Tanh(),
                nn.Linear(hidden, 2 * 2 * width),
                nn.GLU(dim=-1),
            )
            for width in self.band_widths
        )

    def masks(self, features: FeatureGrid) -> torch.Tensor:
        """(B, T, K, D) features -> (B, 2, T, F) real/imag mask"""
        check_grid(features)
        if features.shape[2] != len(self.band_widths):
            raise SignalError(
                f"features have {features.shape[2]} bands, decoder has {len(self.band_widths)}"
            )
        per_band = [
            rearrange(mlp(features[:, :, k]), "b t (c f) -> b c t f", c=2)
            for k, mlp in enumerate(self.mlps)
        ]
        return torch.cat(per_band, dim=-1)

    def forward(self, features: FeatureGrid, mixture_spec: torch.Tensor) -> torch.Tensor:
        mask = self.masks(features)
        if mask.shape != mixture_spec.shape:
            raise SignalError(
                f"mask shape {tuple(mask.shape)} does not match mixture spectrogram "
                f"{tuple(mixture_spec.shape)}"
            )
        mask_re, mask_im = mask[:, 0], mask[:, 1]
        mix_re, mix_im = mixture_spec[:, 0], mixture_spec[:, 1]
        return torch.stack(
            [mask_re * mix_re - mask_im * mix_im, mask_re * mix_im + mask_im * mix_re], dim=1
        )

    @torch.no_grad()
    def force_mask(self, real: float = 1.0, imag: float = 0.0):
        """Make every band emit the constant mask real + j*imag regardless of input"""
        for width, mlp in zip(self.band_widths, self.mlps):
            last = mlp[2]
            last.weight.zero_()
            last.bias[:width] = real
            last.bias[width : 2 * width] = imag
            last.bias[2 * width :] = SATURATED_GATE
