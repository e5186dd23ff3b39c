import torch
from einops import rearrange
from torch import nn

from ..core.audio import AudioBuffer
from ..core.dsp import istft_tensor, resample, stft_tensor
from ..core.errors import SignalError
from .config import ModelConfig
from .decoder import BandMaskDecoder
from .encoder import BandSplitEncoder
from .locoformer import LocoformerStack


class FixedOutputSeparator(nn.Module):
    """
    Prompt-free comparison model: the same encoder and blocks, followed by
    a fixed number of decoder heads. Unused heads are trained toward silence.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = BandSplitEncoder(config)
        self.cross = LocoformerStack(config, config.cross, "cross")
        self.tse = LocoformerStack(config, config.tse, "tse")
        self.heads = nn.ModuleList(BandMaskDecoder(config) for _ in range(config.num_fixed_outputs))

    @property
    def num_outputs(self) -> int:
        return len(self.heads)

    def set_finite_checks(self, enabled: bool):
        self.cross.set_finite_checks(enabled)
        self.tse.set_finite_checks(enabled)

    def forward(self, mixture: torch.Tensor, prompts=None) -> torch.Tensor:
        """(B, L) -> (B, num_outputs, L). prompts is accepted and ignored."""
        if mixture.dim() != 2:
            raise SignalError(f"mixture must be (batch, samples), got shape {tuple(mixture.shape)}")
        length = mixture.shape[-1]
        if length == 0:
            raise SignalError("empty signal")
        spec = stft_tensor(mixture, self.config.stft)
        features = self.tse(self.cross(self.encoder(spec)))
        estimates = torch.stack([head(features, spec) for head in self.heads], dim=1)
        waves = istft_tensor(
            rearrange(estimates, "b n c t f -> (b n) c t f"), self.config.stft, length
        )
        return rearrange(waves, "(b n) l -> b n l", b=mixture.shape[0])

    @torch.no_grad()
    def separate(self, mixture: AudioBuffer, prompts=None) -> list[AudioBuffer]:
        if len(mixture) == 0:
            raise SignalError("empty signal")
        audio = resample(mixture, self.config.sample_rate_hz)
        reference = next(self.parameters())
        wave = audio.to_tensor(reference.dtype).to(reference.device).unsqueeze(0)
        return [
            resample(AudioBuffer.from_tensor(est, self.config.sample_rate_hz), mixture.sample_rate_hz)
            .fit_length(len(mixture))
            for est in self(wave)[0]
        ]


def head_labels(count: int) -> list[str]:
    return [f"head{i}" for i in range(count)]
