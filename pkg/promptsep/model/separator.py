"""
Prompt-conditioned separator.

mixture -> STFT -> band-split encoder -> [prompts ; frames] -> cross-prompt
stack -> per-prompt conditioning -> conditional extraction stack -> band
mask decoder -> iSTFT -> one waveform per prompt.
"""

import logging
from collections.abc import Iterable

import torch
from einops import rearrange, repeat
from torch import nn

from ..core.audio import AudioBuffer
from ..core.dsp import istft_tensor, resample, stft_tensor
from ..core.errors import SignalError
from ..core.grid import FeatureGrid, assemble_prompt_sequence, split_prompt_sequence
from ..core.types import PromptCategory, PromptSet
from .config import ModelConfig
from .decoder import BandMaskDecoder
from .encoder import BandSplitEncoder
from .locoformer import LocoformerStack
from .prompts import PromptTable

logger = logging.getLogger(__name__)

type PromptsLike = PromptSet | str | Iterable[PromptCategory | str]


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


class ConditionalExtractor(nn.Module):
    """Conditions the mixture rows on each prompt row and refines them independently"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.stack = LocoformerStack(config, config.tse, "tse")

    @staticmethod
    def condition(processed: FeatureGrid, num_prompts: int) -> torch.Tensor:
        """(B, N+T, K, D) -> (B, N, T, K, D): mixture rows times each prompt row, per band"""
        prompt_rows, mixture_rows = split_prompt_sequence(processed, num_prompts)
        return mixture_rows.unsqueeze(1) * prompt_rows.unsqueeze(2)

    def forward(self, processed: FeatureGrid, num_prompts: int) -> torch.Tensor:
        conditioned = self.condition(processed, num_prompts)
        batch = conditioned.shape[0]
        flat = self.stack(rearrange(conditioned, "b n t k d -> (b n) t k d"))
        return rearrange(flat, "(b n) t k d -> b n t k d", b=batch)


class PromptSeparator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = BandSplitEncoder(config)
        self.prompts = PromptTable(config.embed_dim)
        self.cross = LocoformerStack(config, config.cross, "cross")
        self.extractor = ConditionalExtractor(config)
        self.decoder = BandMaskDecoder(config)

    def set_finite_checks(self, enabled: bool):
        self.cross.set_finite_checks(enabled)
        self.extractor.stack.set_finite_checks(enabled)

    def forward(self, mixture: torch.Tensor, prompts: PromptsLike) -> torch.Tensor:
        """
        (B, L) mixture at the model rate -> (B, N, L) estimates, one per prompt
        in prompt order.
        """
        prompts = PromptSet.coerce(prompts)
        if mixture.dim() != 2:
            raise SignalError(f"mixture must be (batch, samples), got shape {tuple(mixture.shape)}")
        length = mixture.shape[-1]
        if length == 0:
            raise SignalError("empty signal")

        spec = stft_tensor(mixture, self.config.stft)
        features = self.encoder(spec)
        processed = self.cross(assemble_prompt_sequence(self.prompts(prompts), features))
        extracted = self.extractor(processed, len(prompts))

        batch, count = extracted.shape[:2]
        estimates = self.decoder(
            rearrange(extracted, "b n t k d -> (b n) t k d"),
            repeat(spec, "b c t f -> (b n) c t f", n=count),
        )
        waves = istft_tensor(estimates, self.config.stft, length)
        return rearrange(waves, "(b n) l -> b n l", b=batch)

    @torch.no_grad()
    def separate(self, mixture: AudioBuffer, prompts: PromptsLike) -> list[AudioBuffer]:
        """
        Separate a mono recording at any rate. Outputs come back at the input
        rate with the input length, one per prompt.
        """
        prompts = PromptSet.coerce(prompts)
        if len(mixture) == 0:
            raise SignalError("empty signal")
        native_rate = mixture.sample_rate_hz
        if native_rate != self.config.sample_rate_hz:
            logger.debug("resampling mixture %d -> %d Hz", native_rate, self.config.sample_rate_hz)
        audio = resample(mixture, self.config.sample_rate_hz)

        reference = next(self.parameters())
        wave = audio.to_tensor(reference.dtype).to(reference.device).unsqueeze(0)
        estimates = self(wave, prompts)[0]
        return [
            resample(AudioBuffer.from_tensor(est, self.config.sample_rate_hz), native_rate)
            .fit_length(len(mixture))
            for est in estimates
        ]
