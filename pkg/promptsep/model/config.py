from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..core.dsp import MODEL_RATE_HZ, BandSplitSpec, StftConfig
from ..core.errors import ConfigError, SignalError


@dataclass(frozen=True)
class StackConfig:
    """
    One stack of time-frequency attention blocks.
    attn_hidden is the per-head width; projections map D -> num_heads * attn_hidden.
    temporal_kernel overrides conv_kernel on the sequence axis (1 = position-wise linear).
    """

    num_blocks: int
    ffn_hidden: int
    attn_hidden: int
    temporal_kernel: int | None = None


@dataclass(frozen=True)
class ModelConfig:
    cross: StackConfig
    tse: StackConfig
    embed_dim: int = 64
    conv_kernel: int = 4
    conv_stride: int = 1
    num_heads: int = 4
    norm_groups: int = 8
    band_spec: BandSplitSpec = field(default_factory=BandSplitSpec.default)
    stft: StftConfig = field(default_factory=StftConfig)
    sample_rate_hz: int = MODEL_RATE_HZ
    positional_encoding: bool = True
    decoder_expansion: int = 4
    num_fixed_outputs: int = 4

    def __post_init__(self):
        problems = []
        for name in ("embed_dim", "conv_kernel", "conv_stride", "num_heads", "norm_groups",
                     "sample_rate_hz", "decoder_expansion", "num_fixed_outputs"):
            if getattr(self, name) <= 0:
                problems.append(f"model.{name} must be positive, got {getattr(self, name)}")
        for stack_name in ("cross", "tse"):
            stack = getattr(self, stack_name)
            for name in ("num_blocks", "ffn_hidden", "attn_hidden"):
                if getattr(stack, name) <= 0:
                    problems.append(f"model.{stack_name}.{name} must be positive")
            if stack.temporal_kernel is not None and stack.temporal_kernel <= 0:
                problems.append(f"model.{stack_name}.temporal_kernel must be positive")
            if self.positional_encoding and stack.attn_hidden % 2:
                problems.append(
                    f"model.{stack_name}.attn_hidden must be even for rotary encoding"
                )
        if self.num_heads > 0 and self.embed_dim % self.num_heads:
            problems.append(
                f"model.embed_dim ({self.embed_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.norm_groups > 0 and self.embed_dim % self.norm_groups:
            problems.append(
                f"model.embed_dim ({self.embed_dim}) must be divisible by norm_groups ({self.norm_groups})"
            )
        try:
            self.band_spec.check(self.stft.num_bins)
        except SignalError as e:
            problems.append(f"model.band_spec: {e}")
        if problems:
            raise ConfigError(problems)

    @property
    def blocks_cross(self) -> int:
        return self.cross.num_blocks

    @property
    def blocks_tse(self) -> int:
        return self.tse.num_blocks

    @property
    def num_bands(self) -> int:
        return self.band_spec.num_bands

    def temporal_kernel(self, stack: StackConfig) -> int:
        return self.conv_kernel if stack.temporal_kernel is None else stack.temporal_kernel

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        try:
            base = PRESETS[name]
        except KeyError:
            raise ConfigError(
                f"unknown model preset '{name}' (known: {', '.join(PRESETS)})"
            ) from None
        return replace(base, **overrides) if overrides else base

    def to_dict(self) -> dict:
        data = asdict(self)
        data["band_spec"] = list(self.band_spec.band_widths)
        data["stft"] = self.stft.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        """
        Inverse of to_dict. Also accepts a `preset` key whose values are
        overridden by the remaining keys, and band_widths given as a YAML path.
        """
        data = dict(data)
        preset = data.pop("preset", None)
        base = cls.preset(preset).to_dict() if preset is not None else {}
        for key in ("cross", "tse", "stft"):
            if key in data and key in base:
                data[key] = {**base[key], **data[key]}
        merged = {**base, **data}

        widths = merged.pop("band_widths", None)
        if widths is None:
            widths = merged.pop("band_spec", None)
        else:
            merged.pop("band_spec", None)
        if isinstance(widths, (str, Path)):
            band_spec = BandSplitSpec.load(widths)
        elif widths is not None:
            band_spec = BandSplitSpec(tuple(widths))
        else:
            band_spec = BandSplitSpec.default()

        known = {f for f in cls.__dataclass_fields__} - {"cross", "tse", "stft", "band_spec"}
        unknown = set(merged) - known - {"cross", "tse", "stft"}
        if unknown:
            raise ConfigError([f"model.{key} is not a known field" for key in sorted(unknown)])
        try:
            return cls(
                cross=StackConfig(**merged.pop("cross")),
                tse=StackConfig(**merged.pop("tse")),
                stft=StftConfig.from_dict(merged.pop("stft", {})),
                band_spec=band_spec,
                **merged,
            )
        except (TypeError, KeyError, SignalError) as e:
            raise ConfigError(f"model section: {e}") from e


# band table for 512-point FFT (257 bins) used by the small preset
SMALL_BAND_WIDTHS = (8, 8, 16, 16, 32, 48, 64, 65)

PRESETS: dict[str, ModelConfig] = {
    "medium": ModelConfig(
        cross=StackConfig(num_blocks=4, ffn_hidden=384, attn_hidden=256, temporal_kernel=1),
        tse=StackConfig(num_blocks=2, ffn_hidden=384, attn_hidden=96),
        embed_dim=64,
        num_heads=4,
        norm_groups=8,
    ),
    "large": ModelConfig(
        cross=StackConfig(num_blocks=6, ffn_hidden=384, attn_hidden=256, temporal_kernel=1),
        tse=StackConfig(num_blocks=3, ffn_hidden=256, attn_hidden=192),
        embed_dim=128,
        num_heads=8,
        norm_groups=8,
    ),
    "small": ModelConfig(
        cross=StackConfig(num_blocks=2, ffn_hidden=96, attn_hidden=16, temporal_kernel=1),
        tse=StackConfig(num_blocks=1, ffn_hidden=96, attn_hidden=16),
        embed_dim=32,
        num_heads=4,
        norm_groups=4,
        band_spec=BandSplitSpec(SMALL_BAND_WIDTHS),
        stft=StftConfig(window_length=512, hop_length=128, fft_length=512),
        sample_rate_hz=16000,
    ),
    "micro": ModelConfig(
        cross=StackConfig(num_blocks=1, ffn_hidden=12, attn_hidden=4, temporal_kernel=1),
        tse=StackConfig(num_blocks=1, ffn_hidden=12, attn_hidden=4),
        embed_dim=8,
        conv_kernel=3,
        num_heads=2,
        norm_groups=2,
        band_spec=BandSplitSpec((4, 5)),
        stft=StftConfig(window_length=16, hop_length=4, fft_length=16),
        sample_rate_hz=8000,
    ),
}
