"""
Signal-processing kernels: STFT/iSTFT, band-limited resampling and band partitioning.

The tensor-level transforms (stft_tensor / istft_tensor) are what the model uses,
so they are differentiable and follow the dtype of their input. The AudioBuffer
level functions wrap them in float64 for the exact round-trip guarantees.
"""

from dataclasses import asdict, dataclass
from functools import lru_cache
from math import gcd, log2
from pathlib import Path

import numpy as np
import torch
import yaml
from einops import rearrange
from scipy import signal

from .audio import AudioBuffer
from .errors import SignalError

MODEL_RATE_HZ = 48000

WINDOW_KINDS = ("sqrt-hann", "hann", "hamming")

# windowed-sinc polyphase resampler
RESAMPLE_CUTOFF = 0.95
RESAMPLE_HALF_TAPS = 80
RESAMPLE_KAISER_BETA = 10.0

# 62 bands over 1025 bins: narrow at the bottom, widening toward Nyquist
REFERENCE_BAND_WIDTHS: tuple[int, ...] = (
    (2,) * 24 + (4,) * 12 + (12,) * 8 + (24,) * 8 + (48,) * 8 + (128, 129)
)


@dataclass(frozen=True)
class StftConfig:
    """
    STFT framing. Construction checks the size ordering only;
    the overlap-add condition is enforced whenever a transform runs.
    """

    window_length: int = 2048
    hop_length: int = 480
    fft_length: int = 2048
    window_kind: str = "sqrt-hann"

    def __post_init__(self):
        if not 0 < self.hop_length <= self.window_length <= self.fft_length:
            raise SignalError(
                "STFT sizes must satisfy 0 < hop_length <= window_length <= fft_length "
                f"(got hop={self.hop_length}, window={self.window_length}, "
                f"fft={self.fft_length})"
            )
        if self.window_kind not in WINDOW_KINDS:
            raise SignalError(
                f"Unknown window '{self.window_kind}'. Known windows: {', '.join(WINDOW_KINDS)}"
            )

    @classmethod
    def for_rate(cls, sample_rate_hz: int) -> "StftConfig":
        """Defaults scaled from the 48 kHz setting, window rounded to a power of two"""
        scale = sample_rate_hz / MODEL_RATE_HZ
        window = int(2 ** round(log2(2048 * scale)))
        hop = max(1, min(window, round(480 * scale)))
        return cls(window_length=window, hop_length=hop, fft_length=window)

    @classmethod
    def from_dict(cls, data: dict) -> "StftConfig":
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def num_bins(self) -> int:
        return self.fft_length // 2 + 1

    def window(self) -> np.ndarray:
        return _window(self.window_kind, self.window_length)

    def window_tensor(self, dtype: torch.dtype, device=None) -> torch.Tensor:
        return torch.tensor(self.window(), dtype=dtype, device=device)

    def satisfies_overlap_add(self) -> bool:
        return _check_nola(self.window_kind, self.window_length, self.hop_length)

    def require_overlap_add(self):
        if not self.satisfies_overlap_add():
            raise SignalError(
                f"window '{self.window_kind}' of length {self.window_length} with hop "
                f"{self.hop_length} violates the overlap-add condition; "
                "perfect reconstruction is impossible"
            )


@lru_cache(maxsize=16)
def _window(kind: str, length: int) -> np.ndarray:
    match kind:
        case "sqrt-hann":
            window = np.sqrt(np.clip(signal.get_window("hann", length), 0.0, None))
        case "hann":
            window = signal.get_window("hann", length)
        case "hamming":
            window = signal.get_window("hamming", length)
        case _:
            raise SignalError(f"Unknown window '{kind}'")
    window.setflags(write=False)
    return window


@lru_cache(maxsize=16)
def _check_nola(kind: str, length: int, hop: int) -> bool:
    return bool(signal.check_NOLA(_window(kind, length), length, length - hop))


@dataclass
class Spectrogram:
    """Complex T x F grid stored as real and imaginary planes"""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig
    sample_rate_hz: int

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.ndim != 2 or self.real.shape != self.imag.shape:
            raise SignalError(
                f"real and imaginary planes must share one T x F shape "
                f"(got {self.real.shape} and {self.imag.shape})"
            )
        if self.real.shape[1] != self.config.num_bins:
            raise SignalError(
                f"spectrogram has {self.real.shape[1]} bins but fft_length "
                f"{self.config.fft_length} implies {self.config.num_bins}"
            )
        if not (np.all(np.isfinite(self.real)) and np.all(np.isfinite(self.imag))):
            raise SignalError("non-finite spectrogram")

    @classmethod
    def from_tensor(
        cls, tensor: torch.Tensor, config: StftConfig, sample_rate_hz: int
    ) -> "Spectrogram":
        """From a (2, T, F) real/imag tensor"""
        values = tensor.detach().cpu().double().numpy()
        return cls(values[0], values[1], config, sample_rate_hz)

    @property
    def num_frames(self) -> int:
        return self.real.shape[0]

    @property
    def num_bins(self) -> int:
        return self.real.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.real.shape

    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    def stacked(self) -> np.ndarray:
        """T x F x 2 array, real then imaginary on the last axis"""
        return np.stack([self.real, self.imag], axis=-1)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(np.stack([self.real, self.imag])).to(dtype)


def stft_tensor(wave: torch.Tensor, config: StftConfig) -> torch.Tensor:
    """(..., L) waveform -> (..., 2, T, F) real/imag spectrogram, centered zero padding"""
    lead = wave.shape[:-1]
    flat = wave.reshape(-1, wave.shape[-1])
    spec = torch.stft(
        flat,
        n_fft=config.fft_length,
        hop_length=config.hop_length,
        win_length=config.window_length,
        window=config.window_tensor(flat.dtype, flat.device),
        center=True,
        pad_mode="constant",
        return_complex=True,
    )
    spec = rearrange(torch.view_as_real(spec), "b f t c -> b c t f")
    return spec.reshape(*lead, *spec.shape[1:])


def istft_tensor(spec: torch.Tensor, config: StftConfig, length: int) -> torch.Tensor:
    """(..., 2, T, F) spectrogram -> (..., length) waveform"""
    lead = spec.shape[:-3]
    flat = spec.reshape(-1, *spec.shape[-3:])
    complex_spec = torch.complex(flat[:, 0], flat[:, 1]).transpose(-1, -2)
    wave = torch.istft(
        complex_spec,
        n_fft=config.fft_length,
        hop_length=config.hop_length,
        win_length=config.window_length,
        window=config.window_tensor(flat.dtype, flat.device),
        center=True,
        length=length,
    )
    return wave.reshape(*lead, length)


def num_frames(num_samples: int, config: StftConfig) -> int:
    return 1 + num_samples // config.hop_length


def stft(audio: AudioBuffer, config: StftConfig) -> Spectrogram:
    if len(audio) == 0:
        raise SignalError("empty signal")
    if not np.all(np.isfinite(audio.samples)):
        raise SignalError("non-finite input")
    config.require_overlap_add()
    spec = stft_tensor(audio.to_tensor(torch.float64), config)
    return Spectrogram.from_tensor(spec, config, audio.sample_rate_hz)


def istft(spec: Spectrogram, target_length: int) -> AudioBuffer:
    config = spec.config
    config.require_overlap_add()
    implied = config.hop_length * (spec.num_frames - 1)
    if abs(target_length - implied) > config.window_length:
        raise SignalError(
            f"target length {target_length} is more than one window away from the "
            f"{implied} samples implied by {spec.num_frames} frames"
        )
    wave = istft_tensor(spec.to_tensor(torch.float64), config, target_length)
    return AudioBuffer(wave.numpy(), spec.sample_rate_hz)


@lru_cache(maxsize=32)
def _polyphase_filter(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = RESAMPLE_HALF_TAPS * max_rate
    return signal.firwin(
        2 * half_len + 1,
        RESAMPLE_CUTOFF / max_rate,
        window=("kaiser", RESAMPLE_KAISER_BETA),
    )


def resample(audio: AudioBuffer, target_rate_hz: int) -> AudioBuffer:
    """
    Windowed-sinc polyphase resampling with the cutoff at 0.95 of the lower Nyquist.
    Output length is round(len * target / source); same-rate input is returned unchanged.
    """
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise SignalError(f"target sample rate must be positive, got {target_rate_hz}")
    source = audio.sample_rate_hz
    if target_rate_hz == source:
        return AudioBuffer(audio.samples.copy(), source)

    out_len = int(round(len(audio) * target_rate_hz / source))
    if len(audio) == 0:
        return AudioBuffer(np.zeros(0), target_rate_hz)
    g = gcd(target_rate_hz, source)
    up, down = target_rate_hz // g, source // g
    y = signal.resample_poly(audio.samples, up, down, window=_polyphase_filter(up, down))
    return AudioBuffer(y, target_rate_hz).fit_length(out_len)


@dataclass(frozen=True)
class BandSplitSpec:
    """Contiguous partition of the frequency axis into K bands"""

    band_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.band_widths)
        if not widths:
            raise SignalError("band split needs at least one band")
        if any(w < 1 for w in widths):
            raise SignalError(f"every band width must be >= 1, got {list(widths)}")
        object.__setattr__(self, "band_widths", widths)

    @classmethod
    def default(cls) -> "BandSplitSpec":
        return cls(REFERENCE_BAND_WIDTHS)

    @classmethod
    def scaled(
        cls, num_bins: int, reference: tuple[int, ...] = REFERENCE_BAND_WIDTHS
    ) -> "BandSplitSpec":
        """
        Scale a reference table to num_bins, keeping its band count and shape.
        Integerized by largest remainder; surplus is taken from the widest bands.
        """
        ref = np.asarray(reference, dtype=np.float64)
        if num_bins < len(ref):
            raise SignalError(
                f"cannot split {num_bins} bins into {len(ref)} bands of width >= 1"
            )
        target = ref * num_bins / ref.sum()
        widths = np.maximum(np.floor(target), 1).astype(np.int64)
        order = np.argsort(-(target - widths), kind="stable")
        i = 0
        while widths.sum() < num_bins:
            widths[order[i % len(order)]] += 1
            i += 1
        while widths.sum() > num_bins:
            # widest band, highest frequency first
            k = len(widths) - 1 - int(np.argmax(widths[::-1]))
            widths[k] -= 1
        return cls(tuple(int(w) for w in widths))

    @classmethod
    def uniform(cls, num_bins: int, num_bands: int) -> "BandSplitSpec":
        base, extra = divmod(num_bins, num_bands)
        return cls(tuple(base + (1 if k >= num_bands - extra else 0) for k in range(num_bands)))

    @classmethod
    def load(cls, path: str | Path) -> "BandSplitSpec":
        """Read a YAML list of band widths"""
        data = yaml.safe_load(Path(path).read_text())
        if isinstance(data, dict):
            data = data.get("band_widths")
        if not isinstance(data, list):
            raise SignalError(f"{path}: expected a list of band widths")
        return cls(tuple(data))

    @property
    def num_bands(self) -> int:
        return len(self.band_widths)

    @property
    def num_bins(self) -> int:
        return sum(self.band_widths)

    @property
    def offsets(self) -> list[int]:
        """Start bin of every band"""
        return np.concatenate([[0], np.cumsum(self.band_widths)[:-1]]).tolist()

    def check(self, num_bins: int):
        if self.num_bins != num_bins:
            raise SignalError(
                f"band widths must sum to F (sum is {self.num_bins}, F is {num_bins})"
            )


def band_partition(spec: Spectrogram, bands: BandSplitSpec) -> list[np.ndarray]:
    """Split into K arrays of shape T x b_k x 2 (real, imag)"""
    bands.check(spec.num_bins)
    return np.split(spec.stacked(), np.cumsum(bands.band_widths)[:-1], axis=1)
