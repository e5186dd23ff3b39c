"""
Signal-to-noise losses and metrics.

Tensor functions reduce over the last axis and broadcast over the rest, so a
(N, 1, L) reference against (1, N, L) estimates yields an N x N matrix.
The AudioBuffer wrappers return plain floats in dB.
"""

import torch

from ..core.audio import AudioBuffer
from ..core.errors import SignalError

EPS = 1e-8
# mean power below which a reference counts as silent
SILENCE_POWER = 1e-10
TAU_ACTIVE = 1e-3
TAU_INACTIVE = 1e-2

METRIC_CONVENTIONS = {"snr": "snr", "si-snr": "si-snr", "mss-default": "snr"}


def _energy(x: torch.Tensor) -> torch.Tensor:
    return x.pow(2).sum(-1)


def _check_lengths(reference: torch.Tensor, estimate: torch.Tensor):
    if reference.shape[-1] != estimate.shape[-1]:
        raise SignalError(
            f"length mismatch: reference has {reference.shape[-1]} samples, "
            f"estimate has {estimate.shape[-1]}"
        )


def snr(reference: torch.Tensor, estimate: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    _check_lengths(reference, estimate)
    signal = _energy(reference)
    if bool((signal == 0).any()):
        raise SignalError("reference is all zeros; use zero_aware_snr_loss for silent references")
    return 10 * torch.log10((signal + eps) / (_energy(reference - estimate) + eps))


def si_snr(reference: torch.Tensor, estimate: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    _check_lengths(reference, estimate)
    reference = reference - reference.mean(-1, keepdim=True)
    estimate = estimate - estimate.mean(-1, keepdim=True)
    signal = _energy(reference)
    if bool((signal == 0).any()):
        raise SignalError("zero reference after mean removal")
    if bool((_energy(estimate) == 0).any()):
        raise SignalError("zero estimate after mean removal")
    scale = (estimate * reference).sum(-1, keepdim=True) / signal.unsqueeze(-1)
    target = scale * reference
    return 10 * torch.log10((_energy(target) + eps) / (_energy(estimate - target) + eps))


def neg_snr_loss(reference: torch.Tensor, estimate: torch.Tensor) -> torch.Tensor:
    return -snr(reference, estimate)


def zero_aware_snr_loss(
    reference: torch.Tensor,
    estimate: torch.Tensor,
    mixture: torch.Tensor,
    tau_active: float = TAU_ACTIVE,
    tau_inactive: float = TAU_INACTIVE,
) -> torch.Tensor:
    """
    Soft-thresholded SNR loss that accepts silent references.
    Active reference:  10log10(|s - est|^2 + tau_a |s|^2) - 10log10(|s|^2)
    Silent reference:  10log10(|est|^2 + tau_i |x|^2) - 10log10(|x|^2), x = mixture
    """
    _check_lengths(reference, estimate)
    _check_lengths(reference, mixture)
    reference, estimate, mixture = torch.broadcast_tensors(reference, estimate, mixture)
    silent = reference.pow(2).mean(-1) < SILENCE_POWER
    signal = _energy(reference)
    mix = _energy(mixture)
    if bool((silent & (mix == 0)).any()):
        raise SignalError("zero mixture with a silent reference")

    # the unused branch gets a unit denominator so its gradient stays finite
    ones = torch.ones_like(signal)
    signal_safe = torch.where(silent, ones, signal)
    mix_safe = torch.where(silent, mix, ones)
    active = 10 * torch.log10(_energy(reference - estimate) + tau_active * signal_safe) - 10 * torch.log10(signal_safe)
    inactive = 10 * torch.log10(_energy(estimate) + tau_inactive * mix_safe) - 10 * torch.log10(mix_safe)
    return torch.where(silent, inactive, active)


def _pair(reference: AudioBuffer, estimate: AudioBuffer) -> tuple[torch.Tensor, torch.Tensor]:
    if len(reference) != len(estimate):
        raise SignalError(
            f"length mismatch: reference has {len(reference)} samples, estimate has {len(estimate)}"
        )
    return reference.to_tensor(torch.float64), estimate.to_tensor(torch.float64)


def snr_db(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    return float(snr(*_pair(reference, estimate)))


def si_snr_db(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    return float(si_snr(*_pair(reference, estimate)))


def resolve_convention(convention: str) -> str:
    try:
        return METRIC_CONVENTIONS[convention]
    except KeyError:
        raise ValueError(
            f"unknown metric convention '{convention}' "
            f"(known: {', '.join(METRIC_CONVENTIONS)})"
        ) from None


def evaluate_pair(reference: AudioBuffer, estimate: AudioBuffer, convention: str) -> float:
    match resolve_convention(convention):
        case "snr":
            return snr_db(reference, estimate)
        case _:
            return si_snr_db(reference, estimate)
