"""
Permutation-invariant losses.

Prompts of one category are interchangeable, so targets are matched to
estimates by an exhaustive search inside each category group. Groups hold at
most four positions, so the search visits at most 24 assignments.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import permutations

import torch

from ..core.audio import AudioBuffer
from ..core.errors import SignalError
from ..core.types import PromptSet
from .snr import TAU_ACTIVE, TAU_INACTIVE, neg_snr_loss, zero_aware_snr_loss

WEIGHTINGS = ("category", "source")

type PairLoss = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]
type Signals = torch.Tensor | Sequence[AudioBuffer] | Sequence[torch.Tensor]


def ordered_mean(values: Sequence[torch.Tensor]) -> torch.Tensor:
    """
    Mean of scalar tensors, summed in ascending order of value so the result
    does not depend on the order the values were produced in.
    """
    if not values:
        raise ValueError("mean of no values")
    ordered = sorted(values, key=lambda v: float(v))
    total = ordered[0]
    for value in ordered[1:]:
        total = total + value
    return total / len(ordered)


@dataclass(frozen=True)
class CategoryGrouping:
    """Category name -> positions holding that category (same positions for targets and estimates)"""

    groups: dict[str, tuple[int, ...]]

    @classmethod
    def from_prompts(cls, prompts: PromptSet) -> "CategoryGrouping":
        return cls({c.value: tuple(p) for c, p in prompts.positions().items()})

    @property
    def size(self) -> int:
        return sum(len(p) for p in self.groups.values())

    def validate(self, count: int):
        seen = sorted(i for positions in self.groups.values() for i in positions)
        if seen != list(range(count)):
            raise SignalError(
                f"category grouping must cover positions 0..{count - 1} exactly once, got {seen}"
            )


@dataclass
class LossReport:
    per_category_loss: dict[str, torch.Tensor]
    total: torch.Tensor
    # category -> estimate position chosen for each target position in group order
    chosen_permutations: dict[str, tuple[int, ...]]

    def to_record(self) -> dict:
        return {
            "total": float(self.total),
            "per_category": {k: float(v) for k, v in self.per_category_loss.items()},
            "permutations": {k: list(v) for k, v in self.chosen_permutations.items()},
        }


def as_signal_tensor(signals: Signals) -> torch.Tensor:
    if isinstance(signals, torch.Tensor):
        return signals
    items = [s.to_tensor(torch.float64) if isinstance(s, AudioBuffer) else s for s in signals]
    lengths = {item.shape[-1] for item in items}
    if len(lengths) > 1:
        raise SignalError(f"signals have different lengths: {sorted(lengths)}")
    return torch.stack(items)


def best_assignment(matrix: torch.Tensor) -> tuple[tuple[int, ...], list[torch.Tensor]]:
    """
    Exhaustive minimum-mean assignment on an m x m loss matrix
    (row = target, column = estimate). Returns the permutation and the chosen entries.
    """
    size = matrix.shape[0]
    values = matrix.detach().double().cpu()
    best, best_cost = None, None
    for perm in permutations(range(size)):
        cost = sum(float(values[i, j]) for i, j in enumerate(perm))
        if best_cost is None or cost < best_cost:
            best, best_cost = perm, cost
    return best, [matrix[i, j] for i, j in enumerate(best)]


def category_pit_loss(
    targets: Signals,
    estimates: Signals,
    grouping: CategoryGrouping,
    weighting: str = "category",
    pair_loss: PairLoss = neg_snr_loss,
) -> LossReport:
    """
    PIT within each category group, then average. With weighting="category"
    every category counts once; "source" weights by the number of sources.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting '{weighting}' (known: {', '.join(WEIGHTINGS)})")
    targets, estimates = as_signal_tensor(targets), as_signal_tensor(estimates)
    if targets.shape != estimates.shape:
        raise SignalError(
            f"targets {tuple(targets.shape)} and estimates {tuple(estimates.shape)} differ in shape"
        )
    grouping.validate(targets.shape[0])

    per_category, chosen, selected = {}, {}, []
    for name, positions in grouping.groups.items():
        index = torch.tensor(positions, device=targets.device)
        matrix = pair_loss(targets[index].unsqueeze(1), estimates[index].unsqueeze(0))
        perm, entries = best_assignment(matrix)
        per_category[name] = ordered_mean(entries)
        chosen[name] = tuple(positions[j] for j in perm)
        selected.extend(entries)

    if weighting == "category":
        total = ordered_mean(list(per_category.values()))
    else:
        total = ordered_mean(selected)
    return LossReport(per_category, total, chosen)


def fixed_output_pit_loss(
    targets: Signals,
    estimates: torch.Tensor,
    mixture: torch.Tensor,
    tau_active: float = TAU_ACTIVE,
    tau_inactive: float = TAU_INACTIVE,
) -> LossReport:
    """
    PIT over every head of a fixed-output model. Missing references are
    zero signals, so surplus heads are pushed toward silence.
    """
    targets = as_signal_tensor(targets)
    heads = estimates.shape[0]
    if targets.shape[0] > heads:
        raise SignalError(f"{targets.shape[0]} references for {heads} output heads")
    if targets.shape[-1] != estimates.shape[-1]:
        raise SignalError(
            f"length mismatch: references have {targets.shape[-1]} samples, "
            f"estimates have {estimates.shape[-1]}"
        )
    padded = torch.zeros_like(estimates)
    padded[: targets.shape[0]] = targets.to(estimates.dtype)
    matrix = zero_aware_snr_loss(
        padded.unsqueeze(1), estimates.unsqueeze(0), mixture, tau_active, tau_inactive
    )
    perm, entries = best_assignment(matrix)
    per_head = {f"head{j}": entry for j, entry in zip(perm, entries)}
    return LossReport(per_head, ordered_mean(entries), {"heads": perm})
