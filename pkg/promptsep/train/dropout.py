from dataclasses import dataclass

import numpy as np

from ..core.types import PromptSet
from ..data.mixer import MixtureExample


@dataclass(frozen=True)
class DropoutDraw:
    triggered: bool
    requested: int
    dropped: tuple[int, ...]


def draw_prompt_dropout(
    prompts: PromptSet, rng: np.random.Generator, probability: float
) -> DropoutDraw:
    """
    With the given probability, pick M uniform in [1, N) and choose up to M
    positions to remove. Only prompts whose category appears once may go.
    """
    triggered = bool(rng.random() < probability)
    count = len(prompts)
    if not triggered or count < 2:
        return DropoutDraw(triggered, 0, ())
    requested = int(rng.integers(1, count))
    counts = prompts.counts()
    droppable = [i for i, category in enumerate(prompts) if counts[category] == 1]
    take = min(requested, len(droppable))
    if take == 0:
        return DropoutDraw(True, requested, ())
    dropped = rng.choice(droppable, size=take, replace=False)
    return DropoutDraw(True, requested, tuple(sorted(int(i) for i in dropped)))


def apply_prompt_dropout(
    example: MixtureExample, rng: np.random.Generator, probability: float
) -> MixtureExample:
    """Removed prompts lose their targets; their audio stays in the mixture"""
    draw = draw_prompt_dropout(example.prompts, rng, probability)
    if not draw.dropped:
        return example
    keep = [i for i in range(len(example.prompts)) if i not in draw.dropped]
    return MixtureExample(
        mixture=example.mixture,
        sources=[example.sources[i] for i in keep],
        prompts=example.prompts.without(draw.dropped),
        gains_db=[example.gains_db[i] for i in keep],
        provenance=[example.provenance[i] for i in keep],
    )
