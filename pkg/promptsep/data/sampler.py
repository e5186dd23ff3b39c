"""Random prompt combinations that respect the combination rules"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..core.errors import ConfigError
from ..core.types import INSTRUMENTS, REPEATABLE, PromptCategory, PromptSet, find_violation

type GainRange = tuple[float, float]
type PairKey = frozenset[PromptCategory]

BOOSTED_PAIR_WEIGHT = 4.0


def default_gain_ranges() -> dict[PromptCategory, GainRange]:
    ranges = {c: (-10.0, 0.0) for c in PromptCategory}
    ranges[PromptCategory.SFX_MIX] = (-20.0, 0.0)
    ranges[PromptCategory.MUSIC_MIX] = (-20.0, 0.0)
    return ranges


def default_cooccurrence_weights() -> dict[PairKey, float]:
    """Pairs not listed weigh 1.0. Stand-in values; the trained weights are unpublished."""
    weights = {frozenset(pair): BOOSTED_PAIR_WEIGHT for pair in combinations(INSTRUMENTS, 2)}
    weights[frozenset({PromptCategory.SPEECH, PromptCategory.SFX_MIX})] = BOOSTED_PAIR_WEIGHT
    return weights


@dataclass(frozen=True)
class PromptSamplerConfig:
    n_range: tuple[int, int] = (2, 4)
    cooccurrence_weights: dict[PairKey, float] = field(default_factory=default_cooccurrence_weights)
    repeatable_categories: frozenset[PromptCategory] = REPEATABLE
    gain_ranges_db: dict[PromptCategory, GainRange] = field(default_factory=default_gain_ranges)
    submix_probability: float = 0.5
    submix_size: tuple[int, int] = (2, 3)
    categories: tuple[PromptCategory, ...] = tuple(PromptCategory)

    def __post_init__(self):
        problems = []
        low, high = self.n_range
        if not 1 <= low <= high:
            problems.append(f"n_range must satisfy 1 <= low <= high, got {self.n_range}")
        if any(w <= 0 for w in self.cooccurrence_weights.values()):
            problems.append("cooccurrence weights must be strictly positive")
        if self.repeatable_categories != REPEATABLE:
            problems.append("only speech and sfx can be repeatable")
        for category in self.categories:
            gain = self.gain_ranges_db.get(category)
            if gain is None:
                problems.append(f"no gain range for category '{category}'")
            elif gain[0] > gain[1]:
                problems.append(f"gain range for '{category}' is reversed: {gain}")
        if not 0.0 <= self.submix_probability <= 1.0:
            problems.append(f"submix_probability must be in [0, 1], got {self.submix_probability}")
        if not 2 <= self.submix_size[0] <= self.submix_size[1]:
            problems.append(f"submix_size must satisfy 2 <= low <= high, got {self.submix_size}")
        if high > 1 and not set(self.categories) & REPEATABLE:
            problems.append("categories must include speech or sfx to draw more than one prompt")
        if problems:
            raise ConfigError(problems)

    def weight(self, a: PromptCategory, b: PromptCategory) -> float:
        return self.cooccurrence_weights.get(frozenset({a, b}), 1.0)

    def gain_range(self, category: PromptCategory) -> GainRange:
        return self.gain_ranges_db[category]

    @classmethod
    def from_dict(cls, data: dict) -> "PromptSamplerConfig":
        """
        YAML form: cooccurrence_weights is a list of [category, category, weight]
        triples; gain_ranges_db maps category names to [low, high].
        """
        data = dict(data)
        kwargs = {}
        if "n_range" in data:
            kwargs["n_range"] = tuple(data.pop("n_range"))
        if "submix_size" in data:
            kwargs["submix_size"] = tuple(data.pop("submix_size"))
        if "cooccurrence_weights" in data:
            weights = default_cooccurrence_weights()
            for a, b, w in data.pop("cooccurrence_weights"):
                weights[frozenset({PromptCategory.parse(a), PromptCategory.parse(b)})] = float(w)
            kwargs["cooccurrence_weights"] = weights
        if "gain_ranges_db" in data:
            ranges = default_gain_ranges()
            for name, (low, high) in data.pop("gain_ranges_db").items():
                ranges[PromptCategory.parse(name)] = (float(low), float(high))
            kwargs["gain_ranges_db"] = ranges
        if "categories" in data:
            kwargs["categories"] = tuple(PromptCategory.parse(c) for c in data.pop("categories"))
        if "submix_probability" in data:
            kwargs["submix_probability"] = float(data.pop("submix_probability"))
        if data:
            raise ConfigError([f"data.sampler.{key} is not a known field" for key in sorted(data)])
        return cls(**kwargs)


def sample_prompt_set(config: PromptSamplerConfig, rng: np.random.Generator) -> PromptSet:
    """
    Draw N uniformly from n_range, then categories one at a time. The first is
    uniform; later ones are weighted by their mean co-occurrence weight with the
    categories already chosen. Candidates that would break a rule are masked out.
    """
    low, high = config.n_range
    count = int(rng.integers(low, high + 1))
    chosen: list[PromptCategory] = []
    for _ in range(count):
        candidates = [c for c in config.categories if find_violation([*chosen, c]) is None]
        if chosen:
            weights = np.array(
                [np.mean([config.weight(c, prev) for prev in chosen]) for c in candidates]
            )
        else:
            weights = np.ones(len(candidates))
        chosen.append(candidates[rng.choice(len(candidates), p=weights / weights.sum())])
    return PromptSet(tuple(chosen))
