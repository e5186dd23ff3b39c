from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import PromptSetError


class PromptCategory(Enum):
    """The eight source categories a prompt can ask for"""

    SPEECH = "speech"
    SFX = "sfx"
    SFX_MIX = "sfx-mix"
    DRUMS = "drums"
    BASS = "bass"
    VOCALS = "vocals"
    OTHER_INST = "other-inst"
    MUSIC_MIX = "music-mix"

    @classmethod
    def parse(cls, token: str) -> "PromptCategory":
        """Case-insensitive lookup by serialized name ("sfx-mix", "SFX_MIX", ...)"""
        key = token.strip().lower().replace("_", "-")
        for category in cls:
            if category.value == key:
                return category
        known = ", ".join(c.value for c in cls)
        raise ValueError(f"Unknown prompt category '{token}'. Known categories: {known}")

    @property
    def index(self) -> int:
        """Row of this category in the prompt table"""
        return list(PromptCategory).index(self)

    @property
    def is_repeatable(self) -> bool:
        return self in REPEATABLE

    @property
    def is_instrument(self) -> bool:
        return self in INSTRUMENTS

    def __str__(self):
        return self.value


INSTRUMENTS = frozenset(
    {
        PromptCategory.DRUMS,
        PromptCategory.BASS,
        PromptCategory.VOCALS,
        PromptCategory.OTHER_INST,
    }
)
REPEATABLE = frozenset({PromptCategory.SPEECH, PromptCategory.SFX})


def find_violation(entries: Iterable[PromptCategory]) -> PromptSetError | None:
    """
    Check a candidate prompt list against the combination rules.
    Returns the error describing the first broken rule, or None if valid.
    """
    entries = list(entries)
    if not entries:
        return PromptSetError("empty", "prompt set must contain at least one prompt")

    present = set(entries)
    if PromptCategory.SFX in present and PromptCategory.SFX_MIX in present:
        return PromptSetError("sfx-exclusion", "SFX and SFX-mix cannot coexist")

    if PromptCategory.MUSIC_MIX in present and present & INSTRUMENTS:
        clash = ", ".join(sorted(c.value for c in present & INSTRUMENTS))
        return PromptSetError(
            "music-exclusion",
            f"Music-mix cannot coexist with individual instruments ({clash})",
        )

    for category, count in Counter(entries).items():
        if count > 1 and not category.is_repeatable:
            return PromptSetError(
                "once-only",
                f"category '{category.value}' may appear at most once (found {count}); "
                "only speech and sfx can repeat",
            )
    return None


@dataclass(frozen=True)
class PromptSet:
    """
    Ordered list of prompts. The model returns one output per entry,
    in the same order.
    """

    entries: tuple[PromptCategory, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        error = find_violation(self.entries)
        if error is not None:
            raise error

    @classmethod
    def of(cls, *categories: PromptCategory | str) -> "PromptSet":
        return cls(
            tuple(
                c if isinstance(c, PromptCategory) else PromptCategory.parse(c)
                for c in categories
            )
        )

    @classmethod
    def coerce(cls, prompts: "PromptSet | str | Iterable[PromptCategory | str]") -> "PromptSet":
        if isinstance(prompts, PromptSet):
            return prompts
        if isinstance(prompts, str):
            return cls.parse(prompts)
        return cls.of(*prompts)

    @classmethod
    def parse(cls, text: str) -> "PromptSet":
        """Build from a comma-separated list such as "speech,sfx-mix" """
        tokens = [t for t in text.split(",") if t.strip()]
        return cls.of(*tokens)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[PromptCategory]:
        return iter(self.entries)

    def __getitem__(self, index: int) -> PromptCategory:
        return self.entries[index]

    def __str__(self):
        return ",".join(c.value for c in self.entries)

    @property
    def names(self) -> list[str]:
        return [c.value for c in self.entries]

    @property
    def indices(self) -> list[int]:
        """Prompt table rows, in prompt order"""
        return [c.index for c in self.entries]

    def counts(self) -> Counter:
        return Counter(self.entries)

    def positions(self) -> dict[PromptCategory, list[int]]:
        """Positions holding each category, categories in first-appearance order"""
        groups: dict[PromptCategory, list[int]] = {}
        for i, category in enumerate(self.entries):
            groups.setdefault(category, []).append(i)
        return groups

    def without(self, drop: Iterable[int]) -> "PromptSet":
        drop = set(drop)
        return PromptSet(tuple(c for i, c in enumerate(self.entries) if i not in drop))

    def permuted(self, order: Iterable[int]) -> "PromptSet":
        return PromptSet(tuple(self.entries[i] for i in order))
