from dataclasses import dataclass

from ..core.errors import ConfigError
from ..core.types import PromptCategory, PromptSet
from ..util.colors import Color, paint

P = PromptCategory


@dataclass(frozen=True)
class TaskPreset:
    """
    Prompt pattern for one separation task: fixed prompts, optionally preceded
    by N copies of a repeatable category.
    """

    name: str
    description: str
    fixed: tuple[PromptCategory, ...] = ()
    repeated: PromptCategory | None = None

    @property
    def needs_count(self) -> bool:
        return self.repeated is not None

    def expand(self, n: int | None = None, with_noise: bool = False) -> PromptSet:
        entries = []
        if self.repeated is not None:
            if n is None:
                raise ConfigError(f"preset '{self.name}' needs a source count (--n)")
            if n < 1:
                raise ConfigError(f"source count must be at least 1, got {n}")
            entries.extend([self.repeated] * n)
        entries.extend(self.fixed)
        if with_noise and P.SFX_MIX not in entries:
            entries.append(P.SFX_MIX)
        return PromptSet(tuple(entries))

    def pattern(self) -> str:
        parts = [f"{self.repeated} x N"] if self.repeated is not None else []
        return ", ".join(parts + [c.value for c in self.fixed])


TASK_PRESETS: dict[str, TaskPreset] = {
    preset.name: preset
    for preset in (
        TaskPreset("se", "speech enhancement", (P.SPEECH, P.SFX_MIX)),
        TaskPreset("ss", "speech separation", repeated=P.SPEECH),
        TaskPreset("noisy-ss", "noisy speech separation", (P.SFX_MIX,), repeated=P.SPEECH),
        TaskPreset("uss", "universal sound separation", repeated=P.SFX),
        TaskPreset("mss", "music source separation", (P.DRUMS, P.BASS, P.VOCALS, P.OTHER_INST)),
        TaskPreset("cass", "cinematic audio source separation", (P.SPEECH, P.SFX_MIX, P.MUSIC_MIX)),
    )
}


def preset_lookup(name: str, n: int | None = None, with_noise: bool = False) -> PromptSet:
    try:
        preset = TASK_PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}' (known: {', '.join(TASK_PRESETS)})"
        ) from None
    return preset.expand(n, with_noise)


def format_preset_table(color: bool = False) -> str:
    width = max(len(name) for name in TASK_PRESETS)
    lines = [paint(f"{'preset':<{width}}  prompts", Color.BOLD, color)]
    for preset in TASK_PRESETS.values():
        lines.append(
            f"{paint(f'{preset.name:<{width}}', Color.CYAN, color)}  "
            f"{preset.pattern():<45} {paint(preset.description, Color.DIM, color)}"
        )
    return "\n".join(lines)
