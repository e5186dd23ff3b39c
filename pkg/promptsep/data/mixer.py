"""
On-the-fly mixture synthesis.

Every source is cropped at its native rate, resampled down to the lowest rate
among the drawn sources and then up to the model rate, normalized to unit RMS,
scaled by a random gain and summed. Each example can be written out as recipe
rows and replayed exactly.
"""

import json
import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core.audio import AudioBuffer, read_wav
from ..core.dsp import MODEL_RATE_HZ, resample
from ..core.errors import ManifestError, SignalError
from ..core.types import INSTRUMENTS, PromptCategory, PromptSet
from ..util.logs import JsonLinesWriter
from .manifest import CorpusManifest, SourceRecord
from .sampler import PromptSamplerConfig, sample_prompt_set

logger = logging.getLogger(__name__)

SILENT_RMS = 1e-6
# an excerpt that loses more than this to the mixture's band limit counts as silent
BAND_LOSS_DB = 30.0
CROP_ATTEMPTS = 10
RECORD_ATTEMPTS = 10
VALIDATION_SEED = 20_240_601
VALIDATION_SIZE = 200

SUBMIX_CONSTITUENTS: dict[PromptCategory, tuple[PromptCategory, ...]] = {
    PromptCategory.SFX_MIX: (PromptCategory.SFX,),
    PromptCategory.MUSIC_MIX: tuple(c for c in PromptCategory if c in INSTRUMENTS),
}


@dataclass(frozen=True)
class SourcePart:
    """
    One file excerpt feeding a source slot. offset_samples >= 0 is the crop
    start inside the file; a negative value places the whole file at sample
    -offset_samples of a zero-padded segment.
    """

    record: SourceRecord
    offset_samples: int
    gain_db: float = 0.0


@dataclass
class DrawnSource:
    category: PromptCategory
    audio: AudioBuffer
    parts: list[SourcePart]

    @property
    def record(self) -> SourceRecord:
        return self.parts[0].record

    @property
    def is_submix(self) -> bool:
        return len(self.parts) > 1


@dataclass
class MixtureExample:
    mixture: AudioBuffer
    sources: list[AudioBuffer]
    prompts: PromptSet
    gains_db: list[float]
    provenance: list[list[SourcePart]]

    def __post_init__(self):
        if len(self.sources) != len(self.prompts):
            raise SignalError(f"{len(self.sources)} sources for {len(self.prompts)} prompts")

    @property
    def num_samples(self) -> int:
        return len(self.mixture)

    def to_recipe_rows(self, example_id: int) -> list[dict]:
        rows = []
        for slot, (category, gain, parts) in enumerate(
            zip(self.prompts, self.gains_db, self.provenance)
        ):
            for part in parts:
                rows.append(
                    {
                        "example_id": example_id,
                        "slot": slot,
                        **part.record.to_dict(),
                        "category": category.value,
                        "record_category": part.record.category.value,
                        "gain_db": gain,
                        "part_gain_db": part.gain_db,
                        "offset_samples": part.offset_samples,
                        "mixture_samples": self.num_samples,
                        "mixture_rate_hz": self.mixture.sample_rate_hz,
                    }
                )
        return rows


@dataclass
class Recipe:
    example_id: int
    prompts: PromptSet
    gains_db: list[float]
    slots: list[list[SourcePart]]
    num_samples: int
    sample_rate_hz: int = MODEL_RATE_HZ


def crop_offset(available: int, wanted: int, rng: np.random.Generator) -> int:
    if available >= wanted:
        return int(rng.integers(0, available - wanted + 1))
    return -int(rng.integers(0, wanted - available + 1))


def read_segment(record: SourceRecord, offset: int, num_samples: int) -> AudioBuffer:
    if offset >= 0:
        audio = read_wav(record.path, start=offset, stop=offset + num_samples)
    else:
        audio = read_wav(record.path)
    if audio.sample_rate_hz != record.sample_rate_hz:
        raise ManifestError(
            f"{record.path}: manifest says {record.sample_rate_hz} Hz, file is {audio.sample_rate_hz} Hz"
        )
    if offset >= 0:
        return audio.fit_length(num_samples)
    segment = np.zeros(num_samples)
    start = -offset
    count = min(len(audio), num_samples - start)
    segment[start : start + count] = audio.samples[:count]
    return AudioBuffer(segment, audio.sample_rate_hz)


def segment_length(record: SourceRecord, duration_s: float) -> int:
    return max(1, round(duration_s * record.sample_rate_hz))


def db_to_gain(gain_db: float) -> float:
    return 10.0 ** (gain_db / 20.0)


def audible(audio: AudioBuffer, band_rate_hz: int | None = None) -> bool:
    """
    Non-silent, and when band_rate_hz is below the native rate, still
    non-silent after band-limiting to it without losing more than BAND_LOSS_DB.
    """
    rms = audio.rms()
    if rms < SILENT_RMS:
        return False
    if band_rate_hz is None or band_rate_hz >= audio.sample_rate_hz:
        return True
    kept = resample(audio, band_rate_hz).rms()
    return kept >= SILENT_RMS and kept >= rms * db_to_gain(-BAND_LOSS_DB)


def draw_excerpt(
    category: PromptCategory,
    manifest: CorpusManifest,
    rng: np.random.Generator,
    duration_s: float,
    band_rate_hz: int | None = None,
) -> tuple[AudioBuffer, SourcePart]:
    """Uniform record, random crop; silent crops are redrawn, then another record is tried"""
    records = manifest.records_for(category)
    if not records:
        raise ManifestError(f"no train records for category '{category}'")
    for _ in range(RECORD_ATTEMPTS):
        record = records[int(rng.integers(len(records)))]
        wanted = segment_length(record, duration_s)
        for _ in range(CROP_ATTEMPTS):
            offset = crop_offset(record.num_samples, wanted, rng)
            audio = read_segment(record, offset, wanted)
            if audible(audio, band_rate_hz):
                return audio, SourcePart(record, offset)
        logger.warning("%s: %d silent crops, trying another record", record.path, CROP_ATTEMPTS)
    below = f" below {band_rate_hz // 2} Hz" if band_rate_hz else ""
    raise SignalError(
        f"no non-silent excerpt{below} for category '{category}' after "
        f"{RECORD_ATTEMPTS * CROP_ATTEMPTS} attempts"
    )


def keep_in_band(
    drawn: list[DrawnSource],
    redraw: Callable[[DrawnSource, int], DrawnSource],
    band_rate_hz: int | None = None,
) -> list[DrawnSource]:
    """
    Replace every source that is silent at the lowest rate of the set until
    all of them survive it. A replacement at a lower native rate lowers that
    rate, so the set is checked again.
    """
    drawn = list(drawn)
    for _ in range(RECORD_ATTEMPTS):
        rates = [source.audio.sample_rate_hz for source in drawn]
        lowest = min(rates + [band_rate_hz] if band_rate_hz else rates)
        stale = [i for i, source in enumerate(drawn) if not audible(source.audio, lowest)]
        if not stale:
            return drawn
        for i in stale:
            logger.debug("%s: silent below %d Hz, redrawing", drawn[i].record.path, lowest // 2)
            drawn[i] = redraw(drawn[i], lowest)
    raise SignalError(
        f"sources still silent at {lowest} Hz after {RECORD_ATTEMPTS} redraw rounds"
    )


def normalize_rms(audio: AudioBuffer) -> AudioBuffer:
    rms = audio.rms()
    if rms < SILENT_RMS:
        raise SignalError(f"cannot normalize a silent source (RMS {rms:.3g})")
    return audio.scaled(1.0 / rms)


def combine_parts(parts: list[tuple[AudioBuffer, SourcePart]], duration_s: float) -> AudioBuffer:
    """Sum of unit-RMS parts at their lowest common rate, each scaled by its part gain"""
    lowest = min(audio.sample_rate_hz for audio, _ in parts)
    length = max(1, round(duration_s * lowest))
    total = np.zeros(length)
    for audio, part in parts:
        harmonized = normalize_rms(resample(audio, lowest).fit_length(length))
        total += harmonized.samples * db_to_gain(part.gain_db)
    return AudioBuffer(total, lowest)


def draw_source(
    category: PromptCategory,
    manifest: CorpusManifest,
    config: PromptSamplerConfig,
    rng: np.random.Generator,
    duration_s: float,
    band_rate_hz: int | None = None,
) -> DrawnSource:
    """
    One excerpt of the category. For sfx-mix and music-mix, with probability
    submix_probability, the sum of 2-3 excerpts of the individual categories instead.
    band_rate_hz is the lowest rate the source will pass through.
    """
    constituents = [c for c in SUBMIX_CONSTITUENTS.get(category, ()) if manifest.has(c)]
    use_submix = bool(rng.random() < config.submix_probability)
    if constituents and (use_submix or not manifest.has(category)):
        low, high = config.submix_size

        def part_of(part_category: PromptCategory, rate: int | None) -> DrawnSource:
            audio, part = draw_excerpt(part_category, manifest, rng, duration_s, rate)
            part_gain = float(rng.uniform(*config.gain_range(part_category)))
            return DrawnSource(
                part_category, audio, [SourcePart(part.record, part.offset_samples, part_gain)]
            )

        count = int(rng.integers(low, high + 1))
        drawn = [
            part_of(constituents[int(rng.integers(len(constituents)))], band_rate_hz)
            for _ in range(count)
        ]
        drawn = keep_in_band(drawn, lambda d, rate: part_of(d.category, rate), band_rate_hz)
        parts = [(d.audio, d.parts[0]) for d in drawn]
        return DrawnSource(category, combine_parts(parts, duration_s), [p for _, p in parts])

    audio, part = draw_excerpt(category, manifest, rng, duration_s, band_rate_hz)
    return DrawnSource(category, audio, [part])


def render_mixture(
    prompts: PromptSet,
    drawn: list[DrawnSource],
    gains_db: list[float],
    num_samples: int,
    sample_rate_hz: int = MODEL_RATE_HZ,
) -> MixtureExample:
    lowest = min(source.audio.sample_rate_hz for source in drawn)
    sources = []
    for source, gain in zip(drawn, gains_db):
        harmonized = resample(resample(source.audio, lowest), sample_rate_hz)
        sources.append(normalize_rms(harmonized.fit_length(num_samples)).scaled(db_to_gain(gain)))
    mixture = AudioBuffer(np.sum([s.samples for s in sources], axis=0), sample_rate_hz)
    return MixtureExample(
        mixture=mixture,
        sources=sources,
        prompts=prompts,
        gains_db=list(gains_db),
        provenance=[source.parts for source in drawn],
    )


def draw_gains(
    prompts: PromptSet, config: PromptSamplerConfig, rng: np.random.Generator
) -> list[float]:
    """One gain per prompt, uniform in dB over the category's range"""
    return [float(rng.uniform(*config.gain_range(c))) for c in prompts]


def synthesize_mixture(
    prompts: PromptSet,
    manifest: CorpusManifest,
    config: PromptSamplerConfig,
    rng: np.random.Generator,
    duration_s: float,
    sample_rate_hz: int = MODEL_RATE_HZ,
) -> MixtureExample:
    drawn = [draw_source(c, manifest, config, rng, duration_s) for c in prompts]
    drawn = keep_in_band(
        drawn, lambda d, rate: draw_source(d.category, manifest, config, rng, duration_s, rate)
    )
    gains = draw_gains(prompts, config, rng)
    return render_mixture(prompts, drawn, gains, round(duration_s * sample_rate_hz), sample_rate_hz)


def replay_recipe(recipe: Recipe) -> MixtureExample:
    duration_s = recipe.num_samples / recipe.sample_rate_hz
    drawn = []
    for category, parts in zip(recipe.prompts, recipe.slots):
        excerpts = [
            (read_segment(p.record, p.offset_samples, segment_length(p.record, duration_s)), p)
            for p in parts
        ]
        if len(excerpts) > 1:
            audio = combine_parts(excerpts, duration_s)
        else:
            audio = excerpts[0][0]
        drawn.append(DrawnSource(category, audio, parts))
    return render_mixture(
        recipe.prompts, drawn, recipe.gains_db, recipe.num_samples, recipe.sample_rate_hz
    )


def write_recipes(path: str | Path, examples: Iterable[MixtureExample]):
    with JsonLinesWriter(path, append=False) as writer:
        for example_id, example in enumerate(examples):
            for row in example.to_recipe_rows(example_id):
                writer.write(row)


def _part_from_row(row: dict, base_dir: Path) -> SourcePart:
    record = SourceRecord.from_dict(
        {**row, "category": row.get("record_category", row["category"])}, base_dir
    )
    return SourcePart(record, int(row["offset_samples"]), float(row.get("part_gain_db", 0.0)))


def load_recipes(path: str | Path) -> list[Recipe]:
    path = Path(path)
    rows: dict[int, list[tuple[int, dict]]] = {}
    with path.open() as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rows.setdefault(int(row["example_id"]), []).append((number, row))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ManifestError(f"bad recipe row ({e})", number) from e

    recipes = []
    for example_id, numbered in rows.items():
        slots: dict[int, list[SourcePart]] = {}
        categories: dict[int, PromptCategory] = {}
        gains: dict[int, float] = {}
        for number, row in numbered:
            try:
                slot = int(row["slot"])
                categories[slot] = PromptCategory.parse(row["category"])
                gains[slot] = float(row["gain_db"])
                slots.setdefault(slot, []).append(_part_from_row(row, path.parent))
            except (KeyError, TypeError, ValueError) as e:
                raise ManifestError(f"bad recipe row ({e})", number) from e
        order = sorted(slots)
        if order != list(range(len(order))):
            raise ManifestError(f"example {example_id}: slots {order} are not contiguous")
        first = numbered[0][1]
        recipes.append(
            Recipe(
                example_id=example_id,
                prompts=PromptSet(tuple(categories[s] for s in order)),
                gains_db=[gains[s] for s in order],
                slots=[slots[s] for s in order],
                num_samples=int(first["mixture_samples"]),
                sample_rate_hz=int(first.get("mixture_rate_hz", MODEL_RATE_HZ)),
            )
        )
    return recipes


def recipe_of(example: MixtureExample, example_id: int = 0) -> Recipe:
    return Recipe(
        example_id=example_id,
        prompts=example.prompts,
        gains_db=list(example.gains_db),
        slots=[list(parts) for parts in example.provenance],
        num_samples=example.num_samples,
        sample_rate_hz=example.mixture.sample_rate_hz,
    )


@dataclass
class MixtureEngine:
    """Manifest plus sampling settings; draws complete training examples"""

    manifest: CorpusManifest
    config: PromptSamplerConfig = field(default_factory=PromptSamplerConfig)
    duration_s: float = 6.0
    sample_rate_hz: int = MODEL_RATE_HZ

    def __post_init__(self):
        self.manifest.require(
            c for c in self.config.categories if c not in SUBMIX_CONSTITUENTS
            or not any(self.manifest.has(p) for p in SUBMIX_CONSTITUENTS[c])
        )

    def sample(self, rng: np.random.Generator, prompts: PromptSet | None = None) -> MixtureExample:
        if prompts is None:
            prompts = sample_prompt_set(self.config, rng)
        return synthesize_mixture(
            prompts, self.manifest, self.config, rng, self.duration_s, self.sample_rate_hz
        )

    def recipes(self, count: int, seed: int) -> list[Recipe]:
        rng = np.random.default_rng(seed)
        return [recipe_of(self.sample(rng), i) for i in range(count)]

    def validation_recipes(self, count: int = VALIDATION_SIZE, seed: int = VALIDATION_SEED) -> list[Recipe]:
        return self.recipes(count, seed)

    def replay(self, recipe: Recipe) -> MixtureExample:
        return replay_recipe(recipe)
