"""
Evaluation over a manifest of (mixture, references) items.

Manifest lines look like
  {"id": "item-0", "mixture": "mix.wav",
   "references": [{"path": "s0.wav", "category": "speech"}, ...]}
Scores use the best assignment within each category; categories are
paired with prompts by position.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path

import numpy as np
from tqdm import tqdm

from ..core.audio import AudioBuffer, read_wav
from ..core.errors import ManifestError, SeparationError, SignalError
from ..core.types import PromptCategory, PromptSet
from ..losses.snr import evaluate_pair, resolve_convention
from ..model.checkpoint import Separator
from ..model.separator import PromptSeparator
from ..util.colors import Color, paint, score_color
from ..util.logs import JsonLinesWriter

logger = logging.getLogger(__name__)

MIN_INPUT_RATE_HZ = 8000


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    mixture: Path
    references: tuple[tuple[PromptCategory, Path], ...]

    @property
    def categories(self) -> list[PromptCategory]:
        return [category for category, _ in self.references]


@dataclass
class ItemScore:
    item_id: str
    prompts: list[str]
    scores: list[float]

    def category_means(self) -> dict[str, float]:
        grouped: dict[str, list[float]] = {}
        for name, score in zip(self.prompts, self.scores):
            grouped.setdefault(name, []).append(score)
        return {name: float(np.mean(values)) for name, values in grouped.items()}


@dataclass
class EvalReport:
    per_item: list[ItemScore]
    per_category_mean: dict[str, float]
    convention: str
    skipped: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "type": "summary",
            "convention": self.convention,
            "per_category_mean": self.per_category_mean,
            "items": len(self.per_item),
            "skipped": self.skipped,
            "notes": self.notes,
        }

    def write(self, path: str | Path):
        with JsonLinesWriter(path, append=False) as writer:
            for item in self.per_item:
                writer.write({"type": "item", "id": item.item_id, "prompts": item.prompts,
                              "scores": item.scores})
            writer.write(self.summary())


def aggregate(per_item: list[ItemScore]) -> dict[str, float]:
    """Mean over items of each item's per-category mean score"""
    grouped: dict[str, list[float]] = {}
    for item in per_item:
        for name, value in item.category_means().items():
            grouped.setdefault(name, []).append(value)
    return {name: float(np.mean(values)) for name, values in grouped.items()}


def load_eval_manifest(path: str | Path) -> list[EvalItem]:
    path = Path(path)
    items = []
    with path.open() as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                references = tuple(
                    (PromptCategory.parse(ref["category"]), _resolve(path, ref["path"]))
                    for ref in data["references"]
                )
                items.append(
                    EvalItem(str(data.get("id", number)), _resolve(path, data["mixture"]), references)
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ManifestError(f"bad evaluation item ({e})", number) from e
    return items


def _resolve(manifest: Path, value: str) -> Path:
    value = Path(value)
    return value if value.is_absolute() else manifest.parent / value


def order_by_preset(categories: list[PromptCategory], preset: PromptSet) -> list[int]:
    """
    Reference positions reordered to follow the preset's prompt order.
    Raises SignalError when the references do not carry exactly the preset's categories.
    """
    if sorted(c.value for c in categories) != sorted(preset.names):
        raise SignalError(
            f"references [{', '.join(c.value for c in categories)}] do not match preset [{preset}]"
        )
    rank = {category: i for i, category in reversed(list(enumerate(preset)))}
    return sorted(range(len(categories)), key=lambda i: (rank[categories[i]], i))


def best_category_scores(
    references: list[AudioBuffer],
    estimates: list[AudioBuffer],
    prompts: PromptSet,
    convention: str,
) -> list[float]:
    """Per-position scores after the best assignment inside each category group"""
    scores = [0.0] * len(prompts)
    for positions in prompts.positions().values():
        matrix = [
            [evaluate_pair(references[i], estimates[j], convention) for j in positions]
            for i in positions
        ]
        best = max(
            permutations(range(len(positions))),
            key=lambda perm: sum(matrix[i][j] for i, j in enumerate(perm)),
        )
        for i, j in enumerate(best):
            scores[positions[i]] = matrix[i][j]
    return scores


def check_input_rate(audio: AudioBuffer, path: Path):
    if audio.sample_rate_hz < MIN_INPUT_RATE_HZ:
        raise SignalError(
            f"{path}: sample rate {audio.sample_rate_hz} Hz is below {MIN_INPUT_RATE_HZ} Hz"
        )


def separate_for_scoring(
    model: Separator, mixture: AudioBuffer, prompts: PromptSet, single_category: bool
) -> list[AudioBuffer]:
    if not single_category:
        return model.separate(mixture, prompts)
    # one pass per category, each with only that category's prompts
    estimates: list[AudioBuffer | None] = [None] * len(prompts)
    for category, positions in prompts.positions().items():
        outputs = model.separate(mixture, PromptSet((category,) * len(positions)))
        for position, output in zip(positions, outputs):
            estimates[position] = output
    return estimates


def evaluate_item(
    item: EvalItem,
    model: Separator | None,
    convention: str,
    preset: PromptSet | None = None,
    oracle: bool = False,
    single_category: bool = False,
) -> ItemScore:
    if preset is not None:
        order = order_by_preset(item.categories, preset)
    else:
        order = list(range(len(item.references)))
    prompts = PromptSet(tuple(item.categories[i] for i in order))
    references = [read_wav(item.references[i][1]) for i in order]

    if oracle:
        estimates = [AudioBuffer(r.samples.copy(), r.sample_rate_hz) for r in references]
    else:
        mixture = read_wav(item.mixture)
        check_input_rate(mixture, item.mixture)
        estimates = separate_for_scoring(model, mixture, prompts, single_category)
    if len(estimates) != len(references):
        raise SignalError(f"{len(estimates)} estimates for {len(references)} references")
    estimates = [e.fit_length(len(r)) for e, r in zip(estimates, references)]
    scores = best_category_scores(references, estimates, prompts, convention)
    return ItemScore(item.item_id, prompts.names, scores)


def evaluate(
    items: list[EvalItem],
    model: Separator | None,
    convention: str = "si-snr",
    preset: PromptSet | None = None,
    oracle: bool = False,
    single_category: bool = False,
    workers: int = 1,
    progress: bool = False,
) -> EvalReport:
    """Score every item; items that fail are skipped and noted in the report"""
    resolve_convention(convention)
    if model is None and not oracle:
        raise ValueError("a model is required unless oracle mode is on")
    if model is not None and not isinstance(model, PromptSeparator) and not oracle:
        raise ValueError("evaluation needs a prompted model (fixed-output heads have no category)")
    if model is not None:
        model.eval()

    def run(item: EvalItem) -> ItemScore | dict:
        try:
            return evaluate_item(item, model, convention, preset, oracle, single_category)
        except (SeparationError, OSError) as e:
            logger.warning("skipping item %s: %s", item.item_id, e)
            return {"id": item.item_id, "reason": str(e)}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(tqdm(pool.map(run, items), total=len(items), disable=not progress, desc="evaluate"))

    per_item = [r for r in results if isinstance(r, ItemScore)]
    skipped = [r for r in results if isinstance(r, dict)]
    notes = []
    if single_category:
        notes.append("single-category protocol: one forward pass per category, with only that category's prompts")
    if oracle:
        notes.append("oracle mode: estimates are the references")
    return EvalReport(per_item, aggregate(per_item), convention, skipped, notes)


def format_report_table(report: EvalReport, color: bool = False) -> str:
    names = [c.value for c in PromptCategory if c.value in report.per_category_mean]
    header = f"{'category':<12} {report.convention + ' [dB]':>12}"
    lines = [paint(header, Color.BOLD, color)]
    for name in names:
        value = report.per_category_mean[name]
        lines.append(f"{name:<12} {paint(f'{value:>12.2f}', score_color(value), color)}")
    lines.append(paint(f"{len(report.per_item)} items, {len(report.skipped)} skipped", Color.DIM, color))
    return "\n".join(lines)
