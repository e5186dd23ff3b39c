"""
Corpus manifest: one JSON object per line with fields
path, category, sample_rate_hz, num_samples, split.
Relative paths are resolved against the manifest's directory.
"""

import json
import logging
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from ..core.errors import ManifestError
from ..core.types import PromptCategory
from ..util.logs import JsonLinesWriter

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
RECORD_FIELDS = ("path", "category", "sample_rate_hz", "num_samples", "split")


@dataclass(frozen=True)
class SourceRecord:
    path: Path
    category: PromptCategory
    sample_rate_hz: int
    num_samples: int
    split: str = "train"

    def __post_init__(self):
        if self.num_samples <= 0:
            raise ValueError(f"num_samples must be positive, got {self.num_samples}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {', '.join(SPLITS)}, got '{self.split}'")

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "SourceRecord":
        missing = [name for name in RECORD_FIELDS[:4] if name not in data]
        if missing:
            raise ValueError(f"missing field(s): {', '.join(missing)}")
        path = Path(data["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            category = PromptCategory.parse(str(data["category"]))
        except ValueError:
            raise ValueError(f"unknown category '{data['category']}'") from None
        return cls(
            path=path,
            category=category,
            sample_rate_hz=int(data["sample_rate_hz"]),
            num_samples=int(data["num_samples"]),
            split=str(data.get("split", "train")),
        )

    def to_dict(self) -> dict:
        return {
            "path": str(self.path),
            "category": self.category.value,
            "sample_rate_hz": self.sample_rate_hz,
            "num_samples": self.num_samples,
            "split": self.split,
        }


@dataclass
class CorpusManifest:
    records: list[SourceRecord]
    index: dict[tuple[PromptCategory, str], list[SourceRecord]] = field(init=False)

    def __post_init__(self):
        self.index = {}
        for record in self.records:
            self.index.setdefault((record.category, record.split), []).append(record)

    def __len__(self):
        return len(self.records)

    def records_for(self, category: PromptCategory, split: str = "train") -> list[SourceRecord]:
        return self.index.get((category, split), [])

    def has(self, category: PromptCategory, split: str = "train") -> bool:
        return bool(self.records_for(category, split))

    def require(self, categories: Iterable[PromptCategory], split: str = "train"):
        empty = [c.value for c in categories if not self.has(c, split)]
        if empty:
            raise ManifestError(f"no {split} records for categories: {', '.join(empty)}")

    def counts(self, split: str = "train") -> dict[str, int]:
        return {c.value: len(self.records_for(c, split)) for c in PromptCategory}


def load_manifest(
    path: str | Path,
    required_categories: Iterable[PromptCategory] = (),
    split: str = "train",
) -> CorpusManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"{path}: no such manifest")
    records = []
    with path.open() as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"invalid JSON ({e.msg})", number) from e
            if not isinstance(data, dict):
                raise ManifestError("each line must be a JSON object", number)
            try:
                records.append(SourceRecord.from_dict(data, base_dir=path.parent))
            except (ValueError, TypeError) as e:
                raise ManifestError(str(e), number) from e

    for record_path, count in Counter(r.path for r in records).items():
        if count > 1:
            logger.warning("%s: %s listed %d times", path, record_path, count)

    manifest = CorpusManifest(records)
    manifest.require(required_categories, split)
    logger.info("loaded %d records from %s", len(records), path)
    return manifest


def write_manifest(path: str | Path, records: Iterable[SourceRecord]):
    with JsonLinesWriter(path, append=False) as writer:
        for record in records:
            writer.write(record.to_dict())
