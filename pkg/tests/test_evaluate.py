import json

import numpy as np
import pytest

from conftest import tone
from promptsep.core.audio import AudioBuffer, write_wav
from promptsep.core.errors import ManifestError, SignalError
from promptsep.core.types import PromptCategory, PromptSet
from promptsep.cli.evaluate import (
    EvalReport,
    ItemScore,
    aggregate,
    best_category_scores,
    evaluate,
    format_report_table,
    load_eval_manifest,
    order_by_preset,
)
from promptsep.cli.presets import preset_lookup
from promptsep.model import FixedOutputSeparator
from promptsep.util.logs import read_json_lines

RATE = 8000


def write_eval_set(root, rng, items):
    """items: list of category lists; each source is a tone plus a little noise"""
    lines = []
    for index, categories in enumerate(items):
        references, total = [], np.zeros(1600)
        for slot, category in enumerate(categories):
            samples = tone(200.0 + 150.0 * slot + 37.0 * index, 1600, RATE, 0.3) + 0.01 * rng.standard_normal(1600)
            total += samples
            path = root / f"item{index}" / f"s{slot}.wav"
            write_wav(path, AudioBuffer(samples, RATE))
            references.append({"path": str(path.relative_to(root)), "category": category})
        write_wav(root / f"item{index}" / "mix.wav", AudioBuffer(total, RATE))
        lines.append({"id": f"item{index}", "mixture": f"item{index}/mix.wav", "references": references})
    manifest = root / "eval.jsonl"
    manifest.write_text("".join(json.dumps(line) + "\n" for line in lines))
    return manifest


@pytest.fixture
def eval_manifest(tmp_path, rng):
    return write_eval_set(tmp_path, rng, [["speech", "sfx-mix"], ["speech", "speech", "sfx-mix"]])


def test_load(eval_manifest, tmp_path):
    items = load_eval_manifest(eval_manifest)
    assert [item.item_id for item in items] == ["item0", "item1"]
    assert items[1].categories == [PromptCategory.SPEECH, PromptCategory.SPEECH, PromptCategory.SFX_MIX]
    assert items[0].mixture == tmp_path / "item0" / "mix.wav"


def test_load_bad_line(tmp_path):
    path = tmp_path / "eval.jsonl"
    path.write_text('{"id": "a", "mixture": "m.wav"}\n')
    with pytest.raises(ManifestError, match="line 1"):
        load_eval_manifest(path)


def test_oracle_scores(eval_manifest, tmp_path):
    report = evaluate(load_eval_manifest(eval_manifest), None, convention="si-snr", oracle=True)
    assert len(report.per_item) == 2 and not report.skipped
    assert all(score >= 76.0 for item in report.per_item for score in item.scores)
    assert "oracle mode" in report.notes[0]

    report.write(tmp_path / "report.jsonl")
    records = read_json_lines(tmp_path / "report.jsonl")
    items = [ItemScore(r["id"], r["prompts"], r["scores"]) for r in records if r["type"] == "item"]
    summary = records[-1]
    assert summary["type"] == "summary" and summary["convention"] == "si-snr"
    assert aggregate(items) == pytest.approx(summary["per_category_mean"])


def test_aggregate_weights_items_equally():
    per_item = [
        ItemScore("a", ["speech", "speech", "sfx-mix"], [10.0, 20.0, 4.0]),
        ItemScore("b", ["speech", "sfx-mix"], [5.0, 6.0]),
    ]
    assert aggregate(per_item) == {"speech": 10.0, "sfx-mix": 5.0}


def test_model_scores(eval_manifest, micro_model):
    report = evaluate(load_eval_manifest(eval_manifest), micro_model, convention="snr")
    assert [len(item.scores) for item in report.per_item] == [2, 3]
    assert all(np.isfinite(score) for item in report.per_item for score in item.scores)
    assert set(report.per_category_mean) == {"speech", "sfx-mix"}


def test_single_category_protocol(eval_manifest, micro_model):
    report = evaluate(load_eval_manifest(eval_manifest), micro_model, single_category=True, workers=2)
    assert len(report.per_item) == 2
    assert "single-category" in report.notes[0]


def test_preset_mismatch_is_skipped(eval_manifest, micro_model):
    report = evaluate(load_eval_manifest(eval_manifest), micro_model, preset=preset_lookup("se"))
    assert [item.item_id for item in report.per_item] == ["item0"]
    assert report.skipped[0]["id"] == "item1"
    assert "do not match preset" in report.skipped[0]["reason"]


def test_fixed_output_model_rejected(eval_manifest, micro_config):
    with pytest.raises(ValueError, match="prompted model"):
        evaluate(load_eval_manifest(eval_manifest), FixedOutputSeparator(micro_config))


def test_model_required(eval_manifest):
    with pytest.raises(ValueError, match="model is required"):
        evaluate(load_eval_manifest(eval_manifest), None)


def test_order_by_preset():
    categories = [PromptCategory.SFX_MIX, PromptCategory.SPEECH, PromptCategory.MUSIC_MIX]
    assert order_by_preset(categories, preset_lookup("cass")) == [1, 0, 2]
    with pytest.raises(SignalError):
        order_by_preset(categories[:2], preset_lookup("cass"))


def test_best_category_scores_swap(rng):
    a = AudioBuffer(rng.standard_normal(400), RATE)
    b = AudioBuffer(rng.standard_normal(400), RATE)
    scores = best_category_scores([a, b], [b, a], PromptSet.parse("speech,speech"), "snr")
    assert min(scores) >= 80.0


def test_report_table():
    report = EvalReport([ItemScore("a", ["speech"], [12.5])], {"speech": 12.5}, "si-snr")
    table = format_report_table(report)
    assert "speech" in table and "12.50" in table
    assert "1 items, 0 skipped" in table
    assert "\033[32m" in format_report_table(report, color=True)
