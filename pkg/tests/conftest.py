from pathlib import Path

import numpy as np
import pytest
import soundfile as sf
import torch

from promptsep.core.audio import AudioBuffer
from promptsep.core.types import PromptCategory, PromptSet
from promptsep.data.manifest import SourceRecord, load_manifest, write_manifest
from promptsep.data.mixer import MixtureExample
from promptsep.model.config import ModelConfig
from promptsep.model.separator import PromptSeparator

# native rates of the toy corpus, mixed on purpose
CORPUS_RATES = {
    PromptCategory.SPEECH: 16000,
    PromptCategory.SFX: 48000,
    PromptCategory.SFX_MIX: 48000,
    PromptCategory.DRUMS: 44100,
    PromptCategory.BASS: 44100,
    PromptCategory.VOCALS: 44100,
    PromptCategory.OTHER_INST: 44100,
    PromptCategory.MUSIC_MIX: 44100,
}


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow training experiments"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tone(freq_hz: float, num_samples: int, rate: int, amplitude: float = 0.5) -> np.ndarray:
    t = np.arange(num_samples) / rate
    return amplitude * np.sin(2 * np.pi * freq_hz * t)


def write_source(path: Path, samples: np.ndarray, rate: int, subtype: str = "PCM_16"):
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), samples, rate, subtype=subtype)


def write_corpus(
    root: Path, rng: np.random.Generator, seconds: float = 0.5, files_per_category: int = 2
) -> Path:
    """A tone-plus-noise WAV corpus covering every category, with its manifest"""
    records = []
    for category, rate in CORPUS_RATES.items():
        for i in range(files_per_category):
            num_samples = round(seconds * rate)
            freq = 150.0 * (category.index + 1) + 40.0 * i
            samples = tone(freq, num_samples, rate, 0.3) + 0.05 * rng.standard_normal(num_samples)
            path = root / category.value / f"{category.value}-{i}.wav"
            write_source(path, samples, rate)
            records.append(SourceRecord(path, category, rate, num_samples))
    manifest_path = root / "manifest.jsonl"
    write_manifest(manifest_path, records)
    return manifest_path


def toy_example(
    prompts: PromptSet | str, rng: np.random.Generator, num_samples: int = 800, rate: int = 8000
) -> MixtureExample:
    """Random tones per prompt, summed; no corpus needed"""
    prompts = PromptSet.coerce(prompts)
    sources = []
    for _ in prompts:
        freq = float(rng.uniform(100, rate / 4))
        samples = tone(freq, num_samples, rate, 0.3) + 0.01 * rng.standard_normal(num_samples)
        sources.append(AudioBuffer(samples, rate))
    mixture = AudioBuffer(np.sum([s.samples for s in sources], axis=0), rate)
    return MixtureExample(mixture, sources, prompts, [0.0] * len(prompts), [[] for _ in prompts])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_config():
    return ModelConfig.preset("micro")


@pytest.fixture
def micro_model(micro_config):
    torch.manual_seed(0)
    return PromptSeparator(micro_config)


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "corpus", np.random.default_rng(7))


@pytest.fixture
def manifest(corpus):
    return load_manifest(corpus)
