from .dataset import MixtureStream, RecipeDataset, epoch_rng
from .manifest import CorpusManifest, SourceRecord, load_manifest, write_manifest
from .mixer import (
    MixtureEngine,
    MixtureExample,
    Recipe,
    draw_gains,
    draw_source,
    load_recipes,
    replay_recipe,
    synthesize_mixture,
    write_recipes,
)
from .sampler import PromptSamplerConfig, sample_prompt_set
