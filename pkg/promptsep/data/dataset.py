import numpy as np
from torch.utils.data import Dataset, IterableDataset, get_worker_info

from .mixer import MixtureEngine, MixtureExample, Recipe, replay_recipe


def epoch_rng(seed: int, epoch: int, worker_id: int = 0) -> np.random.Generator:
    """Independent stream per (seed, epoch, worker); an epoch can be regenerated on resume"""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, worker_id]))


class MixtureStream(IterableDataset):
    """
    examples_per_epoch freshly synthesized examples per epoch, split across
    DataLoader workers. Examples carry different prompt counts, so load with
    batch_size=None and group them in the training loop.
    """

    def __init__(self, engine: MixtureEngine, examples_per_epoch: int, seed: int = 0):
        super().__init__()
        self.engine = engine
        self.examples_per_epoch = examples_per_epoch
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self):
        return self.examples_per_epoch

    def __iter__(self):
        info = get_worker_info()
        worker_id, num_workers = (0, 1) if info is None else (info.id, info.num_workers)
        rng = epoch_rng(self.seed, self.epoch, worker_id)
        for _ in range(worker_id, self.examples_per_epoch, num_workers):
            yield self.engine.sample(rng)


class RecipeDataset(Dataset):
    """Fixed examples replayed from recipes (validation and evaluation sets)"""

    def __init__(self, recipes: list[Recipe]):
        self.recipes = recipes

    def __len__(self):
        return len(self.recipes)

    def __getitem__(self, index: int) -> MixtureExample:
        return replay_recipe(self.recipes[index])
