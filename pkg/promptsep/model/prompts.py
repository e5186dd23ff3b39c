import torch
from torch import nn

from ..core.types import PromptCategory, PromptSet


class PromptTable(nn.Module):
    """One learnable D-vector per prompt category"""

    def __init__(self, embed_dim: int, init_std: float = 0.02):
        super().__init__()
        self.table = nn.Embedding(len(PromptCategory), embed_dim)
        nn.init.normal_(self.table.weight, std=init_std)

    def forward(self, prompts: PromptSet) -> torch.Tensor:
        """(N, D) prompt vectors in prompt order"""
        rows = torch.tensor(prompts.indices, dtype=torch.long, device=self.table.weight.device)
        return self.table(rows)

    def by_category(self) -> dict[str, torch.Tensor]:
        weight = self.table.weight.detach().cpu()
        return {category.value: weight[category.index].clone() for category in PromptCategory}
