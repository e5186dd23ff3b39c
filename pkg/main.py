"""This is a demo of promptsep's capabilities so far"""

import numpy as np
import torch

from promptsep import AudioBuffer, PromptSet
from promptsep.cli.presets import format_preset_table, preset_lookup
from promptsep.core.errors import PromptSetError
from promptsep.model import ModelConfig, PromptSeparator, count_parameters

# Prompt sets: one output per prompt, in prompt order
prompts = PromptSet.parse("speech,speech,sfx-mix")
print(prompts, prompts.positions())
print()
# combination rules are checked on construction
try:
    PromptSet.parse("sfx,sfx-mix")
except PromptSetError as e:
    print(f"rejected ({e.rule}): {e}")
print()

# Task presets
print(format_preset_table())
print(preset_lookup("ss", n=3))
print()

# Full-size presets
for name in ("medium", "large"):
    model = PromptSeparator(ModelConfig.preset(name))
    print(f"{name}: {count_parameters(model):,} parameters")
print()

# Separate a toy 16 kHz mixture with an untrained small model
torch.manual_seed(0)
model = PromptSeparator(ModelConfig.preset("small")).eval()
t = np.arange(16000) / 16000
mixture = AudioBuffer(0.3 * np.sin(2 * np.pi * 220 * t) + 0.05 * np.random.randn(len(t)), 16000)
outputs = model.separate(mixture, preset_lookup("se"))
for category, audio in zip(preset_lookup("se"), outputs):
    print(category, audio.sample_rate_hz, len(audio), f"rms={audio.rms():.4f}")

print("done")
