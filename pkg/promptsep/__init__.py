"""Prompt-conditioned unified source separation"""

from .core import AudioBuffer, PromptCategory, PromptSet
