"""Canonical (mu, lambda)-ES and OpenAI-style ES for black-box policy search."""

from .core import NoiseIndex, NoiseTable, RngStream, draw_offspring_indices, noise_slice, noise_table_create
from .es_canonical import CanonicalConfig, run_canonical
from .es_openai import OpenAIConfig, run_openai
from .shaping import normalized_ranks, recombination_weights

__version__ = "0.1.0"

__all__ = [
    "CanonicalConfig", "NoiseIndex", "NoiseTable", "OpenAIConfig", "RngStream", "draw_offspring_indices",
    "noise_slice", "noise_table_create", "normalized_ranks", "recombination_weights", "run_canonical",
    "run_openai",
]
