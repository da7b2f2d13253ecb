"""Synthetic data, dataset files, pair sampling and augmentation."""

from .augment import AugmentConfig, single_view_augment, two_view_augment
from .io import FormatError, read_dataset, read_pnm, write_dataset, write_pnm
from .pairs import PairSampler, PairSamplingError, sample_pair
from .synth import Dataset, GenerationError, GlyphSpec, default_glyphs, generate_dataset

__all__ = [
    "AugmentConfig", "Dataset", "FormatError", "GenerationError", "GlyphSpec", "PairSampler",
    "PairSamplingError", "default_glyphs", "generate_dataset", "read_dataset", "read_pnm",
    "sample_pair", "single_view_augment", "two_view_augment", "write_dataset", "write_pnm",
]
