"""Per-iteration input augmentation (pixel level and semantic level)."""

from .patches import PatchSet, PatchSetError, load_patch_set, paste_patch
from .spec import (
    ALL_METHODS,
    PIXEL_METHODS,
    SEMANTIC_METHODS,
    AugmentationError,
    AugmentationSpec,
    Augmenter,
    Method,
    augment,
)
from .typography import FontAtlas, TypographyError, TypographyStyle, load_atlas, render_typography
from .words import WordEntry, WordSet, WordSetError, bundled_word_set, load_word_set, sample_words

__all__ = [
    "ALL_METHODS", "PIXEL_METHODS", "SEMANTIC_METHODS", "AugmentationError",
    "AugmentationSpec", "Augmenter", "FontAtlas", "Method", "PatchSet", "PatchSetError",
    "TypographyError", "TypographyStyle", "WordEntry", "WordSet", "WordSetError",
    "augment", "bundled_word_set", "load_atlas", "load_patch_set", "load_word_set",
    "paste_patch", "render_typography", "sample_words",
]
