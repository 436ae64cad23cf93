"""Typographic text rendering from the bundled bitmap glyph atlas.

No font engine is involved, so a given (image, words, style, seed) renders
to the same bytes on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from PIL import Image

from ..image import ImageBuffer, as_array

# Glyph lines are never scaled below this height; anything smaller is unreadable.
MIN_GLYPH_HEIGHT = 5


class TypographyError(ValueError):
    pass


@dataclass(frozen=True)
class FontAtlas:
    name: str
    sheet: np.ndarray  # bool coverage mask of the whole glyph sheet
    line_height: int
    rects: dict
    fallback: tuple

    def glyph(self, ch) -> np.ndarray:
        x, y, w, h = self.rects.get(ord(ch), self.fallback)
        return self.sheet[y:y + h, x:x + w]

    def word_mask(self, word) -> np.ndarray:
        """Coverage of ``word`` at native atlas resolution."""
        return np.concatenate([self.glyph(ch) for ch in word], axis=1)


@lru_cache(maxsize=None)
def load_atlas(name="default") -> FontAtlas:
    base = resources.files("xadv") / "data" / "font"
    metrics = json.loads((base / "metrics.json").read_text(encoding="utf-8"))
    with resources.as_file(base / "atlas.png") as p, Image.open(p) as im:
        sheet = np.asarray(im.convert("L")) >= 128
    sheet.flags.writeable = False
    rects = {int(k): tuple(v) for k, v in metrics["glyphs"].items()}
    return FontAtlas(
        metrics["name"], sheet, int(metrics["line_height"]), rects, tuple(metrics["fallback"])
    )


@dataclass(frozen=True)
class TypographyStyle:
    font_atlas: str = "default"
    relative_height: float = 0.08
    fill: tuple = (1.0, 1.0, 1.0)
    outline: tuple = (0.0, 0.0, 0.0)
    outline_width_px: int = 1

    def __post_init__(self):
        if not 0 < self.relative_height <= 0.5:
            raise TypographyError(f"relative_height must be in (0, 0.5], got {self.relative_height}")
        for name in ("fill", "outline"):
            color = getattr(self, name)
            if len(color) != 3 or not all(0.0 <= c <= 1.0 for c in color):
                raise TypographyError(f"{name} must be an RGB triple in [0, 1], got {color}")
        if self.outline_width_px < 0:
            raise TypographyError("outline_width_px must be non-negative")


def glyph_height(image_height, style: TypographyStyle) -> int:
    return max(MIN_GLYPH_HEIGHT, int(round(style.relative_height * image_height)))


def scale_mask(mask, height) -> np.ndarray:
    """Nearest-neighbour rescale of a coverage mask to ``height`` rows."""
    h, w = mask.shape
    width = max(1, int(round(w * height / h)))
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return mask[rows][:, cols]


def _dilate(mask, r):
    if r == 0:
        return mask.copy()
    h, w = mask.shape
    padded = np.pad(mask, 2 * r)
    out = np.zeros((h + 2 * r, w + 2 * r), dtype=bool)
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out |= padded[dy:dy + h + 2 * r, dx:dx + w + 2 * r]
    return out


def word_stamp(word, image_height, style: TypographyStyle):
    """Fill and outline masks of the rendered word, sharing one footprint."""
    atlas = load_atlas(style.font_atlas)
    fill = scale_mask(atlas.word_mask(word), glyph_height(image_height, style))
    r = style.outline_width_px
    fill_padded = np.pad(fill, r)
    outline = _dilate(fill, r) & ~fill_padded
    return fill_padded, outline


def render_typography(image, words, style: TypographyStyle | None = None, rng=None):
    """Print each word at a uniformly sampled position fully inside the image.

    Pixels outside the glyph (and outline) coverage are left untouched.
    Raises ``TypographyError`` when a word does not fit at the configured size.
    """
    if not words:
        raise TypographyError("at least one word is required")
    if rng is None:
        raise TypographyError("a seeded random generator is required")
    style = style or TypographyStyle()
    out = np.array(as_array(image), dtype=np.float64)
    h, w = out.shape[:2]
    fill_color = np.asarray(style.fill, dtype=np.float64)
    outline_color = np.asarray(style.outline, dtype=np.float64)
    for word in words:
        fill, outline = word_stamp(word, h, style)
        fh, fw = fill.shape
        if fh > h or fw > w:
            raise TypographyError(
                f"word {word!r} needs {fh}x{fw} px, image is {h}x{w}; "
                f"lower relative_height (glyphs never go below {MIN_GLYPH_HEIGHT} px)"
            )
        y = int(rng.integers(0, h - fh + 1))
        x = int(rng.integers(0, w - fw + 1))
        region = out[y:y + fh, x:x + fw]
        region[outline] = outline_color
        region[fill] = fill_color
    if isinstance(image, ImageBuffer):
        return ImageBuffer(out, copy=False)
    return out
