import json
from importlib import resources

import numpy as np
import pytest
from PIL import Image

from xadv.augment import TypographyError, TypographyStyle, load_atlas, render_typography
from xadv.augment.typography import MIN_GLYPH_HEIGHT, glyph_height


def _atlas_oracle(word):
    base = resources.files("xadv") / "data" / "font"
    metrics = json.loads((base / "metrics.json").read_text())
    with resources.as_file(base / "atlas.png") as p, Image.open(p) as im:
        sheet = np.asarray(im) >= 128
    parts = []
    for ch in word:
        x, y, w, h = metrics["glyphs"][str(ord(ch))]
        parts.append(sheet[y:y + h, x:x + w])
    return np.hstack(parts)


def _nearest(mask, height):
    h, w = mask.shape
    width = round(w * height / h)
    out = np.zeros((height, width), dtype=bool)
    for i in range(height):
        for j in range(width):
            out[i, j] = mask[min(int((i + 0.5) * h / height), h - 1), min(int((j + 0.5) * w / width), w - 1)]
    return out


def test_atlas_covers_printable_ascii():
    atlas = load_atlas()
    for code in range(32, 127):
        assert code in atlas.rects
    assert atlas.glyph("é").shape == atlas.glyph("A").shape
    assert atlas.glyph("A").any() and not atlas.glyph(" ").any()


def test_style_validation():
    with pytest.raises(TypographyError):
        TypographyStyle(relative_height=0.6)
    with pytest.raises(TypographyError):
        TypographyStyle(fill=(1.2, 0, 0))
    with pytest.raises(TypographyError):
        TypographyStyle(outline_width_px=-1)


def test_glyph_height_minimum():
    assert glyph_height(32, TypographyStyle()) == MIN_GLYPH_HEIGHT
    assert glyph_height(224, TypographyStyle()) == 18


def test_single_word_locality():
    x = np.random.default_rng(0).uniform(0.2, 0.8, size=(224, 224, 3))
    out = render_typography(x, ["a"], rng=np.random.default_rng(3))
    changed = np.any(out != x, axis=2)
    ys, xs = np.nonzero(changed)
    h = glyph_height(224, TypographyStyle())
    # one glyph plus a 1 px outline on each side
    assert ys.max() - ys.min() < h + 2
    assert xs.max() - xs.min() < round(6 * h / 11) + 2
    assert changed.sum() > 0


def test_determinism():
    x = np.full((64, 64, 3), 0.5)
    a = render_typography(x, ["dog", "cat"], rng=np.random.default_rng(9))
    b = render_typography(x, ["dog", "cat"], rng=np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()


def test_dog_pixel_count_matches_atlas():
    style = TypographyStyle(relative_height=0.25, outline_width_px=0)
    x = np.zeros((64, 64, 3))
    out = render_typography(x, ["dog"], style, np.random.default_rng(1))
    expected = _nearest(_atlas_oracle("dog"), 16).sum()
    assert np.count_nonzero(np.any(out != x, axis=2)) == expected


def test_rejects_empty_and_oversized():
    x = np.zeros((32, 32, 3))
    with pytest.raises(TypographyError):
        render_typography(x, [], rng=np.random.default_rng(0))
    with pytest.raises(TypographyError, match="needs"):
        render_typography(x, ["extraordinarily"], rng=np.random.default_rng(0))
    with pytest.raises(TypographyError):
        render_typography(x, ["a"])


def test_fill_and_outline_colors():
    style = TypographyStyle(relative_height=0.3, fill=(1.0, 0.0, 0.0), outline=(0.0, 0.0, 1.0))
    x = np.full((40, 40, 3), 0.5)
    out = render_typography(x, ["H"], style, np.random.default_rng(0))
    colors = {tuple(c) for c in out.reshape(-1, 3)}
    assert colors == {(0.5, 0.5, 0.5), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)}
