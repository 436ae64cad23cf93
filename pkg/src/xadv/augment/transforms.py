"""The per-iteration input transforms.

Pixel level: DIM, SIM, BC, TIM, SIA. Semantic level: Admix, AIP, TATM.
Each transform takes a float64 H x W x 3 array and a ``numpy.random.Generator``
and returns a new array of the same shape with values in [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..image import resize_bilinear
from .patches import paste_patch
from .typography import render_typography
from .words import sample_words


def diverse_input(x, rng, *, prob=0.7, low=0.9, high=1.0):
    """DIM: shrink by a random factor, zero-pad back at a random offset."""
    if rng.random() >= prob:
        return x.copy()
    h, w = x.shape[:2]
    f = rng.uniform(low, high)
    nh, nw = max(1, int(round(f * h))), max(1, int(round(f * w)))
    small = resize_bilinear(x, nh, nw)
    top = int(rng.integers(0, h - nh + 1))
    left = int(rng.integers(0, w - nw + 1))
    out = np.zeros_like(x)
    out[top:top + nh, left:left + nw] = small
    return out


def scale_invariant(x, rng, *, levels=5):
    """SIM: divide intensities by 2**i, i uniform in {0, ..., levels-1}."""
    i = int(rng.integers(0, levels))
    return x / (2.0 ** i)


def brightness(x, rng, *, low=0.7, high=1.3):
    """BC: multiply by a uniform factor, then clamp."""
    f = low if low == high else rng.uniform(low, high)
    return np.clip(x * f, 0.0, 1.0)


def translate_wrap(x, rng, *, max_frac=0.1):
    """TIM: integer shift with wrap-around; out[r, c] = x[(r - dy) % H, (c - dx) % W]."""
    h, w = x.shape[:2]
    my, mx = int(max_frac * h), int(max_frac * w)
    dy = int(rng.integers(-my, my + 1))
    dx = int(rng.integers(-mx, mx + 1))
    return np.roll(x, (dy, dx), axis=(0, 1))


SIA_OPS = ("identity", "hflip", "vflip", "rot180", "scale", "shift")


def _sia_block(block, op, rng, scale, shift_frac):
    if op == "identity":
        return block
    if op == "hflip":
        return block[:, ::-1]
    if op == "vflip":
        return block[::-1, :]
    if op == "rot180":
        return block[::-1, ::-1]
    bh, bw = block.shape[:2]
    if op == "scale":
        nh, nw = max(1, int(round(scale * bh))), max(1, int(round(scale * bw)))
        out = np.zeros_like(block)
        top, left = (bh - nh) // 2, (bw - nw) // 2
        out[top:top + nh, left:left + nw] = resize_bilinear(block, nh, nw)
        return out
    if op == "shift":
        my, mx = int(shift_frac * bh), int(shift_frac * bw)
        dy = int(rng.integers(-my, my + 1))
        dx = int(rng.integers(-mx, mx + 1))
        return np.roll(block, (dy, dx), axis=(0, 1))
    raise ValueError(f"unknown SIA op {op!r}")


def structure_invariant(x, rng, *, grid=3, ops=SIA_OPS, scale=0.8, shift_frac=0.2):
    """SIA: split into a grid of blocks and transform each block independently."""
    h, w = x.shape[:2]
    out = np.empty_like(x)
    rows = np.array_split(np.arange(h), grid)
    cols = np.array_split(np.arange(w), grid)
    for r in rows:
        for c in cols:
            if r.size == 0 or c.size == 0:
                continue
            block = x[r[0]:r[-1] + 1, c[0]:c[-1] + 1]
            op = ops[int(rng.integers(0, len(ops)))]
            out[r[0]:r[-1] + 1, c[0]:c[-1] + 1] = _sia_block(block, op, rng, scale, shift_frac)
    return out


def admix(x, rng, patches, *, strength=0.2):
    """Admix: x + strength * (another image resized to full size), clamped."""
    other = patches.draw(rng).data
    other = resize_bilinear(other, x.shape[0], x.shape[1])
    return np.clip(x + strength * other, 0.0, 1.0)


def add_image_patch(x, rng, patches, *, count=1, scale=0.2):
    """AIP: paste ``count`` random patches at random positions."""
    out = x
    for _ in range(count):
        out = paste_patch(out, patches.draw(rng), scale, rng)
    return out


def typographic(x, rng, words, *, amount=3, pos="noun", style=None, fixed_words=None):
    """TATM: print ``amount`` random words from the word set."""
    chosen = fixed_words if fixed_words is not None else sample_words(words, pos, amount, rng)
    return render_typography(x, chosen, style, rng)
