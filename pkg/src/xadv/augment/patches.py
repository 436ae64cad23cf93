"""Image patch sets and patch compositing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..image import ImageBuffer, ImageError, as_array, load_image, resize_bilinear

PATCH_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff", ".webp"}


class PatchSetError(ValueError):
    pass


@dataclass(frozen=True)
class PatchSet:
    entries: tuple
    source: str = ""
    labels: tuple = ()

    def __post_init__(self):
        if not self.entries:
            raise PatchSetError(f"patch set {self.source or '<memory>'} is empty")
        for p in self.entries:
            if not isinstance(p, ImageBuffer):
                raise PatchSetError("patch set entries must be ImageBuffer instances")

    def __len__(self):
        return len(self.entries)

    def draw(self, rng) -> ImageBuffer:
        return self.entries[int(rng.integers(0, len(self.entries)))]


def load_patch_set(path) -> PatchSet:
    """Load every RGB image in ``path`` (sorted by file name)."""
    path = Path(path)
    if not path.is_dir():
        raise PatchSetError(f"patch directory not found: {path}")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in PATCH_SUFFIXES)
    entries, labels = [], []
    for f in files:
        try:
            entries.append(load_image(f))
        except ImageError as exc:
            raise PatchSetError(f"bad patch {f.name}: {exc}") from exc
        labels.append(f.stem)
    if not entries:
        raise PatchSetError(f"no loadable images in {path}")
    return PatchSet(tuple(entries), str(path), tuple(labels))


def patch_size(patch_shape, image_shape, scale):
    """Resized patch size: longer side = scale * min(H, W), aspect kept."""
    ph, pw = patch_shape[:2]
    target = scale * min(image_shape[:2])
    if ph >= pw:
        nh = max(1, int(round(target)))
        nw = max(1, int(round(target * pw / ph)))
    else:
        nw = max(1, int(round(target)))
        nh = max(1, int(round(target * ph / pw)))
    return nh, nw


def paste_patch(image, patch, scale, rng, *, return_rect=False):
    """Overwrite a uniformly placed rectangle of ``image`` with the resized patch."""
    if not 0 < scale <= 0.5:
        raise PatchSetError(f"scale must be in (0, 0.5], got {scale}")
    p = as_array(patch)
    if p.ndim != 3 or p.shape[0] == 0 or p.shape[1] == 0:
        raise PatchSetError(f"degenerate patch of shape {p.shape}")
    out = np.array(as_array(image), dtype=np.float64)
    h, w = out.shape[:2]
    nh, nw = patch_size(p.shape, out.shape, scale)
    resized = np.clip(resize_bilinear(p, nh, nw), 0.0, 1.0)
    y = int(rng.integers(0, h - nh + 1))
    x = int(rng.integers(0, w - nw + 1))
    out[y:y + nh, x:x + nw] = resized
    result = ImageBuffer(out, copy=False) if isinstance(image, ImageBuffer) else out
    if return_rect:
        return result, (y, x, nh, nw)
    return result
