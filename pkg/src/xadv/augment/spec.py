"""Augmentation specs and the ``augment`` dispatcher."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ..image import ImageBuffer, as_array
from . import transforms
from .patches import PatchSet
from .typography import TypographyStyle
from .words import PARTS_OF_SPEECH, WordSet, sample_words


class Method(str, enum.Enum):
    NONE = "NONE"
    DIM = "DIM"
    SIM = "SIM"
    BC = "BC"
    TIM = "TIM"
    SIA = "SIA"
    ADMIX = "ADMIX"
    AIP = "AIP"
    TATM = "TATM"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise AugmentationError(
                f"unknown augmentation method {value!r}; choose from {[m.value for m in cls]}"
            ) from None


PIXEL_METHODS = (Method.DIM, Method.SIM, Method.BC, Method.TIM, Method.SIA)
SEMANTIC_METHODS = (Method.ADMIX, Method.AIP, Method.TATM)
ALL_METHODS = PIXEL_METHODS + SEMANTIC_METHODS


class AugmentationError(ValueError):
    pass


DEFAULTS = {
    Method.NONE: {},
    Method.DIM: {"prob": 0.7, "low": 0.9, "high": 1.0},
    Method.SIM: {"levels": 5},
    Method.BC: {"low": 0.7, "high": 1.3},
    Method.TIM: {"max_frac": 0.1},
    Method.SIA: {"grid": 3, "scale": 0.8, "shift_frac": 0.2},
    Method.ADMIX: {"strength": 0.2},
    Method.AIP: {"count": 1, "scale": 0.2},
    Method.TATM: {"amount": 3, "pos": "noun", "fix_words": False},
}


def _check_range(name, v, lo, hi, lo_open=False):
    ok = (v > lo if lo_open else v >= lo) and v <= hi
    if not ok:
        raise AugmentationError(f"{name}={v} outside {'(' if lo_open else '['}{lo}, {hi}]")


def _validate(method, p):
    if method is Method.DIM:
        _check_range("prob", p["prob"], 0.0, 1.0)
        _check_range("low", p["low"], 0.0, 1.0, lo_open=True)
        _check_range("high", p["high"], p["low"], 1.0)
    elif method is Method.SIM:
        if int(p["levels"]) != p["levels"] or p["levels"] < 1:
            raise AugmentationError("levels must be a positive integer")
    elif method is Method.BC:
        _check_range("low", p["low"], 0.0, np.inf, lo_open=True)
        _check_range("high", p["high"], p["low"], np.inf)
    elif method is Method.TIM:
        _check_range("max_frac", p["max_frac"], 0.0, 0.5)
    elif method is Method.SIA:
        if int(p["grid"]) != p["grid"] or p["grid"] < 1:
            raise AugmentationError("grid must be a positive integer")
        _check_range("scale", p["scale"], 0.0, 1.0, lo_open=True)
        _check_range("shift_frac", p["shift_frac"], 0.0, 0.5)
    elif method is Method.ADMIX:
        _check_range("strength", p["strength"], 0.0, 1.0)
    elif method is Method.AIP:
        if int(p["count"]) != p["count"] or p["count"] < 1:
            raise AugmentationError("count must be a positive integer")
        _check_range("scale", p["scale"], 0.0, 0.5, lo_open=True)
    elif method is Method.TATM:
        if int(p["amount"]) != p["amount"] or p["amount"] < 1:
            raise AugmentationError("amount must be a positive integer")
        if p["pos"] is not None and p["pos"] not in PARTS_OF_SPEECH:
            raise AugmentationError(f"pos must be one of {PARTS_OF_SPEECH} or None")


@dataclass(frozen=True)
class AugmentationSpec:
    """Method tag, its parameters, and the word/patch resources it needs."""

    method: Method = Method.NONE
    params: dict = field(default_factory=dict)
    words: WordSet | None = None
    patches: PatchSet | None = None
    style: TypographyStyle | None = None

    def __post_init__(self):
        method = Method.parse(self.method)
        object.__setattr__(self, "method", method)
        unknown = set(self.params) - set(DEFAULTS[method])
        if unknown:
            raise AugmentationError(f"{method.value} does not take parameters {sorted(unknown)}")
        merged = {**DEFAULTS[method], **self.params}
        _validate(method, merged)
        object.__setattr__(self, "params", MappingProxyType(merged))

    def check_resources(self):
        if self.method in (Method.ADMIX, Method.AIP) and self.patches is None:
            raise AugmentationError(f"{self.method.value} needs a patch set")
        if self.method is Method.TATM and self.words is None:
            raise AugmentationError("TATM needs a word set")

    def describe(self) -> dict:
        out = {"method": self.method.value, "params": dict(self.params)}
        if self.words is not None:
            out["words"] = {"source": self.words.source, "count": len(self.words)}
        if self.patches is not None:
            out["patches"] = {"source": self.patches.source, "count": len(self.patches)}
        if self.style is not None and self.method is Method.TATM:
            out["style"] = {
                "relative_height": self.style.relative_height,
                "fill": list(self.style.fill),
                "outline": list(self.style.outline),
                "outline_width_px": self.style.outline_width_px,
            }
        return out


def _apply(x, spec: AugmentationSpec, rng, fixed_words=None):
    p = spec.params
    m = spec.method
    if m is Method.NONE:
        return x
    if m is Method.DIM:
        return transforms.diverse_input(x, rng, prob=p["prob"], low=p["low"], high=p["high"])
    if m is Method.SIM:
        return transforms.scale_invariant(x, rng, levels=int(p["levels"]))
    if m is Method.BC:
        return transforms.brightness(x, rng, low=p["low"], high=p["high"])
    if m is Method.TIM:
        return transforms.translate_wrap(x, rng, max_frac=p["max_frac"])
    if m is Method.SIA:
        return transforms.structure_invariant(
            x, rng, grid=int(p["grid"]), scale=p["scale"], shift_frac=p["shift_frac"]
        )
    if m is Method.ADMIX:
        return transforms.admix(x, rng, spec.patches, strength=p["strength"])
    if m is Method.AIP:
        return transforms.add_image_patch(x, rng, spec.patches, count=int(p["count"]), scale=p["scale"])
    if m is Method.TATM:
        return transforms.typographic(
            x, rng, spec.words, amount=int(p["amount"]), pos=p["pos"],
            style=spec.style, fixed_words=fixed_words,
        )
    raise AugmentationError(f"unhandled method {m}")


def augment(image, spec: AugmentationSpec, rng):
    """Apply one random draw of ``spec`` to ``image``.

    Returns the same kind of object it was given (ImageBuffer or array).
    The output always has the input's shape and values in [0, 1].
    """
    spec.check_resources()
    x = as_array(image)
    if spec.method is Method.NONE:
        return image
    out = _apply(x, spec, rng)
    if isinstance(image, ImageBuffer):
        return ImageBuffer(out, copy=False)
    return out


class Augmenter:
    """Per-run augmentation state.

    With TATM ``fix_words`` the words are drawn once, on construction, from
    the run's generator; otherwise this is a thin wrapper over ``augment``.
    """

    def __init__(self, spec: AugmentationSpec, rng):
        spec.check_resources()
        self.spec = spec
        self.fixed_words = None
        if spec.method is Method.TATM and spec.params["fix_words"]:
            self.fixed_words = sample_words(spec.words, spec.params["pos"], int(spec.params["amount"]), rng)

    def __call__(self, x, rng):
        if self.spec.method is Method.NONE:
            return x
        return _apply(x, self.spec, rng, self.fixed_words)
