"""Adapter boundaries: surrogate (objective + input gradient), victim (text
generation) and joint-embedding scorer.

Objectives are oriented for ascent: larger means closer to the target.
"""

from __future__ import annotations

import threading
from typing import Protocol, runtime_checkable

import numpy as np

from ..image import as_array


class AdapterError(RuntimeError):
    """A model adapter failed; carries the adapter identifier."""

    def __init__(self, identifier, message):
        super().__init__(f"[{identifier}] {message}")
        self.identifier = identifier


class ContractError(AdapterError):
    """An adapter returned something outside its interface contract."""


@runtime_checkable
class SurrogateModel(Protocol):
    identifier: str
    thread_safe: bool

    def objective_and_gradient(self, image: np.ndarray, prompt: str, target: str):
        """Return ``(value, gradient)``; gradient has the image's shape."""


@runtime_checkable
class VictimModel(Protocol):
    identifier: str
    vision_encoder_tag: str
    deterministic: bool

    def generate(self, image: np.ndarray, prompt: str) -> str: ...


@runtime_checkable
class EmbeddingScorer(Protocol):
    identifier: str

    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def objective_and_gradient(model, image, prompt, target):
    """Call ``model`` and enforce the surrogate contract."""
    if not target:
        raise ValueError("target must be non-empty")
    x = as_array(image)
    ident = getattr(model, "identifier", type(model).__name__)
    try:
        value, grad = model.objective_and_gradient(x, prompt, target)
    except AdapterError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise AdapterError(ident, f"objective/gradient failed: {exc}") from exc
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != x.shape:
        raise ContractError(ident, f"gradient shape {grad.shape} != image shape {x.shape}")
    value = float(value)
    if not np.isfinite(value):
        raise ContractError(ident, f"non-finite objective {value}")
    return value, grad


def generate(model, image, prompt) -> str:
    """Run victim inference; adapter failures surface with the identifier."""
    ident = getattr(model, "identifier", type(model).__name__)
    try:
        text = model.generate(as_array(image), prompt)
    except AdapterError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise AdapterError(ident, f"generation failed: {exc}") from exc
    if not isinstance(text, str):
        raise ContractError(ident, f"generate returned {type(text).__name__}, expected str")
    return text


def _unit(v, ident, what):
    v = np.asarray(v, dtype=np.float64).ravel()
    n = np.linalg.norm(v)
    if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
        raise ContractError(ident, f"{what} embedding has norm {n}, expected 1")
    return v


def embed_image(scorer, image) -> np.ndarray:
    ident = getattr(scorer, "identifier", type(scorer).__name__)
    try:
        v = scorer.embed_image(as_array(image))
    except AdapterError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise AdapterError(ident, f"image embedding failed: {exc}") from exc
    return _unit(v, ident, "image")


def embed_text(scorer, text) -> np.ndarray:
    ident = getattr(scorer, "identifier", type(scorer).__name__)
    try:
        v = scorer.embed_text(text)
    except AdapterError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise AdapterError(ident, f"text embedding failed: {exc}") from exc
    return _unit(v, ident, "text")


def is_cross_llm(surrogate, victim) -> bool:
    """Same vision encoder, different language head."""
    return getattr(surrogate, "vision_encoder_tag", None) == victim.vision_encoder_tag


class Serialized:
    """Lock-guarded proxy for adapters that do not declare thread safety."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()
        self.thread_safe = True

    def __getattr__(self, name):
        attr = getattr(self._inner, name)
        if not callable(attr):
            return attr

        def call(*args, **kwargs):
            with self._lock:
                return attr(*args, **kwargs)

        return call


def serialized(adapter):
    return adapter if getattr(adapter, "thread_safe", False) else Serialized(adapter)
