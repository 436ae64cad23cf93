"""Projected sign-gradient attack with per-iteration input augmentation.

Each iteration draws a fresh augmentation ``x_t`` of the clean image, scores
``clamp(x_t + delta)`` on the surrogate(s) and takes one signed ascent step
on ``delta``, which is then projected back onto the L-infinity ball. The
returned adversarial image is ``clamp(x + delta)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .augment import AugmentationSpec, Augmenter
from .image import ImageBuffer, Perturbation, as_array, png_bytes
from .image import _atomic_write_bytes
from .models.base import AdapterError, objective_and_gradient
from .targets import DEFAULT_PROMPT

AGGREGATES = ("mean", "sum")
INITS = ("uniform", "zero")


class AttackError(RuntimeError):
    """An attack run aborted; no result or manifest is produced."""

    def __init__(self, message, *, iteration=None, trace=(), identifier=None):
        super().__init__(message)
        self.iteration = iteration
        self.partial_trace = list(trace)
        self.identifier = identifier


@dataclass(frozen=True)
class AttackConfig:
    target: str
    epsilon: float = 16 / 255
    alpha: float = 1 / 255
    iterations: int = 1000
    prompt: str = DEFAULT_PROMPT
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    seed: int = 0
    init: str = "uniform"
    aggregate: str = "mean"

    def __post_init__(self):
        if not self.target:
            raise ValueError("target must be non-empty")
        if not (0 < self.alpha <= self.epsilon <= 1):
            raise ValueError(
                f"need 0 < alpha <= epsilon <= 1, got alpha={self.alpha}, epsilon={self.epsilon}"
            )
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValueError(f"iterations must be a non-negative integer, got {self.iterations}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}")

    def to_dict(self):
        return {
            "target": self.target,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "iterations": int(self.iterations),
            "prompt": self.prompt,
            "seed": int(self.seed),
            "init": self.init,
            "aggregate": self.aggregate,
            "augmentation": self.augmentation.describe(),
        }


@dataclass
class AdversarialResult:
    adversarial_image: ImageBuffer
    delta: Perturbation
    objective_trace: list
    config: AttackConfig
    surrogate_ids: list
    wall_time_s: float
    final_objective: float | None = None


def _identifier(model):
    return getattr(model, "identifier", type(model).__name__)


def _aggregate_step(surrogates, x_adv, prompt, target, aggregate, iteration, trace):
    value_sum = 0.0
    grad_sum = None
    for model in surrogates:
        try:
            value, grad = objective_and_gradient(model, x_adv, prompt, target)
        except AdapterError as exc:
            raise AttackError(
                f"surrogate {exc.identifier} failed at iteration {iteration}: {exc}",
                iteration=iteration, trace=trace, identifier=exc.identifier,
            ) from exc
        if not np.isfinite(grad).all():
            raise AttackError(
                f"non-finite gradient from {_identifier(model)} at iteration {iteration}",
                iteration=iteration, trace=trace, identifier=_identifier(model),
            )
        value_sum = value_sum + value
        grad_sum = grad if grad_sum is None else grad_sum + grad
    if aggregate == "mean":
        m = len(surrogates)
        return value_sum / m, grad_sum / m
    return value_sum, grad_sum


def _run(surrogates, image, config: AttackConfig, rng, on_step, check_budget):
    if not surrogates:
        raise ValueError("at least one surrogate is required")
    x = as_array(image)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    eps, alpha = float(config.epsilon), float(config.alpha)
    start = time.perf_counter()

    if config.init == "uniform":
        delta = rng.uniform(-eps, eps, size=x.shape)
    else:
        delta = np.zeros(x.shape)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    flat = delta.reshape(-1)
    augmenter = Augmenter(config.augmentation, rng)

    trace = []
    for i in range(int(config.iterations)):
        x_t = augmenter(x, rng)
        x_adv = np.clip(x_t + delta, 0.0, 1.0)
        value, grad = _aggregate_step(
            surrogates, x_adv, config.prompt, config.target, config.aggregate, i, trace
        )
        trace.append(value)
        linf = kernels.sign_step(flat, np.ascontiguousarray(grad, dtype=np.float64).reshape(-1), alpha, eps)
        if check_budget and not linf <= eps:
            raise AssertionError(f"budget violated at iteration {i}: {linf} > {eps}")
        if on_step is not None:
            on_step(i, delta, value)

    adv = ImageBuffer(np.clip(x + delta, 0.0, 1.0), copy=False)
    return AdversarialResult(
        adversarial_image=adv,
        delta=Perturbation(delta, eps),
        objective_trace=trace,
        config=config,
        surrogate_ids=[_identifier(m) for m in surrogates],
        wall_time_s=time.perf_counter() - start,
    )


def pgd_attack(surrogate, image, config: AttackConfig, rng=None, *, on_step=None, check_budget=False):
    """Single-surrogate attack.

    ``rng`` defaults to ``numpy.random.default_rng(config.seed)``; the same
    stream drives the initialization and every augmentation draw.
    ``on_step(i, delta, objective)`` is called after each projected update.
    """
    return _run([surrogate], image, config, rng, on_step, check_budget)


def ensemble_attack(surrogates, image, config: AttackConfig, rng=None, *, on_step=None,
                    check_budget=False):
    """Attack several surrogates at once.

    Per iteration the objectives and gradients are averaged over the models
    (or summed with ``config.aggregate == "sum"``) before the shared step.
    """
    return _run(list(surrogates), image, config, rng, on_step, check_budget)


def sha256_hex(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def manifest_dict(result: AdversarialResult, png_path=None, image_id=None, relative_to=None):
    """Manifest contents. ``relative_to`` makes the recorded PNG path relative
    to that directory, so manifests do not depend on where a run was written."""
    if png_path is not None and Path(png_path).exists():
        digest = sha256_hex(Path(png_path).read_bytes())
    else:
        digest = sha256_hex(png_bytes(result.adversarial_image))
    return {
        "toolkit": "xadv",
        "version": __version__,
        "image_id": image_id,
        "config": result.config.to_dict(),
        "surrogate_ids": list(result.surrogate_ids),
        "objective_trace": [float(v) for v in result.objective_trace],
        "adversarial_png": (
            None if png_path is None
            else os.path.relpath(png_path, relative_to) if relative_to is not None
            else str(png_path)
        ),
        "png_sha256": digest,
    }


def write_manifest(result: AdversarialResult, path, png_path=None, image_id=None):
    """Write the run manifest as JSON (atomically). Returns the manifest dict.

    The PNG path is stored relative to the manifest's directory.
    """
    if len(result.objective_trace) != result.config.iterations:
        raise AttackError("refusing to write a manifest for an incomplete run")
    path = Path(path)
    data = manifest_dict(result, png_path, image_id, relative_to=path.parent)
    if not path.parent.is_dir():
        raise OSError(f"manifest directory does not exist: {path.parent}")
    payload = (json.dumps(data, indent=2, sort_keys=True) + "\n").encode("utf-8")
    _atomic_write_bytes(path, payload)
    return data


def output_name(image_id, method, target):
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in target)
    return f"{image_id}.{method}.{safe}.png"


def final_objective(surrogates, result: AdversarialResult):
    """Mean surrogate objective of the returned adversarial image."""
    values = [
        objective_and_gradient(m, result.adversarial_image, result.config.prompt, result.config.target)[0]
        for m in surrogates
    ]
    return math.fsum(values) / len(values)
