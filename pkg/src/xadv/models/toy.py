"""Desk-scale toy vision-language stack.

A small contrastive model stands in for the surrogate MLLM: images are
area-pooled to a fixed grid, passed through one tanh layer and a linear
projection; text goes through a hashed character n-gram encoder. The
projection is fitted (ridge regression) so that procedurally generated
concept images land on the text embedding of their concept word.

Victims decode greedily from a word vocabulary. The "shared" victim reuses
the surrogate's vision encoder with its own word head (cross-LLM analogue);
the "independent" victim has its own encoder (cross-MLLM analogue).
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..augment.words import bundled_word_set
from ..image import ImageBuffer, as_array
from ..targets import HARMFUL_WORDS, MAKE_UP_WORDS, PROTECTION_WORDS

EMBED_DIM = 64
HASH_DIM = 512
POOL_GRID = 8
HIDDEN = 256
RIDGE = 1.0
# Strength of the linear readout of the image's high-pass residual, expressed
# as the largest embedding shift a sign pattern of amplitude 16/255 can cause.
HIGHPASS_CAPACITY = 1.0

STOPWORDS = frozenset(
    "a an the of and or in on at to is are this that with what picture image photo "
    "visual it its there shows show describe".split()
)

# concept -> (background rgb, pattern rgb, accent rgb, stripe angle, stripe frequency)
CONCEPTS = {
    "cat": ((0.55, 0.45, 0.35), (0.20, 0.15, 0.10), (0.95, 0.75, 0.30), 0.0, 3.0),
    "dog": ((0.70, 0.55, 0.30), (0.40, 0.25, 0.10), (0.10, 0.10, 0.10), 90.0, 2.0),
    "flower": ((0.20, 0.55, 0.20), (0.95, 0.30, 0.60), (1.00, 0.90, 0.20), 45.0, 5.0),
    "table": ((0.45, 0.30, 0.15), (0.65, 0.45, 0.25), (0.90, 0.90, 0.85), 0.0, 6.0),
    "car": ((0.60, 0.60, 0.65), (0.80, 0.10, 0.10), (0.10, 0.10, 0.15), 90.0, 1.5),
    "tree": ((0.55, 0.75, 0.95), (0.15, 0.45, 0.15), (0.35, 0.25, 0.10), 135.0, 2.5),
    "house": ((0.60, 0.80, 0.95), (0.85, 0.80, 0.70), (0.60, 0.15, 0.10), 0.0, 1.0),
    "bird": ((0.50, 0.75, 1.00), (0.20, 0.35, 0.80), (1.00, 0.60, 0.10), 60.0, 4.0),
    "boat": ((0.10, 0.35, 0.65), (0.95, 0.95, 0.95), (0.75, 0.20, 0.20), 0.0, 4.5),
    "apple": ((0.90, 0.88, 0.80), (0.85, 0.10, 0.15), (0.30, 0.60, 0.15), 30.0, 1.0),
    "fish": ((0.10, 0.45, 0.55), (1.00, 0.55, 0.10), (0.95, 0.95, 0.95), 150.0, 3.5),
    "chair": ((0.85, 0.85, 0.80), (0.30, 0.20, 0.35), (0.55, 0.35, 0.20), 90.0, 5.5),
}

_TOKEN = re.compile(r"[a-z0-9]+")


def tokens(text):
    return _TOKEN.findall(text.lower())


def content_tokens(text):
    toks = tokens(text)
    kept = [t for t in toks if t not in STOPWORDS]
    return kept or toks


def char_ngram_features(word, dim=HASH_DIM):
    """Signed-hash bag of character 1/2/3-grams of ``<word>``."""
    v = np.zeros(dim)
    padded = f"<{word}>"
    for n in (1, 2, 3):
        for i in range(len(padded) - n + 1):
            h = zlib.crc32(padded[i:i + n].encode("utf-8"))
            v[h % dim] += 1.0 if (h >> 31) & 1 else -1.0
    return v


def text_features(text, dim=HASH_DIM):
    toks = content_tokens(text)
    if not toks:
        raise ValueError(f"no tokens in text {text!r}")
    return sum(char_ngram_features(t, dim) for t in toks)


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero embedding")
    return v / n


class TextEncoder:
    """Bag-of-character-n-grams followed by a seeded random projection."""

    def __init__(self, seed, dim=EMBED_DIM):
        rng = np.random.default_rng([seed, 1])
        self.proj = rng.standard_normal((dim, HASH_DIM)) / np.sqrt(dim)
        self._cache = {}

    def __call__(self, text):
        v = self._cache.get(text)
        if v is None:
            v = _unit(self.proj @ text_features(text))
            v.flags.writeable = False
            self._cache[text] = v
        return v


@lru_cache(maxsize=64)
def _area_matrix(n_in, n_out):
    """Row-stochastic area-averaging operator from n_in samples to n_out bins."""
    m = np.zeros((n_out, n_in))
    edges = np.linspace(0.0, n_in, n_out + 1)
    for i in range(n_out):
        a, b = edges[i], edges[i + 1]
        for j in range(int(np.floor(a)), int(np.ceil(b))):
            m[i, j] = min(b, j + 1) - max(a, j)
        m[i] /= m[i].sum()
    m.flags.writeable = False
    return m


def highpass(x):
    """``x`` minus its 3x3 box blur, with wrap-around borders (self-adjoint)."""
    acc = np.zeros_like(x)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            acc = acc + np.roll(x, (dy, dx), axis=(0, 1))
    return x - acc / 9.0


def concept_image(concept, size=32, rng=None):
    """Procedural image of ``concept``: tinted background, stripes and an accent disc."""
    rng = rng if rng is not None else np.random.default_rng(0)
    bg, fg, accent, angle, freq = CONCEPTS[concept]
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / size
    theta = np.deg2rad(angle + rng.uniform(-12, 12))
    phase = rng.uniform(0, 2 * np.pi)
    f = freq * rng.uniform(0.85, 1.15)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * f * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    img = (1 - stripes)[..., None] * np.asarray(bg) + stripes[..., None] * np.asarray(fg)
    cy, cx = rng.uniform(0.3, 0.7, size=2)
    r = rng.uniform(0.12, 0.22)
    disc = ((yy - cy) ** 2 + (xx - cx) ** 2) < r * r
    img[disc] = accent
    img = img * rng.uniform(0.9, 1.1) + rng.normal(0, 0.03, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def training_set(size=32, per_concept=10, seed=0):
    rng = np.random.default_rng([seed, 7])
    images, labels = [], []
    for concept in CONCEPTS:
        for _ in range(per_concept):
            images.append(concept_image(concept, size, rng))
            labels.append(concept)
    return images, labels


class VisionEncoder:
    """Area pooling -> tanh layer -> fitted linear projection, plus a random
    linear readout of the high-pass residual.

    The pooled path carries the concept; the high-pass path is nearly silent
    on smooth natural images but responds strongly to pixel-level sign
    patterns, which is what makes the encoder attackable under a small
    L-infinity budget.
    """

    def __init__(self, seed, text_encoder: TextEncoder, dim=EMBED_DIM, grid=POOL_GRID,
                 hidden=HIDDEN, train_size=32, per_concept=80):
        rng = np.random.default_rng([seed, 2])
        n_in = grid * grid * 3
        self.grid = grid
        self.w1 = rng.standard_normal((hidden, n_in)) * (2.0 / np.sqrt(n_in))
        self.b1 = rng.normal(0.0, 0.5, size=hidden)
        images, labels = training_set(train_size, per_concept, seed)
        hs = self._hidden(np.stack(images))[0]
        self.seed = seed
        self.dim = dim
        self._hp_cache = {}
        ts = np.stack([text_encoder(c) for c in labels])
        ts = ts - np.stack([self._hp_embed(im) for im in images])
        # ridge fit: w2 = T^T H (H^T H + lam I)^-1
        gram = hs.T @ hs + RIDGE * np.eye(hidden)
        self.w2 = np.linalg.solve(gram, hs.T @ ts).T

    def _hp_matrix(self, shape):
        a = self._hp_cache.get(shape)
        if a is None:
            n = int(np.prod(shape))
            rng = np.random.default_rng([self.seed, 5, *shape])
            a = rng.standard_normal((self.dim, n)) * (HIGHPASS_CAPACITY / (n * (16 / 255) * 0.8))
            a.flags.writeable = False
            self._hp_cache[shape] = a
        return a

    def _hp_embed(self, x):
        return self._hp_matrix(x.shape) @ highpass(x).ravel()

    def _pool(self, x):
        # (..., H, W, 3) -> (..., grid, grid, 3)
        ry = _area_matrix(x.shape[-3], self.grid)
        rx = _area_matrix(x.shape[-2], self.grid)
        chw = np.moveaxis(x, -1, -3)
        return np.moveaxis(ry @ chw @ rx.T, -3, -1)

    def _hidden(self, x):
        x = np.asarray(x, dtype=np.float64)
        p = self._pool(x).reshape(*x.shape[:-3], -1) - 0.5
        h = np.tanh(p @ self.w1.T + self.b1)
        return h, p

    def raw(self, x):
        x = np.asarray(x, dtype=np.float64)
        h, _ = self._hidden(x)
        return self.w2 @ h + self._hp_embed(x)

    def embed(self, x):
        return _unit(self.raw(x))

    def cosine_and_grad(self, x, t):
        """cos(z(x), t) and its gradient with respect to the image."""
        x = np.asarray(x, dtype=np.float64)
        h, _ = self._hidden(x)
        z = self.w2 @ h + self._hp_embed(x)
        nz = np.linalg.norm(z)
        cos = float(z @ t) / nz
        gz = t / nz - cos * z / (nz * nz)
        ga = (self.w2.T @ gz) * (1.0 - h * h)
        gp = (self.w1.T @ ga).reshape(self.grid, self.grid, 3)
        ry = _area_matrix(x.shape[0], self.grid)
        rx = _area_matrix(x.shape[1], self.grid)
        gx = np.moveaxis(ry.T @ np.moveaxis(gp, -1, 0) @ rx, 0, -1)
        # the wrap-around high-pass operator is self-adjoint
        gx = gx + highpass((self._hp_matrix(x.shape).T @ gz).reshape(x.shape))
        return cos, gx


@dataclass
class ToySurrogate:
    """Contrastive surrogate; objective = cosine(image embedding, target text embedding)."""

    seed: int = 0
    identifier: str = "toy-surrogate"
    vision_encoder_tag: str = ""
    thread_safe: bool = True
    text: TextEncoder = field(init=False, repr=False)
    vision: VisionEncoder = field(init=False, repr=False)

    def __post_init__(self):
        self.text = TextEncoder(self.seed)
        self.vision = VisionEncoder(self.seed, self.text)
        if not self.vision_encoder_tag:
            self.vision_encoder_tag = f"toy-encoder-{self.seed}"

    def objective_and_gradient(self, image, prompt, target):
        return self.vision.cosine_and_grad(as_array(image), self.text(target))

    def objective(self, image, target):
        return self.objective_and_gradient(image, "", target)[0]

    # scorer interface, so the surrogate can also be used for analysis
    def embed_image(self, image):
        return self.vision.embed(as_array(image))

    def embed_text(self, text):
        return np.array(self.text(text))


def default_vocabulary():
    words = list(CONCEPTS)
    for w in bundled_word_set("nouns").words:
        if w not in words:
            words.append(w)
    for w in HARMFUL_WORDS + PROTECTION_WORDS + MAKE_UP_WORDS:
        if w not in words:
            words.append(w)
    return tuple(words)


class ToyVictim:
    """Greedy word decoder on top of a vision encoder.

    The head scores every vocabulary word by cosine against the image
    embedding (nudged by the prompt) and answers with the best one. Its word
    vectors are the shared text space plus head-specific noise, so two heads
    agree on meaning without being identical.
    """

    deterministic = True
    thread_safe = True

    def __init__(self, vision: VisionEncoder, text: TextEncoder, *, identifier,
                 vision_encoder_tag, head_seed, vocabulary=None, head_noise=0.35,
                 prompt_weight=0.1):
        self.identifier = identifier
        self.vision_encoder_tag = vision_encoder_tag
        self.vision = vision
        self.vocabulary = tuple(vocabulary or default_vocabulary())
        rng = np.random.default_rng([head_seed, 3])
        base = np.stack([text(w) for w in self.vocabulary])
        noise = rng.standard_normal(base.shape)
        noise /= np.linalg.norm(noise, axis=1, keepdims=True)
        table = base + head_noise * noise
        self.table = table / np.linalg.norm(table, axis=1, keepdims=True)
        self._prompt_proj = rng.standard_normal((base.shape[1], HASH_DIM)) / np.sqrt(HASH_DIM)
        self.prompt_weight = prompt_weight

    def _prompt_vec(self, prompt):
        if not prompt or not tokens(prompt):
            return 0.0
        return _unit(self._prompt_proj @ text_features(prompt))

    def scores(self, image, prompt=""):
        q = self.vision.embed(as_array(image)) + self.prompt_weight * self._prompt_vec(prompt)
        return self.table @ _unit(q)

    def top_word(self, image, prompt=""):
        return self.vocabulary[int(np.argmax(self.scores(image, prompt)))]

    def generate(self, image, prompt):
        return caption_for(self.top_word(image, prompt))


def caption_for(word):
    article = "an" if word[0] in "aeiou" else "a"
    return f"a photo of {article} {word}."


class ToyScorer:
    """Joint-embedding scorer built from an independently seeded toy model."""

    thread_safe = True

    def __init__(self, seed=101, identifier="toy-clip"):
        self.identifier = identifier
        self.text = TextEncoder(seed)
        self.vision = VisionEncoder(seed, self.text)

    def embed_image(self, image):
        return self.vision.embed(as_array(image))

    def embed_text(self, text):
        return np.array(self.text(text))


@dataclass
class ToyStack:
    surrogate: ToySurrogate
    shared_victim: ToyVictim
    independent_victim: ToyVictim
    scorer: ToyScorer

    @property
    def victims(self):
        return [self.shared_victim, self.independent_victim]


@lru_cache(maxsize=8)
def build_toy_stack(seed=0) -> ToyStack:
    """Surrogate, both victims and the scorer, all derived from ``seed``."""
    surrogate = ToySurrogate(seed=seed)
    shared = ToyVictim(
        surrogate.vision, surrogate.text,
        identifier="toy-victim-shared", vision_encoder_tag=surrogate.vision_encoder_tag,
        head_seed=seed + 1,
    )
    independent_vision = VisionEncoder(seed + 50, surrogate.text)
    independent = ToyVictim(
        independent_vision, surrogate.text,
        identifier="toy-victim-independent", vision_encoder_tag=f"toy-encoder-{seed + 50}",
        head_seed=seed + 2,
    )
    return ToyStack(surrogate, shared, independent, ToyScorer(seed + 101))


def fixture_images(count, size=32, seed=1000, concepts=None):
    """Held-out ``(image_id, ImageBuffer, concept)`` triples cycling through the concepts."""
    names = list(concepts or CONCEPTS)
    rng = np.random.default_rng([seed, 11])
    out = []
    for i in range(count):
        concept = names[i % len(names)]
        out.append((f"{concept}_{i:03d}", ImageBuffer(concept_image(concept, size, rng), copy=False), concept))
    return out


def concept_patches(size=32, seed=2000):
    """One clean image per concept, usable as an AIP/Admix patch set."""
    from ..augment.patches import PatchSet

    rng = np.random.default_rng([seed, 13])
    entries, labels = [], []
    for concept in CONCEPTS:
        entries.append(ImageBuffer(concept_image(concept, size, rng), copy=False))
        labels.append(concept)
    return PatchSet(tuple(entries), "toy:concepts", tuple(labels))


class QuadraticSurrogate:
    """Separable objective ``-||x - t||^2`` toward a fixed image ``t``.

    The target string is ignored. Useful for checking sign dynamics against a
    per-coordinate simulation.
    """

    thread_safe = True
    vision_encoder_tag = "quadratic"

    def __init__(self, goal, identifier="quadratic"):
        self.goal = np.array(goal, dtype=np.float64)
        self.identifier = identifier

    def objective_and_gradient(self, image, prompt, target):
        d = as_array(image) - self.goal
        return -float(np.sum(d * d)), -2.0 * d


class LinearSurrogate:
    """Objective ``<w, x>``; ``negated()`` gives the exactly opposite model."""

    thread_safe = True
    vision_encoder_tag = "linear"

    def __init__(self, weights, identifier="linear"):
        self.weights = np.array(weights, dtype=np.float64)
        self.identifier = identifier

    def objective_and_gradient(self, image, prompt, target):
        return float(np.sum(self.weights * as_array(image))), self.weights.copy()

    def negated(self):
        return LinearSurrogate(-self.weights, self.identifier + "-neg")
