"""Transferability measurement: ASR, CLIPScore, ROUGE-1 F1, Gaussian
defenses and the (image x victim x prompt) evaluation matrix.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import zlib
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .image import ImageBuffer, _atomic_write_bytes, as_array
from .models.base import AdapterError, embed_image, embed_text, generate, serialized

DEFENSE_KINDS = ("gaussian_noise", "gaussian_blur")
CSV_COLUMNS = (
    "image_id", "method", "surrogate_id", "victim_id", "prompt_id", "defense",
    "target", "hit", "clip_score", "rouge_1_f1", "response", "error",
)


def is_hit(response, target, whole_word=False):
    """Case-insensitive substring match (or whole-word match if requested)."""
    if whole_word:
        return re.search(rf"\b{re.escape(target.lower())}\b", response.lower()) is not None
    return target.lower() in response.lower()


def asr(responses, target, whole_word=False):
    """Fraction of responses containing ``target``.

    ``responses`` may hold strings or EvaluationRecords; failed records are
    skipped.
    """
    if not target:
        raise ValueError("target must be non-empty")
    texts = []
    for r in responses:
        if isinstance(r, EvaluationRecord):
            if r.error:
                continue
            r = r.response
        texts.append(r)
    if not texts:
        raise ValueError("ASR of an empty response list is undefined")
    return sum(is_hit(t, target, whole_word) for t in texts) / len(texts)


def cosine(u, v):
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def clip_score(scorer, clean_image, adv_description, w=1.0):
    """``w * max(0, cos(image, text)) * 100``; lower means more semantic drift."""
    if not adv_description:
        raise ValueError("description must be non-empty")
    u = embed_image(scorer, clean_image)
    v = embed_text(scorer, adv_description)
    return w * max(0.0, float(u @ v)) * 100.0


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def rouge_tokens(text):
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def rouge1_f1(candidate, reference):
    """Unigram F1 with clipped counts; 0.0 when either side is empty."""
    cand, ref = Counter(rouge_tokens(candidate)), Counter(rouge_tokens(reference))
    n_cand, n_ref = sum(cand.values()), sum(ref.values())
    if n_cand == 0 or n_ref == 0:
        return 0.0
    overlap = sum((cand & ref).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / n_cand, overlap / n_ref
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    noise_mean: float = 0.0
    noise_std: float = 0.005
    kernel_size: int = 3
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"defense kind must be one of {DEFENSE_KINDS}, got {self.kind!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def gaussian_kernel(size, sigma):
    """L1-normalized 1-D Gaussian taps centred on the middle element."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def apply_gaussian_noise(image, spec: DefenseSpec, rng):
    if spec.kind != "gaussian_noise":
        raise ValueError(f"expected a gaussian_noise spec, got {spec.kind}")
    x = as_array(image)
    if spec.noise_std == 0 and spec.noise_mean == 0:
        out = x.copy()
    else:
        out = np.clip(x + rng.normal(spec.noise_mean, spec.noise_std, size=x.shape), 0.0, 1.0)
    return ImageBuffer(out, copy=False) if isinstance(image, ImageBuffer) else out


def apply_gaussian_blur(image, spec: DefenseSpec):
    """Separable Gaussian blur with replicated edges."""
    if spec.kind != "gaussian_blur":
        raise ValueError(f"expected a gaussian_blur spec, got {spec.kind}")
    x = np.ascontiguousarray(as_array(image), dtype=np.float64)
    if spec.kernel_size > min(x.shape[:2]):
        raise ValueError(f"kernel size {spec.kernel_size} larger than image {x.shape[:2]}")
    k = gaussian_kernel(spec.kernel_size, spec.sigma)
    out = np.clip(np.asarray(kernels.blur_separable(x, k)), 0.0, 1.0)
    return ImageBuffer(out, copy=False) if isinstance(image, ImageBuffer) else out


def apply_defense(image, spec: DefenseSpec | None, rng=None):
    if spec is None:
        return image
    if spec.kind == "gaussian_noise":
        return apply_gaussian_noise(image, spec, rng)
    return apply_gaussian_blur(image, spec)


@dataclass
class EvaluationRecord:
    image_id: str
    method: str
    surrogate_id: str
    victim_id: str
    prompt_id: str
    defense: str
    target: str
    response: str
    hit: bool
    clip_score: float
    rouge_1_f1: float
    error: str | None = None

    @property
    def failed(self):
        return bool(self.error)


@dataclass(frozen=True)
class AdversarialItem:
    image_id: str
    image: ImageBuffer
    method: str = "unknown"
    surrogate_id: str = ""
    source_id: str | None = None

    @property
    def ref_id(self):
        return self.source_id or self.image_id


def _as_item(obj):
    if isinstance(obj, AdversarialItem):
        return obj
    return AdversarialItem(*obj)


def bundled_prompts():
    """The 100 cross-prompt variants of "describe the image"."""
    text = (resources.files("xadv") / "data" / "prompts.txt").read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def load_prompts(path):
    prompts = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not prompts:
        raise ValueError(f"no prompts in {path}")
    return prompts


def _cell_rng(seed, image_id, victim_id, prompt_index):
    return np.random.default_rng(
        [seed, zlib.crc32(image_id.encode()), zlib.crc32(victim_id.encode()), prompt_index]
    )


def evaluate_matrix(adversarial_set, victims, prompts, target, defense, scorer, clean_refs, *,
                    seed=0, parallelism=1, whole_word=False, clip_weight=1.0):
    """One record per (image, victim, prompt).

    ``clean_refs`` maps the source image id to ``(clean_image, reference)``;
    a ``None`` reference means "the victim's own answer on the clean image
    for the same prompt", which is what the ROUGE column compares against.
    The defense (if any) is applied to the image before victim inference.
    Adapter failures produce records with ``error`` set; nothing is
    fabricated in their place.
    """
    items = [_as_item(a) for a in adversarial_set]
    victims = list(victims)
    prompts = list(prompts)
    if not victims:
        raise ValueError("at least one victim is required")
    if not prompts:
        raise ValueError("at least one prompt is required")
    ids = [it.image_id for it in items]
    if len(set(ids)) != len(ids):
        raise ValueError("adversarial image ids must be unique")
    vids = [v.identifier for v in victims]
    if len(set(vids)) != len(vids):
        raise ValueError("victim identifiers must be unique")
    missing = {it.ref_id for it in items} - set(clean_refs)
    if missing:
        raise ValueError(f"no clean reference for {sorted(missing)}")
    victims = [serialized(v) for v in victims]
    scorer = serialized(scorer)
    defense_name = defense.kind if defense is not None else "none"

    ref_cache = {}

    def reference(victim, ref_id, pi):
        clean_img, ref = clean_refs[ref_id]
        if ref is not None:
            return ref
        key = (victim.identifier, ref_id, pi)
        if key not in ref_cache:
            ref_cache[key] = generate(victim, clean_img, prompts[pi])
        return ref_cache[key]

    def cell(item, victim, pi):
        base = dict(
            image_id=item.image_id, method=item.method, surrogate_id=item.surrogate_id,
            victim_id=victim.identifier, prompt_id=f"p{pi:03d}", defense=defense_name,
            target=target,
        )
        try:
            rng = _cell_rng(seed, item.image_id, victim.identifier, pi)
            img = apply_defense(item.image, defense, rng)
            response = generate(victim, img, prompts[pi])
            clean_img = clean_refs[item.ref_id][0]
            cs = clip_score(scorer, clean_img, response, clip_weight) if response else 0.0
            rg = rouge1_f1(response, reference(victim, item.ref_id, pi))
        except AdapterError as exc:
            return EvaluationRecord(**base, response="", hit=False, clip_score=math.nan,
                                    rouge_1_f1=math.nan, error=str(exc))
        return EvaluationRecord(**base, response=response, hit=is_hit(response, target, whole_word),
                                clip_score=cs, rouge_1_f1=rg)

    jobs = [(it, v, pi) for it in items for v in victims for pi in range(len(prompts))]
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(lambda j: cell(*j), jobs))
    return [cell(*j) for j in jobs]


def is_complete(records):
    return not any(r.failed for r in records)


def aggregate(records, by=("victim_id", "method")):
    """Table cells: ASR, mean CLIPScore and mean ROUGE per group.

    Always recomputed from the records passed in.
    """
    groups = defaultdict(list)
    for r in records:
        groups[tuple(getattr(r, k) for k in by)].append(r)
    out = {}
    for key, recs in sorted(groups.items()):
        ok = [r for r in recs if not r.failed]
        out[key] = {
            "n": len(recs),
            "failures": len(recs) - len(ok),
            "asr": (sum(r.hit for r in ok) / len(ok)) if ok else None,
            "clip_score": (math.fsum(r.clip_score for r in ok) / len(ok)) if ok else None,
            "rouge_1_f1": (math.fsum(r.rouge_1_f1 for r in ok) / len(ok)) if ok else None,
        }
    return out


def summary_dict(records, by=("victim_id", "method")):
    agg = aggregate(records, by)
    failures = sum(r.failed for r in records)
    return {
        "records": len(records),
        "failures": failures,
        "incomplete": failures > 0,
        "group_by": list(by),
        "groups": [dict(zip(by, key), **vals) for key, vals in agg.items()],
    }


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writeheader()
    for r in records:
        row = asdict(r)
        row["hit"] = int(r.hit)
        row["error"] = r.error or ""
        writer.writerow({k: row[k] for k in CSV_COLUMNS})
    return buf.getvalue()


def write_records_csv(records, path):
    _atomic_write_bytes(Path(path), records_to_csv(records).encode("utf-8"))


def read_records_csv(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(EvaluationRecord(
                image_id=row["image_id"], method=row["method"], surrogate_id=row["surrogate_id"],
                victim_id=row["victim_id"], prompt_id=row["prompt_id"], defense=row["defense"],
                target=row["target"], response=row["response"], hit=row["hit"] == "1",
                clip_score=float(row["clip_score"]), rouge_1_f1=float(row["rouge_1_f1"]),
                error=row["error"] or None,
            ))
    return out


def write_summary(records, path, by=("victim_id", "method")):
    data = summary_dict(records, by)
    _atomic_write_bytes(Path(path), (json.dumps(data, indent=2, allow_nan=False, default=str) + "\n").encode())
    return data


RECORD_FIELDS = tuple(f.name for f in fields(EvaluationRecord))
