"""Embedding-diversity analytics for augmentation methods.

Each method augments the clean image N times; all embeddings plus the clean
one are projected on a single shared 2-D PCA basis. Per method we report the
mean angle of the cluster around the clean point and the angular difference
between semantic-level and pixel-level methods.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentationSpec, Augmenter, Method
from .image import _atomic_write_bytes, as_array
from .models.base import AdapterError, embed_image, embed_text

PIXEL_SETS = {
    3: (Method.BC, Method.SIM, Method.TIM),
    5: (Method.BC, Method.SIM, Method.TIM, Method.SIA, Method.DIM),
}
SEMANTIC = (Method.ADMIX, Method.AIP, Method.TATM)


class AnalysisError(ValueError):
    pass


@dataclass
class PCAFit:
    mean: np.ndarray
    components: np.ndarray  # (2, D), rows are unit principal directions
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    projections: np.ndarray  # (N, 2)
    origin: np.ndarray  # (2,)

    def transform(self, vectors):
        return (np.atleast_2d(vectors) - self.mean) @ self.components.T

    def reconstruct(self, coords):
        return np.atleast_2d(coords) @ self.components + self.mean


def _fix_signs(components):
    out = components.copy()
    for i, row in enumerate(out):
        if row[np.argmax(np.abs(row))] < 0:
            out[i] = -row
    return out


def pca_project(embeddings, clean_embedding, *, include_clean=True):
    """Fit the top-2 principal directions and project everything on them.

    With ``include_clean`` (the default) the clean embedding takes part in
    the fit, so clusters and origin share one basis.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    c = np.asarray(clean_embedding, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] < 3:
        raise AnalysisError("need at least 3 embeddings")
    if x.shape[1] != c.shape[0]:
        raise AnalysisError(f"clean embedding has dim {c.shape[0]}, embeddings have {x.shape[1]}")
    data = np.vstack([x, c]) if include_clean else x
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(centered.shape) * np.finfo(np.float64).eps if s.size else 0.0
    if s.size < 2 or s[1] <= tol:
        raise AnalysisError("embeddings span fewer than 2 dimensions")
    var = s**2 / (data.shape[0] - 1)
    comps = _fix_signs(vt[:2])
    return PCAFit(
        mean=mean,
        components=comps,
        explained_variance=var[:2],
        explained_variance_ratio=var[:2] / var.sum(),
        projections=(x - mean) @ comps.T,
        origin=(c - mean) @ comps.T,
    )


@dataclass
class ClusterProjection:
    method: str
    points: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.origin = np.asarray(self.origin, dtype=np.float64).ravel()
        if self.points.size == 0:
            raise AnalysisError("cluster has no points")


def mean_angle(cluster: ClusterProjection, *, circular=False):
    """Arithmetic mean of atan2(pc2 - pc2_o, pc1 - pc1_o) over the cluster.

    ``circular=True`` returns the angle of the mean unit vector instead,
    which has no branch cut at +/-pi.
    """
    d = cluster.points - cluster.origin
    same = np.flatnonzero((d[:, 0] == 0) & (d[:, 1] == 0))
    if same.size:
        raise AnalysisError(f"point {int(same[0])} of {cluster.method} coincides with the origin")
    angles = np.arctan2(d[:, 1], d[:, 0])
    if circular:
        return float(np.arctan2(np.sin(angles).mean(), np.cos(angles).mean()))
    return float(math.fsum(angles) / len(angles))


def ang_diff(semantic_mean, pixel_means):
    """Semantic mean angle minus the average of the pixel-level mean angles."""
    pixel_means = list(pixel_means)
    if not pixel_means:
        raise AnalysisError("need at least one pixel-level mean angle")
    return float(semantic_mean - math.fsum(pixel_means) / len(pixel_means))


@dataclass
class SimilarityTable:
    rows: list
    columns: list
    values: np.ndarray
    errors: list = field(default_factory=list)

    def cell(self, row, column):
        return float(self.values[self.rows.index(row), self.columns.index(column)])


def similarity_table(scorer, images, texts):
    """Cell (i, j) = 100 * max(0, cos(image_i, text_j)); failed cells are NaN."""
    images, texts = list(images), list(texts)
    if not images or not texts:
        raise AnalysisError("need at least one image and one text")
    values = np.full((len(images), len(texts)), np.nan)
    errors = []
    text_vecs = {}
    for j, t in enumerate(texts):
        try:
            text_vecs[j] = embed_text(scorer, t)
        except AdapterError as exc:
            errors.append(("*", t, str(exc)))
    for i, (label, img) in enumerate(images):
        try:
            u = embed_image(scorer, img)
        except AdapterError as exc:
            errors.append((label, "*", str(exc)))
            continue
        for j, v in text_vecs.items():
            values[i, j] = 100.0 * max(0.0, float(u @ v))
    return SimilarityTable([lbl for lbl, _ in images], texts, values, errors)


@dataclass
class ImageAnalysis:
    image_id: str
    fit: PCAFit
    clusters: dict
    theta: dict
    angdiff: dict  # (semantic method, k) -> value
    dropped: dict = field(default_factory=dict)  # method -> points equal to the origin


def collect_embeddings(scorer, image, spec: AugmentationSpec, n, rng):
    x = as_array(image)

    aug = Augmenter(spec, rng)
    return np.stack([embed_image(scorer, aug(x, rng)) for _ in range(n)])


def analyze_image(scorer, image, specs, *, n=300, seed=0, image_id="image", circular=False):
    """Cluster, project and measure angles for every spec in ``specs``.

    ``specs`` maps a method to its AugmentationSpec. AngDiff is reported for
    every semantic method against each pixel set (k=3, k=5) fully present.

    Draws that leave the image untouched (DIM skips with probability 1 - p,
    SIM at level 0) project exactly onto the origin, where atan2 is
    undefined. They are excluded from theta and counted in ``dropped``.
    """
    rng = np.random.default_rng(seed)
    clean = embed_image(scorer, image)
    embs = {m: collect_embeddings(scorer, image, spec, n, rng) for m, spec in specs.items()}
    order = list(embs)
    fit = pca_project(np.vstack([embs[m] for m in order]), clean)
    clusters, theta, dropped = {}, {}, {}
    start = 0
    for m in order:
        pts = fit.projections[start:start + n]
        start += n
        name = m.value if isinstance(m, Method) else str(m)
        clusters[name] = ClusterProjection(name, pts, fit.origin)
        keep = np.any(pts != fit.origin, axis=1)
        dropped[name] = int((~keep).sum())
        if not keep.any():
            raise AnalysisError(f"every {name} draw coincides with the clean image")
        theta[name] = mean_angle(ClusterProjection(name, pts[keep], fit.origin), circular=circular)
    angdiff = {}
    for sem in SEMANTIC:
        if sem.value not in theta:
            continue
        for k, pix in PIXEL_SETS.items():
            if all(p.value in theta for p in pix):
                angdiff[(sem.value, k)] = ang_diff(theta[sem.value], [theta[p.value] for p in pix])
    return ImageAnalysis(image_id, fit, clusters, theta, angdiff, dropped)


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def write_analysis(result: ImageAnalysis, out_dir, table: SimilarityTable | None = None):
    """Plot-ready CSVs: projections, angles, angdiff and the similarity matrix."""
    out_dir = Path(out_dir)
    stem = result.image_id
    proj = [("clean", repr(float(result.fit.origin[0])), repr(float(result.fit.origin[1])))]
    for name, cl in result.clusters.items():
        proj.extend((name, repr(float(a)), repr(float(b))) for a, b in cl.points)
    written = [out_dir / f"{stem}.projections.csv", out_dir / f"{stem}.angles.csv",
               out_dir / f"{stem}.angdiff.csv"]
    _atomic_write_bytes(written[0], _csv(proj, ("method", "pc1", "pc2")))
    _atomic_write_bytes(written[1], _csv(
        [(m, repr(v), result.dropped.get(m, 0)) for m, v in result.theta.items()],
        ("method", "theta_bar", "dropped")))
    _atomic_write_bytes(written[2], _csv(
        [(m, k, repr(v)) for (m, k), v in result.angdiff.items()], ("semantic_method", "k", "value")))
    if table is not None:
        rows = [[r] + [repr(float(v)) for v in table.values[i]] for i, r in enumerate(table.rows)]
        path = out_dir / f"{stem}.similarity.csv"
        _atomic_write_bytes(path, _csv(rows, ["label"] + list(table.columns)))
        written.append(path)
    return written
