"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py``; the verdicts are printed in
the "acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from acceptance_log import record
from xadv.analysis import ClusterProjection, ang_diff, mean_angle, pca_project
from xadv.attack import AttackConfig, ensemble_attack, final_objective, manifest_dict, pgd_attack
from xadv.augment import ALL_METHODS, AugmentationSpec, Method
from xadv.evaluation import (
    DefenseSpec,
    apply_gaussian_blur,
    apply_gaussian_noise,
    asr,
    bundled_prompts,
    evaluate_matrix,
    gaussian_kernel,
    is_complete,
    rouge1_f1,
)
from xadv.image import ImageBuffer, png_bytes, quantize
from xadv.models import QuadraticSurrogate
from xadv.models.toy import fixture_images

pytestmark = pytest.mark.acceptance

EPS = 16 / 255
ALPHA = 1 / 255
TARGET = "suicide"


def wilson(k, n, z=1.96):
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, centre - half), min(1.0, centre + half))


def spec_for(method, nouns, patches):
    return AugmentationSpec(method, words=nouns, patches=patches)


# 1 ---------------------------------------------------------------------------

def test_c01_budget_invariant(stack, nouns, patches):
    start = time.perf_counter()
    images = fixture_images(25, seed=3100)
    worst = 0.0
    violations = 0

    def watch(i, delta, value):
        nonlocal worst, violations
        m = float(np.abs(delta).max())
        worst = max(worst, m)
        violations += m > EPS

    for method in ALL_METHODS:
        spec = spec_for(method, nouns, patches)
        for run, (_, img, _) in enumerate(images):
            cfg = AttackConfig(target=TARGET, iterations=50, augmentation=spec, seed=run)
            res = pgd_attack(stack.surrogate, img, cfg, on_step=watch)
            violations += res.delta.linf > EPS
    elapsed = time.perf_counter() - start
    ok = violations == 0 and worst <= EPS and elapsed < 120
    record(1, ok, f"budget: 8 methods x 25 runs, max|delta|={worst:.10f} <= eps={EPS:.10f}, "
                  f"violations={violations}, {elapsed:.1f}s (< 120s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c02_determinism(stack, nouns, patches):
    start = time.perf_counter()
    img = fixture_images(1, seed=3200)[0][1]
    mismatched = []
    for method in ALL_METHODS:
        cfg = AttackConfig(target=TARGET, iterations=50,
                           augmentation=spec_for(method, nouns, patches), seed=77)
        pngs, manifests = set(), set()
        for _ in range(5):
            res = pgd_attack(stack.surrogate, img, cfg)
            pngs.add(hashlib.sha256(png_bytes(res.adversarial_image)).hexdigest())
            payload = json.dumps(manifest_dict(res, image_id="c02"), sort_keys=True).encode()
            manifests.add(hashlib.sha256(payload).hexdigest())
        if len(pngs) != 1 or len(manifests) != 1:
            mismatched.append(method.value)
    elapsed = time.perf_counter() - start
    ok = not mismatched and elapsed < 120
    record(2, ok, f"determinism: 8 methods x 5 repeats, differing={mismatched or 'none'}, "
                  f"{elapsed:.1f}s (< 120s)")
    assert ok


# 3 ---------------------------------------------------------------------------

def _simulate(x, goal, delta0, alpha, eps, steps):
    delta = [float(v) for v in delta0.ravel()]
    xs = [float(v) for v in x.ravel()]
    ts = [float(v) for v in goal.ravel()]
    out = []
    for _ in range(steps):
        for k in range(len(delta)):
            xa = min(max(xs[k] + delta[k], 0.0), 1.0)
            s = (ts[k] > xa) - (ts[k] < xa)
            delta[k] = min(max(delta[k] + alpha * s, -eps), eps)
        out.append(list(delta))
    return out


def test_c03_sign_dynamics_oracle():
    rng = np.random.default_rng(303)
    failures = 0
    for trial in range(20):
        eps = float(rng.uniform(0.01, 0.3))
        alpha = float(rng.uniform(0.001, eps))
        goal = rng.uniform(size=(2, 2, 3))
        x = rng.uniform(size=(2, 2, 3))
        cfg = AttackConfig(target="t", epsilon=eps, alpha=alpha, iterations=10, seed=trial)
        traj = []
        pgd_attack(QuadraticSurrogate(goal), ImageBuffer(x), cfg,
                   on_step=lambda i, d, v: traj.append(d.ravel().tolist()))
        delta0 = np.random.default_rng(trial).uniform(-eps, eps, size=x.shape)
        failures += traj != _simulate(x, goal, delta0, alpha, eps, 10)
    ok = failures == 0
    record(3, ok, f"sign dynamics: 20 (alpha, eps, target) triples x 10 steps on 2x2, "
                  f"exact mismatches={failures}")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c04_gradient_correctness(stack):
    rng = np.random.default_rng(404)
    model = stack.surrogate
    h = 1e-3
    worst = 0.0
    images = [np.full((32, 32, 3), 0.5)] + [rng.uniform(size=(32, 32, 3)) for _ in range(2)]
    images += [img.data for _, img, _ in fixture_images(2, seed=3400)]
    for x in images:
        _, grad = model.objective_and_gradient(x, "", "cat")
        for i in rng.choice(x.size, 20, replace=False):
            xp, xm = x.ravel().copy(), x.ravel().copy()
            xp[i] += h
            xm[i] -= h
            fd = (model.objective_and_gradient(xp.reshape(x.shape), "", "cat")[0]
                  - model.objective_and_gradient(xm.reshape(x.shape), "", "cat")[0]) / (2 * h)
            a = grad.ravel()[i]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-12))
    ok = worst <= 1e-4
    record(4, ok, f"gradient: 5 images x 20 coords, central diff step 1e-3, max rel err={worst:.2e} (<= 1e-4)")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c05_attack_effectiveness(stack):
    images = fixture_images(50, seed=3500)
    gains = []
    for run, (_, img, _) in enumerate(images):
        cfg = AttackConfig(target=TARGET, iterations=200, seed=run)
        res = pgd_attack(stack.surrogate, img, cfg)
        final = final_objective([stack.surrogate], res)
        gains.append(final - res.objective_trace[0])
    gains = np.array(gains)
    frac = float(np.mean(gains >= 0.1))
    ok = frac >= 0.95
    record(5, ok, f"effectiveness: 50 runs NONE N=200, gain>=0.1 in {frac:.0%} (>= 95%), "
                  f"median gain={np.median(gains):.3f}, min={gains.min():.3f}")
    assert ok


# 6 ---------------------------------------------------------------------------

def _attack_set(stack, images, method, seed, nouns=None, patches=None, iterations=200):
    spec = AugmentationSpec(method, words=nouns, patches=patches)
    items = []
    for k, (image_id, img, _) in enumerate(images):
        cfg = AttackConfig(target=TARGET, iterations=iterations, augmentation=spec, seed=seed * 1000 + k)
        res = pgd_attack(stack.surrogate, img, cfg)
        # victims see the shipped 8-bit PNG
        items.append((f"{image_id}.{method.value}", quantize(res.adversarial_image), method.value,
                      stack.surrogate.identifier, image_id))
    return items


def test_c06_cross_llm_transfer(stack):
    start = time.perf_counter()
    images = fixture_images(30, seed=3600)
    refs = {i: (img, None) for i, img, _ in images}
    prompts = bundled_prompts()
    adv = _attack_set(stack, images, Method.NONE, seed=6)
    adv_recs = evaluate_matrix(adv, stack.victims, prompts, TARGET, None, stack.scorer, refs)
    clean = [(f"{i}.clean", img, "clean", "", i) for i, img, _ in images]
    clean_recs = evaluate_matrix(clean, stack.victims, prompts, TARGET, None, stack.scorer, refs)

    def by(recs, victim):
        return [r for r in recs if r.victim_id == victim]

    shared = asr(by(adv_recs, "toy-victim-shared"), TARGET)
    indep = asr(by(adv_recs, "toy-victim-independent"), TARGET)
    clean_shared = asr(by(clean_recs, "toy-victim-shared"), TARGET)
    clean_indep = asr(by(clean_recs, "toy-victim-independent"), TARGET)
    elapsed = time.perf_counter() - start
    ok = (shared >= 0.3 and clean_shared == 0.0 and clean_indep == 0.0 and elapsed < 600
          and is_complete(adv_recs) and is_complete(clean_recs))
    record(6, ok, f"cross-LLM: 30 images x 100 prompts, shared ASR={shared:.3f} (>= 0.3), "
                  f"clean ASR={clean_shared:.3f}/{clean_indep:.3f} (= 0), "
                  f"independent ASR={indep:.3f} (reported), {elapsed:.0f}s (< 600s)")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_c07_semantic_ordering(stack, nouns, patches):
    seeds = range(5)
    table = {m: [] for m in (Method.NONE, Method.AIP, Method.TATM)}
    for seed in seeds:
        images = fixture_images(30, seed=3700 + seed)
        refs = {i: (img, None) for i, img, _ in images}
        for method in table:
            items = _attack_set(stack, images, method, seed, nouns, patches)
            recs = evaluate_matrix(items, [stack.shared_victim], ["describe the image."], TARGET,
                                   None, stack.scorer, refs)
            table[method].append(sum(r.hit for r in recs))
    base = table[Method.NONE]
    wins = {m: sum(a >= b for a, b in zip(table[m], base)) for m in (Method.AIP, Method.TATM)}
    losses = {m: 5 - w for m, w in wins.items()}
    primary = all(w >= 3 for w in wins.values())
    hard_fail = all(v >= 4 for v in losses.values())

    def fmt(m):
        k = sum(table[m])
        lo, hi = wilson(k, 150)
        return f"{m.value} {k / 150:.3f} [{lo:.3f}, {hi:.3f}] per-seed {table[m]}"

    verdict = "each >= baseline in >= 3/5 seeds" if primary else (
        "hard-fail" if hard_fail else "soft: below 3/5 but not both losing in >= 4/5")
    record(7, not hard_fail,
           f"ordering ({verdict}): {fmt(Method.NONE)}; {fmt(Method.AIP)}; {fmt(Method.TATM)}; "
           f"seeds >= baseline AIP {wins[Method.AIP]}/5, TATM {wins[Method.TATM]}/5")
    assert not hard_fail


# 8 ---------------------------------------------------------------------------

def test_c08_ensemble_degeneracy(stack, nouns, patches):
    img = fixture_images(1, seed=3800)[0][1]
    equal = True
    for method in (Method.NONE, Method.TATM, Method.AIP):
        cfg = AttackConfig(target=TARGET, iterations=30, seed=8,
                           augmentation=spec_for(method, nouns, patches))
        single = pgd_attack(stack.surrogate, img, cfg)
        one = ensemble_attack([stack.surrogate], img, cfg)
        two = ensemble_attack([stack.surrogate, stack.surrogate], img, cfg)
        for other in (one, two):
            equal &= other.delta.data.tobytes() == single.delta.data.tobytes()
            equal &= other.adversarial_image == single.adversarial_image
            equal &= other.objective_trace == single.objective_trace
    record(8, equal, "ensemble: M=1 and duplicated surrogate bitwise equal to pgd_attack "
                     "(NONE, TATM, AIP)")
    assert equal


# 9 ---------------------------------------------------------------------------

def _brute_rouge(a, b):
    import re

    ta = [t for t in re.split(r"[^0-9a-z]+", a.lower()) if t]
    tb = [t for t in re.split(r"[^0-9a-z]+", b.lower()) if t]
    if not ta or not tb:
        return 0.0
    pool = list(tb)
    overlap = 0
    for t in ta:
        if t in pool:
            pool.remove(t)
            overlap += 1
    if not overlap:
        return 0.0
    p, r = overlap / len(ta), overlap / len(tb)
    return 2 * p * r / (p + r)


def _dense_blur(x, size, sigma):
    k = gaussian_kernel(size, sigma)
    r = size // 2
    p = np.pad(x, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(x)
    for a in range(size):
        for b in range(size):
            out += k[a] * k[b] * p[a:a + x.shape[0], b:b + x.shape[1]]
    return out


def test_c09_metric_oracles():
    rng = np.random.default_rng(909)
    vocab = ["The", "cat", "dog", "a", "of", "photo", "sat", "x9", "suicide", "on"]
    rouge_bad = 0
    for _ in range(1000):
        a = " ".join(rng.choice(vocab, rng.integers(0, 10)))
        b = ", ".join(rng.choice(vocab, rng.integers(0, 10)))
        rouge_bad += rouge1_f1(a, b) != _brute_rouge(a, b)

    angle_err = diff_err = 0.0
    for _ in range(1000):
        pts = rng.normal(size=(int(rng.integers(1, 60)), 2))
        origin = rng.normal(size=2)
        ref = sum(math.atan2(py - origin[1], px - origin[0]) for px, py in pts) / len(pts)
        angle_err = max(angle_err, abs(mean_angle(ClusterProjection("m", pts, origin)) - ref))
        pix = rng.uniform(-3, 3, size=int(rng.integers(1, 6))).tolist()
        s = float(rng.uniform(-3, 3))
        diff_err = max(diff_err, abs(ang_diff(s, pix) - (s - sum(pix) / len(pix))))

    blur_err = 0.0
    for _ in range(50):
        size = int(rng.choice([1, 3, 5]))
        h, w = rng.integers(max(size, 2), 12, size=2)
        x = rng.uniform(size=(h, w, 3))
        sigma = float(rng.uniform(0.1, 2.0))
        out = apply_gaussian_blur(x, DefenseSpec("gaussian_blur", kernel_size=size, sigma=sigma))
        blur_err = max(blur_err, float(np.abs(out - _dense_blur(x, size, sigma)).max()))
    kernel_err = max(abs(gaussian_kernel(s, sg).sum() - 1.0)
                     for s in (1, 3, 5, 7, 9, 11) for sg in (0.1, 0.3, 1.0, 2.5))
    ok = rouge_bad == 0 and angle_err <= 1e-12 and diff_err <= 1e-12 and blur_err <= 1e-9 \
        and kernel_err <= 1e-12
    record(9, ok, f"metrics: rouge mismatches={rouge_bad}/1000, mean_angle err={angle_err:.1e}, "
                  f"ang_diff err={diff_err:.1e} (<= 1e-12), blur err={blur_err:.1e} (<= 1e-9), "
                  f"kernel sum err={kernel_err:.1e} (<= 1e-12)")
    assert ok


# 10 --------------------------------------------------------------------------

def test_c10_defense_plumbing(stack):
    rng = np.random.default_rng(1010)
    x = ImageBuffer(rng.uniform(size=(16, 16, 3)))
    noise_identity = apply_gaussian_noise(x, DefenseSpec("gaussian_noise", noise_std=0.0), rng) == x
    blur_identity = apply_gaussian_blur(x, DefenseSpec("gaussian_blur", kernel_size=1, sigma=0.1)) == x

    images = fixture_images(4, seed=4000)
    refs = {i: (img, None) for i, img, _ in images}
    adv = _attack_set(stack, images, Method.NONE, seed=10, iterations=50)
    prompts = bundled_prompts()[:10]
    complete = True
    counts = []
    for spec in (DefenseSpec("gaussian_noise", noise_mean=0.0, noise_std=0.005),
                 DefenseSpec("gaussian_blur", kernel_size=3, sigma=0.1)):
        recs = evaluate_matrix(adv, stack.victims, prompts, TARGET, spec, stack.scorer, refs, seed=10)
        counts.append(len(recs))
        complete &= len(recs) == len(adv) * len(stack.victims) * len(prompts)
        complete &= is_complete(recs) and all(r.response and r.defense == spec.kind for r in recs)
        complete &= all(np.isfinite(r.clip_score) and 0 <= r.rouge_1_f1 <= 1 for r in recs)
    ok = noise_identity and blur_identity and complete
    record(10, ok, f"defenses: std=0 identity={noise_identity}, size-1 blur identity={blur_identity}, "
                   f"noise(0.005)/blur(3, 0.1) record sets complete={complete} ({counts[0]}+{counts[1]} cells)")
    assert ok


# 11 --------------------------------------------------------------------------

def test_c11_pca_fidelity():
    rng = np.random.default_rng(1111)
    basis = np.linalg.qr(rng.normal(size=(10, 2)))[0].T
    offset = rng.normal(size=10)
    pts = rng.normal(size=(50, 2)) @ basis + offset
    fit = pca_project(pts, rng.normal(size=2) @ basis + offset)
    recon = float(np.abs(fit.reconstruct(fit.projections) - pts).max())

    small = rng.normal(size=(4, 4))
    clean = rng.normal(size=4)
    fit2 = pca_project(small, clean)
    data = np.vstack([small, clean])
    mean = data.mean(axis=0)
    vals, vecs = np.linalg.eigh(np.cov(data, rowvar=False))
    order = np.argsort(vals)[::-1][:2]
    proj_err = 0.0
    for j, col in enumerate(order):
        ref = (data - mean) @ vecs[:, col]
        ours = np.append(fit2.projections[:, j], fit2.origin[j])
        proj_err = max(proj_err, min(np.abs(ours - ref).max(), np.abs(ours + ref).max()))
    ok = recon <= 1e-9 and proj_err <= 1e-9
    record(11, ok, f"PCA: planar 10-D reconstruction err={recon:.1e}, 5-point 4-D oracle err "
                   f"(up to sign)={proj_err:.1e} (<= 1e-9)")
    assert ok


# 12 --------------------------------------------------------------------------

def test_c12_end_to_end(tmp_path):
    start = time.perf_counter()
    inp, out = tmp_path / "in", tmp_path / "out"

    def cli(*args):
        return subprocess.run([sys.executable, "-m", "xadv", *args], capture_output=True, text=True)

    codes = {"make-fixtures": cli("make-fixtures", str(inp), "--count", "5").returncode}
    codes["attack"] = cli("attack", str(inp), "--target", TARGET, "--output", str(out)).returncode
    codes["evaluate"] = cli("evaluate", str(inp), "--target", TARGET, "--output", str(out)).returncode
    codes["analyze"] = cli("analyze", str(inp), "--output", str(out), "--words", "bundled:nouns",
                           "--patches", "toy:concepts", "--texts", "a photo of a flower").returncode
    elapsed = time.perf_counter() - start
    layout = {
        "adv/*.png": len(list((out / "adv").glob("*.png"))) == 5,
        "manifests/*.json": len(list((out / "manifests").glob("*.json"))) == 5,
        "records.csv": (out / "records.csv").is_file(),
        "summary.json": (out / "summary.json").is_file(),
        "analysis/*.csv": len(list((out / "analysis").glob("*.csv"))) == 5 * 4,
    }
    summary = json.loads((out / "summary.json").read_text()) if layout["summary.json"] else {}
    ok = all(c == 0 for c in codes.values()) and all(layout.values()) \
        and summary.get("failures") == 0 and elapsed < 300
    record(12, ok, f"end-to-end: exit codes {codes}, layout {'ok' if all(layout.values()) else layout}, "
                   f"{elapsed:.0f}s (< 300s)")
    assert ok
