import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xadv import _kernels_py, kernels

try:
    from xadv import _kernels
except ImportError:  # extension not built
    _kernels = None

compiled = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
    if _kernels is not None:
        assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = dict(os.environ, XADV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import xadv.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_sign_step_semantics():
    for mod in filter(None, (_kernels_py, _kernels)):
        d = np.array([0.0, 0.05, -0.05, 0.06, 0.0])
        g = np.array([1.0, 1.0, -2.0, -0.5, 0.0])
        linf = mod.sign_step(d, g, 0.01, 0.055)
        assert d.tolist() == [0.01, 0.055, -0.055, 0.06 - 0.01, 0.0]
        assert linf == 0.055


@compiled
@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 400))
def test_sign_step_backends_bitwise(seed, n):
    rng = np.random.default_rng(seed)
    eps = rng.uniform(1e-3, 0.5)
    alpha = rng.uniform(1e-4, eps)
    d0 = rng.uniform(-eps, eps, n)
    g = rng.normal(size=n) * (rng.random(n) > 0.1)
    a, b = d0.copy(), d0.copy()
    la = _kernels_py.sign_step(a, g, alpha, eps)
    lb = _kernels.sign_step(b, g, alpha, eps)
    assert a.tobytes() == b.tobytes() and la == lb


@compiled
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clip_backends_bitwise(seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=50)
    assert _kernels_py.clip_linf(d, 0.3).tobytes() == np.asarray(_kernels.clip_linf(d, 0.3)).tobytes()


@compiled
def test_clip_backends_reject_nan():
    for mod in (_kernels_py, _kernels):
        with pytest.raises(FloatingPointError):
            mod.clip_linf(np.array([0.0, np.nan]), 0.1)


@compiled
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 3, 5, 7]))
def test_blur_backends_bitwise(seed, k):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(k, 12, size=2)
    img = np.ascontiguousarray(rng.uniform(size=(h, w, 3)))
    kern = rng.uniform(size=k)
    kern /= kern.sum()
    a = _kernels_py.blur_separable(img, kern)
    b = np.asarray(_kernels.blur_separable(img, kern))
    assert a.tobytes() == b.tobytes()


def test_size_mismatch_is_rejected():
    for mod in filter(None, (_kernels_py, _kernels)):
        with pytest.raises(ValueError):
            mod.sign_step(np.zeros(3), np.zeros(4), 0.1, 0.2)


def test_fallback_module_reloads_cleanly(monkeypatch):
    monkeypatch.setenv("XADV_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("XADV_PURE_PYTHON")
        importlib.reload(kernels)
