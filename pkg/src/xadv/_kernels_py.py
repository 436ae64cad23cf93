"""Pure numpy kernels; the reference the compiled backend must match."""

import numpy as np

BACKEND = "python"


def sign_step(delta, grad, alpha, epsilon):
    """In-place ``delta = clip(delta + alpha * sign(grad), -eps, eps)``.

    Both arrays are flat float64. Returns the new max absolute value.
    """
    if grad.shape != delta.shape:
        raise ValueError("gradient size does not match perturbation size")
    v = delta + alpha * np.sign(grad)
    np.maximum(v, -epsilon, out=v)
    np.minimum(v, epsilon, out=v)
    delta[...] = v
    return float(np.abs(v).max(initial=0.0))


def clip_linf(delta, epsilon):
    bad = ~np.isfinite(delta)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite perturbation element at flat index {i}")
    out = np.maximum(delta, -epsilon)
    np.minimum(out, epsilon, out=out)
    return out


def blur_separable(img, kernel):
    h, w, _ = img.shape
    k = kernel.shape[0]
    r = k // 2
    padded = np.pad(img, ((r, r), (0, 0), (0, 0)), mode="edge")
    tmp = np.zeros_like(img)
    for j in range(k):
        tmp = tmp + kernel[j] * padded[j:j + h]
    padded = np.pad(tmp, ((0, 0), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for j in range(k):
        out = out + kernel[j] * padded[:, j:j + w]
    return out
