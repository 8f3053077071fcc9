"""Central finite-difference gradient verification for differentiable ops."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def numeric_grad(fn, tensors: list[Tensor], wrt: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference d fn / d tensors[wrt]; fn maps tensors -> scalar Tensor."""
    target = tensors[wrt]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = fn(tensors).item()
        flat[i] = orig - h
        minus = fn(tensors).item()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def check_gradients(fn, tensors: list[Tensor], h: float = 1e-5,
                    rel_tol: float = 1e-4, abs_tol: float = 1e-7) -> float:
    """Run fn forward+backward, compare every input grad to finite differences.

    Returns the worst relative error seen; raises AssertionError on failure.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn(tensors)
    loss.backward()
    worst = 0.0
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(fn, tensors, i, h=h)
        denom = np.maximum(np.abs(numeric), np.abs(analytic))
        err = np.abs(analytic - numeric)
        rel = np.where(denom > abs_tol / rel_tol, err / np.maximum(denom, 1e-300), 0.0)
        ok = (err <= abs_tol) | (rel <= rel_tol)
        if not ok.all():
            bad = np.unravel_index(int(np.argmax(rel)), t.shape) if t.shape else ()
            raise AssertionError(
                f"gradient mismatch on input {i} at {bad}: "
                f"analytic {analytic[bad] if t.shape else analytic}, "
                f"numeric {numeric[bad] if t.shape else numeric}")
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
