"""Sigma-norm smoothing and finite-difference helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class SigmaNormParams:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def _eps(params):
    if params is None:
        return DEFAULT_EPSILON
    if isinstance(params, SigmaNormParams):
        return params.epsilon
    return SigmaNormParams(float(params)).epsilon


def sigma_norm(y, params=None):
    """``(sqrt(1 + eps |y|^2) - 1) / eps``; smooth everywhere, zero only at ``y = 0``."""
    eps = _eps(params)
    s = float(np.dot(np.ravel(y), np.ravel(y)))
    # expm1/log1p form avoids cancellation for small eps*|y|^2
    return float(np.expm1(0.5 * np.log1p(eps * s)) / eps)


def sigma_gradient(y, params=None):
    eps = _eps(params)
    y = np.asarray(y, dtype=float)
    return y / np.sqrt(1.0 + eps * np.dot(np.ravel(y), np.ravel(y)))


def smoothed_sq_norm(y, params=None):
    """Twice the sigma-norm: a smooth surrogate for ``|y|^2`` (equal as eps -> 0)."""
    return 2.0 * sigma_norm(y, params)


def smoothed_sq_norm_grad(y, params=None):
    return 2.0 * sigma_gradient(y, params)


def finite_diff_jacobian(f, x, step=1e-6):
    """Central-difference Jacobian of ``f`` at ``x``; rows index outputs."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    jac = np.empty(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        fp = np.asarray(f(xp), dtype=float)
        fm = np.asarray(f(xm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise FloatingPointError(f"non-finite output when perturbing coordinate {idx}")
        jac[(...,) + idx] = (fp - fm) / (2.0 * step)
    return jac


def gradient_correction_matrix(g, x, tiny=1e-300):
    """Symmetric ``C`` with ``C @ x == g``.

    Used to fold the state-dependent part of a quadratic form's gradient into
    a Riccati matrix. ``g`` vanishes at least quadratically at ``x = 0`` for
    the barrier weights used here, so ``C -> 0`` there.
    """
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    s = float(x @ x)
    if s <= tiny:
        return np.zeros((x.size, x.size))
    gx = float(g @ x)
    return (np.outer(g, x) + np.outer(x, g)) / s - (gx / (s * s)) * np.outer(x, x)
