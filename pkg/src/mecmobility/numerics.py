"""Exponential integral E1, its elementary bounds, and a Monte-Carlo mean estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_SERIES_TERMS = 30
_CF_MAX_ITER = 200
_CF_TINY = 1e-300
_SCALAR_CUTOFF = 64  # below this, per-element Python beats numpy call overhead


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-6:
            raise ValueError("rel_tol must lie in (0, 1e-6]")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def _e1_series(x: np.ndarray) -> np.ndarray:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * (-x) / k
        acc += term / k
    return -EULER_GAMMA - np.log(x) - acc


def _e1_contfrac(x: np.ndarray) -> np.ndarray:
    # modified Lentz evaluation of the continued fraction for e^x E1(x);
    # converged entries are dropped from the working set as we go
    out = np.empty_like(x)
    idx = np.arange(x.size)
    b = x + 1.0
    c = np.full_like(x, 1.0 / _CF_TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _CF_MAX_ITER + 1):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        done = np.abs(delta - 1.0) < 2e-16
        if done.any():
            out[idx[done]] = h[done]
            keep = ~done
            idx, b, c, d, h = idx[keep], b[keep], c[keep], d[keep], h[keep]
            if idx.size == 0:
                break
    out[idx] = h
    return out * np.exp(-x)


def _e1_scalar(x: float) -> float:
    if x <= 1.0:
        term, acc = 1.0, 0.0
        for k in range(1, _SERIES_TERMS + 1):
            term *= -x / k
            acc += term / k
        return -EULER_GAMMA - math.log(x) - acc
    if x >= 745.0:
        return 0.0
    b = x + 1.0
    c = 1.0 / _CF_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_ITER + 1):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 2e-16:
            break
    return h * math.exp(-x)


def exp_integral_e1(x):
    """E1(x) = int_x^inf e^-t / t dt for x > 0 (``inf`` maps to 0).

    Power series below 1, continued fraction above; relative error is at the
    1e-14 level over the whole positive axis.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("E1 is only defined here for x > 0")
    if arr.size <= _SCALAR_CUTOFF:
        out = np.array([_e1_scalar(v) for v in arr.ravel()]).reshape(arr.shape)
        return float(out) if out.ndim == 0 else out
    out = np.zeros_like(arr)
    small = arr <= 1.0
    big = (~small) & np.isfinite(arr) & (arr < 745.0)
    if np.any(small):
        out[small] = _e1_series(arr[small])
    if np.any(big):
        out[big] = _e1_contfrac(arr[big])
    return float(out) if out.ndim == 0 else out


def e1_bounds(x):
    """Lower and upper elementary bounds on E1(x)."""
    x = np.asarray(x, dtype=float)
    lower = 0.5 * np.exp(-x) * np.log1p(2.0 / x)
    upper = np.exp(-x) * np.log1p(1.0 / x)
    return lower, upper


def e1_quadrature(x: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Adaptive-quadrature reference value of E1, independent of the series code."""
    from scipy.integrate import quad

    # substitute t = x + u to keep the integrand smooth near the lower limit
    val, _ = quad(lambda u: math.exp(-u) / (x + u), 0.0, math.inf,
                  epsabs=0.0, epsrel=spec.rel_tol, limit=spec.max_subdivisions)
    return math.exp(-x) * val


def mc_expectation(sampler, g, n_samples: int, chunk: int = 1_000_000):
    """Sample mean of ``g(sampler(n))`` and its standard error.

    ``sampler(n)`` must return ``n`` independent draws; ``g`` is applied
    elementwise (vectorised).
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        vals = np.asarray(g(sampler(n)), dtype=float)
        vals = np.broadcast_to(vals, (n,))
        total += vals.sum()
        total_sq += np.square(vals).sum()
        done += n
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)
