"""Small numerical kernels shared by the oracles: bisection, Gauss-Legendre, seed splitting."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def bisect_increasing(
    func: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Smallest ``x`` in ``[lo, hi]`` with ``func(x) >= target`` for nondecreasing ``func``.

    Returns ``lo`` when ``func(lo)`` already reaches the target and ``hi`` when
    the target is never reached inside the bracket.
    """
    if func(lo) >= target:
        return lo
    if func(hi) < target:
        return hi
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if func(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def bisect_increasing_vec(
    func: Callable[[np.ndarray], np.ndarray],
    targets: np.ndarray,
    lo: float,
    hi: float,
    tol: float = 1e-12,
) -> np.ndarray:
    """Vectorized :func:`bisect_increasing` over many targets sharing one bracket."""
    targets = np.asarray(targets, dtype=float)
    a = np.full(targets.shape, float(lo))
    b = np.full(targets.shape, float(hi))
    n_iter = max(1, int(math.ceil(math.log2(max(hi - lo, tol) / tol))) + 1)
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        up = func(mid) >= targets
        b = np.where(up, mid, b)
        a = np.where(up, a, mid)
    out = b
    out = np.where(func(np.full_like(a, lo)) >= targets, lo, out)
    return out


def gauss_legendre(
    func: Callable[[np.ndarray], np.ndarray],
    a,
    b,
    panels: int = 4,
) -> np.ndarray:
    """Composite 48-point Gauss-Legendre integral of a vectorized integrand.

    ``a`` and ``b`` may be arrays of equal shape; the integrand receives node
    arrays with a trailing axis of quadrature points.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    edges = a[..., None] + (b - a)[..., None] * np.linspace(0.0, 1.0, panels + 1)
    left, right = edges[..., :-1], edges[..., 1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    x = mid[..., None] + half[..., None] * _GL_NODES
    vals = func(x)
    return np.sum(np.sum(vals * _GL_WEIGHTS, axis=-1) * half, axis=-1)


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the task identified by ``keys``.

    The stream depends only on ``(master_seed, keys)``: it is the
    ``SeedSequence(master_seed, spawn_key=keys)`` child, so results never
    depend on how tasks are scheduled across workers.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(seq)


def merge_moments(count: int, mean: float, m2: float, other: tuple[int, float, float]):
    """Chan's pairwise update of (count, mean, sum of squared deviations)."""
    n_b, mean_b, m2_b = other
    if count == 0:
        return n_b, mean_b, m2_b
    total = count + n_b
    delta = mean_b - mean
    mean = mean + delta * n_b / total
    m2 = m2 + m2_b + delta * delta * count * n_b / total
    return total, mean, m2
