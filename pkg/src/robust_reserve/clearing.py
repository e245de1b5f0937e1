"""Clearing loss, its exact empirical minimizer, and the population clearing-price oracles."""

from __future__ import annotations

import csv
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate

from .distributions import MarketProfile, NoiseDistribution, ZeroNoise
from .numerics import bisect_increasing

ROOT_TOL = 1e-10
QUAD_TOL = 1e-11


class BatchFormatError(ValueError):
    """A bid CSV that cannot be read as a rectangular table of numbers."""


def as_batch(bids) -> np.ndarray:
    """Coerce bids to a ``(K, n)`` float array; a flat sequence is one bidder."""
    arr = np.asarray(bids, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("bid batch must hold at least one profile with at least one bid")
    return arr


def check_lambda(lam: float, n: int) -> None:
    if not (0.0 <= lam):
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if lam > n + 1e-12:
        raise ValueError(f"lambda exceeds bidders per profile ({lam} > {n})")


def clearing_loss(p: float, bids, lam: float) -> float:
    """``sum_i max(b_i - p, 0) + lam * p`` for one bid profile."""
    b = np.asarray(bids, dtype=float)
    return float(np.maximum(b - p, 0.0).sum() + lam * p)


def empirical_loss(p, batch, lam: float):
    """Average clearing loss over a batch, vectorized over ``p``."""
    batch = as_batch(batch)
    p = np.asarray(p, dtype=float)
    pooled = batch.ravel()
    hinge = np.maximum(pooled[None, :] - p.reshape(-1, 1), 0.0).sum(axis=1) / batch.shape[0]
    return (hinge + lam * p.ravel()).reshape(p.shape)


def empirical_clearing_price(batch, lam: float) -> float:
    """Exact leftmost minimizer over ``p >= 0`` of the batch-averaged clearing loss.

    The loss has right-derivative ``lam - #{pooled bids > p} / K``, so the
    leftmost minimizer is the ``(m+1)``-th largest pooled bid with
    ``m = floor(lam * K)``. When ``m`` covers every bid the loss is
    nondecreasing and the answer is 0.
    """
    batch = as_batch(batch)
    k, n = batch.shape
    check_lambda(lam, n)
    m = int(math.floor(lam * k + 1e-9))
    pooled = batch.ravel()
    if m >= pooled.size:
        return 0.0
    # (m+1)-th largest == element at ascending index size-1-m
    idx = pooled.size - 1 - m
    price = float(np.partition(pooled, idx)[idx])
    return max(price, 0.0)


def read_bid_batch(path) -> np.ndarray:
    """Read a ``bid_1,...,bid_n`` CSV into a ``(K, n)`` array.

    Raises :class:`BatchFormatError` naming the offending row and column.
    """
    path = Path(path)
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BatchFormatError(f"{path}: empty file") from None
        width = len(header)
        expected = [f"bid_{j + 1}" for j in range(width)]
        if [h.strip() for h in header] != expected:
            raise BatchFormatError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise BatchFormatError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    val = float(cell)
                except ValueError:
                    raise BatchFormatError(f"{path}: row {lineno}, column {col}: not a number: {cell!r}") from None
                if not math.isfinite(val):
                    raise BatchFormatError(f"{path}: row {lineno}, column {col}: non-finite bid")
                values.append(val)
            rows.append(values)
    if not rows:
        raise BatchFormatError(f"{path}: no bid rows")
    return np.array(rows, dtype=float)


def write_bid_batch(path, batch) -> None:
    batch = as_batch(batch)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"bid_{j + 1}" for j in range(batch.shape[1])])
        for row in batch:
            writer.writerow([repr(float(b)) for b in row])


# --------------------------------------------------------------------------- oracles


@lru_cache(maxsize=4096)
def oracle_clearing_price(profile: MarketProfile, lam: float, tol: float = ROOT_TOL) -> float:
    """Population clearing price: smallest ``p`` with ``sum_i D_i(beta_i^{-1}(p)) >= n - lam``."""
    check_lambda(lam, profile.n)
    target = profile.n - lam
    return bisect_increasing(
        lambda p: float(profile.bid_cdf_sum(p)), target, 0.0, profile.max_bid(), tol=tol
    )


def _noise_cdf_scalar(noise: NoiseDistribution):
    return lambda x: float(noise.cdf(x))


def expected_noise_cdf(profile: MarketProfile, noise: NoiseDistribution, p: float, i: int) -> float:
    """``E_v[F(p - beta_i(v_i))]`` integrated over bidder ``i``'s value law."""
    dist, strat = profile.values[i], profile.strategies[i]
    if noise.is_degenerate:
        return float(dist.cdf(strat.inverse(p)))
    F = _noise_cdf_scalar(noise)
    alpha = strat.alpha
    kinks = [(p - k) / alpha for k in noise.kinks()]
    pts = [x for x in kinks if dist.lo < x < dist.hi]
    val, _ = integrate.quad(
        lambda v: F(p - alpha * v) * float(dist.pdf(v)),
        dist.lo,
        dist.hi,
        points=pts or None,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=200,
    )
    return val


def smoothed_bid_cdf_sum(profile: MarketProfile, noise: NoiseDistribution, p: float) -> float:
    """``sum_i E[F(p - beta_i(v_i))]``: expected count of smoothed bids at or below ``p``."""
    return sum(expected_noise_cdf(profile, noise, p, i) for i in range(profile.n))


def smoothed_bid_cdf_sum_by_noise(profile: MarketProfile, noise: NoiseDistribution, p: float) -> float:
    """The same count written as ``sum_i integral D_i(beta_i^{-1}(p - z)) f(z) dz``.

    Integrates over the noise instead of the values, which makes it an
    independent route for cross-checking :func:`smoothed_bid_cdf_sum`.
    """
    if noise.is_degenerate:
        return float(profile.bid_cdf_sum(p))
    total = 0.0
    for dist, strat in zip(profile.values, profile.strategies):
        top = float(strat(dist.hi))
        bottom = float(strat(dist.lo))
        # D_i(beta^{-1}(p - z)) is 1 for z <= p - top and 0 for z >= p - bottom
        total += float(noise.cdf(p - top))
        pts = [k for k in noise.kinks() if p - top < k < p - bottom]
        val, _ = integrate.quad(
            lambda z: float(dist.cdf(strat.inverse(p - z))) * float(noise.pdf(z)),
            p - top,
            p - bottom,
            points=pts or None,
            epsabs=QUAD_TOL,
            epsrel=QUAD_TOL,
            limit=200,
        )
        total += val
    return total


def _smoothed_root(profile, noise, lam, count, tol) -> float:
    check_lambda(lam, profile.n)
    target = profile.n - lam
    if count(0.0) >= target:
        return 0.0
    upper = profile.max_bid() + 10.0 / noise.epsilon
    # widen until bracketed; when lam == 0 the root escapes to +inf and the bracket end is returned
    for _ in range(60):
        if count(upper) >= target:
            break
        upper *= 2.0
    return bisect_increasing(count, target, 0.0, upper, tol=tol)


@lru_cache(maxsize=4096)
def smoothed_oracle_reserve(
    profile: MarketProfile,
    noise: NoiseDistribution,
    lam: float,
    tol: float = ROOT_TOL,
    cross_check: bool = False,
) -> float:
    """Population reserve of the bid-smoothing mechanism.

    Zero when ``sum_i E[F(-beta_i(v_i))] >= n - lam``, otherwise the root of
    ``sum_i E[F(p - beta_i(v_i))] = n - lam``. With ``cross_check`` the root is
    recomputed by integrating over the noise and the two must agree to 1e-6.
    """
    if noise.is_degenerate:
        return oracle_clearing_price(profile, lam, tol)
    root = _smoothed_root(profile, noise, lam, lambda p: smoothed_bid_cdf_sum(profile, noise, p), tol)
    if cross_check:
        alt = smoothed_oracle_reserve_by_noise(profile, noise, lam, tol)
        if abs(alt - root) > 1e-6:
            raise ArithmeticError(f"smoothed reserve routes disagree: {root!r} vs {alt!r}")
    return root


def smoothed_oracle_reserve_by_noise(
    profile: MarketProfile, noise: NoiseDistribution, lam: float, tol: float = ROOT_TOL
) -> float:
    """Smoothed reserve from the noise-side integral (see :func:`smoothed_bid_cdf_sum_by_noise`)."""
    if noise.is_degenerate:
        return oracle_clearing_price(profile, lam, tol)
    return _smoothed_root(profile, noise, lam, lambda p: smoothed_bid_cdf_sum_by_noise(profile, noise, p), tol)


def reserve_gap_bound(
    profile: MarketProfile, noise: NoiseDistribution, lam: float, delta: float, mu: float
) -> float:
    """Upper bound on ``|smoothed reserve - clearing price|`` under Laplace noise.

    ``ln(1/delta)/eps + mu * delta * max(n - lam, lam) / (1 - delta)``.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not (noise.kind in ("laplace", "degenerate_zero")):
        raise ValueError("the reserve gap bound is stated for Laplace noise only")
    n = profile.n
    log_term = 0.0 if isinstance(noise, ZeroNoise) else math.log(1.0 / delta) / noise.epsilon
    return log_term + mu * delta * max(n - lam, lam) / (1.0 - delta)
