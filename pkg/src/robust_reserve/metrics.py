"""Revenue, dynamic-IC metric, local sensitivities and numerical checks of the revenue bounds.

Closed forms and Monte Carlo estimators live side by side so each can police
the other. Monte Carlo results come back as :class:`MetricEstimate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .clearing import (
    QUAD_TOL,
    check_lambda,
    oracle_clearing_price,
    smoothed_bid_cdf_sum,
    smoothed_oracle_reserve,
)
from .distributions import (
    BiddingStrategy,
    MarketProfile,
    NoiseDistribution,
    ZeroNoise,
    competitor_max_cdf,
    noise_from_epsilon,
    top_order_cdfs,
)
from .mechanisms import MechanismConfig
from .numerics import bisect_increasing_vec, gauss_legendre, merge_moments

Z95 = 1.96


@dataclass(frozen=True)
class MetricEstimate:
    """Sample mean with a 95% normal-approximation half-width."""

    mean: float
    ci_half_width: float
    n_samples: int
    seed: Optional[int] = None

    @classmethod
    def from_samples(cls, samples, seed: Optional[int] = None) -> "MetricEstimate":
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("need at least two samples for a confidence interval")
        sd = float(x.std(ddof=1))
        return cls(float(x.mean()), Z95 * sd / math.sqrt(x.size), int(x.size), seed)

    @classmethod
    def from_moments(cls, count: int, mean: float, m2: float, seed: Optional[int] = None):
        sd = math.sqrt(max(m2, 0.0) / (count - 1))
        return cls(float(mean), Z95 * sd / math.sqrt(count), int(count), seed)

    def scaled(self, factor: float) -> "MetricEstimate":
        return MetricEstimate(self.mean * factor, self.ci_half_width * abs(factor), self.n_samples, self.seed)


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the revenue guarantees."""

    L: float
    mu: float
    delta: float


# --------------------------------------------------------------------------- revenue


def _segments(profile: MarketProfile) -> list[tuple[float, float]]:
    pts = sorted({0.0, *profile.breakpoints()})
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]


def _quad_over_support(func: Callable[[float], float], profile: MarketProfile, extra=()) -> float:
    total = 0.0
    for a, b in _segments(profile):
        pts = [x for x in extra if a < x < b]
        val, _ = integrate.quad(func, a, b, points=pts or None, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        total += val
    return total


@lru_cache(maxsize=256)
def expected_top_value(profile: MarketProfile) -> float:
    """``E[v^(1)]``: expected highest truthful value (the welfare normalizer)."""
    d1, _ = top_order_cdfs(profile)
    return _quad_over_support(lambda x: 1.0 - float(d1(x)), profile)


@lru_cache(maxsize=256)
def expected_second_value(profile: MarketProfile) -> float:
    """``E[v^(2)]``, with the second value of a lone bidder defined as 0."""
    if profile.n == 1:
        return 0.0
    _, d2 = top_order_cdfs(profile)
    return _quad_over_support(lambda x: 1.0 - float(d2(x)), profile)


class _CumulativeD2:
    """``x -> integral_0^x D^(2)`` tabulated on a fine grid plus a local Gauss-Legendre correction."""

    def __init__(self, profile: MarketProfile, cells_per_segment: int = 512):
        _, self.d2 = top_order_cdfs(profile)
        grids = [np.linspace(a, b, cells_per_segment + 1) for a, b in _segments(profile)]
        self.grid = np.unique(np.concatenate(grids))
        cell = gauss_legendre(self.d2, self.grid[:-1], self.grid[1:], panels=1)
        self.cum = np.concatenate([[0.0], np.cumsum(cell)])
        self.top = float(self.grid[-1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.0, self.top)
        k = np.clip(np.searchsorted(self.grid, xc, side="right") - 1, 0, len(self.grid) - 2)
        base = self.cum[k]
        local = gauss_legendre(self.d2, self.grid[k], xc, panels=1)
        # above the support D^(2) = 1
        return base + local + np.maximum(x - self.top, 0.0)


@lru_cache(maxsize=256)
def _cumulative_d2(profile: MarketProfile) -> _CumulativeD2:
    return _CumulativeD2(profile)


def expected_revenue_closed(profile: MarketProfile, reserve):
    """Stage-2 expected revenue of a second-price auction at an anonymous reserve.

    Uses ``Rev(r) = E[v^(2)] - r D^(1)(r) + integral_0^r D^(2)(x) dx``, which
    reduces to ``r (1 - D(r))`` for a single bidder. Accepts scalar or array
    reserves; negative reserves act as 0.
    """
    profile = profile.truthful()
    r = np.maximum(np.asarray(reserve, dtype=float), 0.0)
    d1, _ = top_order_cdfs(profile)
    if profile.n == 1:
        out = r * (1.0 - d1(r))
    else:
        out = np.empty(r.shape)
        flat_r, flat_out = r.ravel(), out.reshape(-1)
        cum = _cumulative_d2(profile)
        ev2 = expected_second_value(profile)
        for start in range(0, flat_r.size, 20_000):
            chunk = flat_r[start : start + 20_000]
            flat_out[start : start + 20_000] = ev2 - chunk * d1(chunk) + cum(chunk)
        out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def revenue_samples(values: np.ndarray, reserves) -> np.ndarray:
    """Per-auction revenue ``max(v2, r) * 1{v1 >= r}`` for truthful value rows."""
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    top = values.max(axis=1)
    second = np.zeros(len(values)) if n == 1 else np.partition(values, n - 2, axis=1)[:, n - 2]
    r = np.broadcast_to(np.asarray(reserves, dtype=float), top.shape)
    return np.where(top >= r, np.maximum(second, r), 0.0)


def expected_revenue_mc(
    profile: MarketProfile,
    reserve_sampler: Callable[[np.random.Generator, int], np.ndarray],
    n_samples: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> MetricEstimate:
    """Monte Carlo revenue where ``reserve_sampler(rng, size)`` yields one reserve per auction."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    values = profile.truthful().sample_values(rng, n_samples)
    reserves = np.asarray(reserve_sampler(rng, n_samples), dtype=float)
    return MetricEstimate.from_samples(revenue_samples(values, reserves), seed)


def fixed_reserve(r: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    return lambda rng, size: np.full(size, float(r))


def dp_rcp_expected_revenue(
    profile: MarketProfile,
    lam: float,
    noise: NoiseDistribution,
    strategies: Optional[Sequence[BiddingStrategy]] = None,
) -> float:
    """Revenue of the noisy reserve ``max(p + z, 0)`` averaged over the noise.

    ``p`` is the population clearing price under ``strategies`` (truthful by
    default); stage-2 bidding is truthful. The clamp is handled exactly: all
    ``z <= -p`` collapse onto reserve 0, and reserves above the support earn 0.
    """
    trained = profile if strategies is None else MarketProfile(profile.values, tuple(strategies))
    p = oracle_clearing_price(trained, lam)
    truthful = profile.truthful()
    if noise.is_degenerate:
        return float(expected_revenue_closed(truthful, p))
    hi = truthful.hi
    mass_at_zero = float(noise.cdf(-p)) * float(expected_revenue_closed(truthful, 0.0))
    pts = [x for x in (*noise.kinks(), *(b - p for b in truthful.breakpoints())) if -p < x < hi - p]
    val, _ = integrate.quad(
        lambda z: float(expected_revenue_closed(truthful, p + z)) * float(noise.pdf(z)),
        -p,
        hi - p,
        points=pts or None,
        epsabs=1e-10,
        epsrel=1e-10,
        limit=200,
    )
    return mass_at_zero + val


# --------------------------------------------------------------------------- IC metric


def stage1_allocation_value(profile: MarketProfile, i: int) -> float:
    """``E[v_i G_i(v_i)]``: value-weighted stage-1 win probability of bidder ``i``."""
    dist = profile.values[i]
    g_cdf = competitor_max_cdf(profile.truthful(), i)
    pts = [b for b in profile.breakpoints() if dist.lo < b < dist.hi]
    val, _ = integrate.quad(
        lambda v: v * float(g_cdf(v)) * float(dist.pdf(v)),
        dist.lo,
        dist.hi,
        points=pts or None,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=200,
    )
    return val


def shaded_reserves(config: MechanismConfig, profile: MarketProfile, i: int, alpha: float) -> tuple[float, float]:
    """Population base reserves when bidder ``i`` shades by ``1 + alpha`` and ``1 - alpha``."""
    truthful = profile.truthful()
    up, down = truthful.shaded(i, 1.0 + alpha), truthful.shaded(i, 1.0 - alpha)
    if config.kind == "srcp":
        return (
            smoothed_oracle_reserve(up, config.noise, config.lam),
            smoothed_oracle_reserve(down, config.noise, config.lam),
        )
    return oracle_clearing_price(up, config.lam), oracle_clearing_price(down, config.lam)


def stage2_utility(config: MechanismConfig, v: np.ndarray, m: np.ndarray, base: float) -> np.ndarray:
    """Bidder's stage-2 utility given own value ``v``, competitor max ``m`` and base reserve.

    For ``dp_rcp`` the per-auction noise is integrated out exactly:
    ``E_z[(v - max(m, base + z))^+] = H(v - base) - H(m - base)`` when ``v >= m``,
    with ``H`` the integrated noise CDF (the clamp at 0 is inert since ``m >= 0``).
    """
    if config.kind == "srcp" or config.noise.is_degenerate:
        return np.maximum(v - np.maximum(m, base), 0.0)
    H = config.noise.integrated_cdf
    return np.where(v >= m, H(v - base) - H(m - base), 0.0)


def ic_metric_mc(
    config: MechanismConfig,
    profile: MarketProfile,
    i: int,
    alpha: float,
    n_samples: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
    chunk: int = 1_000_000,
) -> MetricEstimate:
    """Finite-difference dynamic-IC metric of bidder ``i``.

    ``1 + (E u(1+alpha) - E u(1-alpha)) / (2 alpha E[v_i G_i(v_i)])`` with the
    two stage-2 utilities evaluated on the same value draws.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"perturbation alpha must lie in (0, 1), got {alpha}")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    truthful = profile.truthful()
    truthful._check_index(i)
    check_lambda(config.lam, truthful.n)
    r_up, r_down = shaded_reserves(config, truthful, i, alpha)
    scale = 1.0 / (2.0 * alpha * stage1_allocation_value(truthful, i))
    others = [d for j, d in enumerate(truthful.values) if j != i]

    count, mean, m2 = 0, 0.0, 0.0
    remaining = n_samples
    while remaining > 0:
        size = min(chunk, remaining)
        remaining -= size
        v = truthful.values[i].sample(rng, size)
        m = np.zeros(size)
        for d in others:
            m = np.maximum(m, d.sample(rng, size))
        diff = stage2_utility(config, v, m, r_up) - stage2_utility(config, v, m, r_down)
        dic = 1.0 + scale * diff
        c_mean = float(dic.mean())
        c_m2 = float(((dic - c_mean) ** 2).sum())
        count, mean, m2 = merge_moments(count, mean, m2, (size, c_mean, c_m2))
    return MetricEstimate.from_moments(count, mean, m2, seed)


def local_sensitivity_eta(profile: MarketProfile, lam: float, i: int, denominator: str = "all") -> float:
    """Derivative of the clearing price in bidder ``i``'s shading factor at truthful bidding.

    ``p* D_i'(p*) / (D_i'(p*) + sum_{j != i} D_j'(p*))``. ``denominator="others"``
    drops the ``D_i'`` term; that variant is kept only to demonstrate that it
    fails the finite-difference check.
    """
    truthful = profile.truthful()
    truthful._check_index(i)
    p = oracle_clearing_price(truthful, lam)
    if p == 0.0:
        return 0.0
    dens = [float(d.pdf(p)) for d in truthful.values]
    own = dens[i]
    rest = sum(dens) - own
    denom = own + rest if denominator == "all" else rest
    if denom <= 0.0:
        raise ZeroDivisionError(f"value densities vanish at the clearing price {p}")
    return p * own / denom


def ic_metric_dp_closed(profile: MarketProfile, lam: float, noise: NoiseDistribution, i: int) -> float:
    """Closed-form dynamic-IC metric of the noisy-reserve mechanism for bidder ``i``.

    ``1 - eta * E_{v_i}[int_0^{v_i} G_i(m) f(m - p*) dm] / E[v_i G_i(v_i)]``. The
    nested expectation is folded into ``int G_i(m) f(m - p*) (1 - D_i(m)) dm``.
    """
    truthful = profile.truthful()
    eta = local_sensitivity_eta(truthful, lam, i)
    if eta == 0.0:
        return 1.0
    p = oracle_clearing_price(truthful, lam)
    dist = truthful.values[i]
    g_cdf = competitor_max_cdf(truthful, i)
    if noise.is_degenerate:
        numer = float(g_cdf(p)) * (1.0 - float(dist.cdf(p)))
    else:
        pts = [x for x in (p, *truthful.breakpoints()) if 0.0 < x < dist.hi]
        numer, _ = integrate.quad(
            lambda m: float(g_cdf(m)) * float(noise.pdf(m - p)) * (1.0 - float(dist.cdf(m))),
            0.0,
            dist.hi,
            points=pts or None,
            epsabs=1e-10,
            epsrel=1e-10,
            limit=200,
        )
    return 1.0 - eta * numer / stage1_allocation_value(truthful, i)


def smoothing_kappa(profile: MarketProfile, noise: NoiseDistribution) -> float:
    """``kappa = sum_i E[F(-v_i)]``, the zero-reserve threshold of the smoothing mechanism."""
    return smoothed_bid_cdf_sum(profile.truthful(), noise, 0.0)


def _noise_weighted(profile, noise, r, j, weight) -> float:
    dist = profile.values[j]
    if noise.is_degenerate:
        return weight(r) * float(dist.pdf(r))
    pts = [r - k for k in noise.kinks() if dist.lo < r - k < dist.hi]
    val, _ = integrate.quad(
        lambda v: weight(v) * float(noise.pdf(r - v)) * float(dist.pdf(v)),
        dist.lo,
        dist.hi,
        points=pts or None,
        epsabs=1e-12,
        epsrel=1e-11,
        limit=200,
    )
    return val


def local_sensitivity_zeta(
    profile: MarketProfile, lam: float, noise: NoiseDistribution, i: int, numerator: str = "bidder"
) -> float:
    """Symmetrized derivative of the smoothed reserve in bidder ``i``'s shading factor.

    Zero when ``kappa > n - lam``; otherwise
    ``int v f(r* - v) dD_i / sum_j int f(r* - v) dD_j``, halved when
    ``kappa == n - lam``. Only bidder ``i`` shades, so only its value law enters
    the numerator; ``numerator="all"`` sums it over every bidder instead, which
    matches the finite difference only when ``n == 1``.
    """
    truthful = profile.truthful()
    truthful._check_index(i)
    check_lambda(lam, truthful.n)
    kappa = smoothing_kappa(truthful, noise)
    gap = kappa - (truthful.n - lam)
    if gap > 1e-12:
        return 0.0
    r = smoothed_oracle_reserve(truthful, noise, lam)
    owners = [i] if numerator == "bidder" else range(truthful.n)
    num = sum(_noise_weighted(truthful, noise, r, j, lambda v: v) for j in owners)
    den = sum(_noise_weighted(truthful, noise, r, j, lambda v: 1.0) for j in range(truthful.n))
    if den <= 0.0:
        raise ZeroDivisionError(f"no smoothed bid density at the reserve {r}")
    zeta = num / den
    return 0.5 * zeta if abs(gap) <= 1e-12 else zeta


def ic_metric_srcp_closed(profile: MarketProfile, lam: float, noise: NoiseDistribution, i: int) -> float:
    """``1 - zeta G_i(r*) (1 - D_i(r*)) / E[v_i G_i(v_i)]`` for the smoothing mechanism."""
    truthful = profile.truthful()
    zeta = local_sensitivity_zeta(truthful, lam, noise, i)
    if zeta == 0.0:
        return 1.0
    r = smoothed_oracle_reserve(truthful, noise, lam)
    g = float(competitor_max_cdf(truthful, i)(r))
    tail = 1.0 - float(truthful.values[i].cdf(r))
    return 1.0 - zeta * g * tail / stage1_allocation_value(truthful, i)


# --------------------------------------------------------------------------- bound constants


def estimate_cdf_lipschitz(profile: MarketProfile, n_grid: int = 10_000) -> float:
    """Largest grid slope of ``D^(1)`` and ``D^(2)`` over the value support."""
    d1, d2 = top_order_cdfs(profile.truthful())
    x = np.linspace(profile.lo, profile.hi, n_grid)
    dx = np.diff(x)
    slopes = [np.abs(np.diff(d1(x))) / dx]
    if profile.n > 1:
        slopes.append(np.abs(np.diff(d2(x))) / dx)
    return float(max(s.max() for s in slopes))


def estimate_gamma_lipschitz(
    profile: MarketProfile,
    strategies: Optional[Sequence[BiddingStrategy]] = None,
    n_grid: int = 10_000,
    y_range: Optional[tuple[float, float]] = None,
) -> float:
    """Lipschitz constant of the inverse of ``p -> sum_i D_i(beta_i^{-1}(p))``.

    The inverse is tabulated on ``n_grid`` levels spanning ``y_range``
    (default ``[0, n]``) and the largest consecutive slope is returned. Raises
    when the forward map is flat somewhere strictly inside ``(0, n)``.
    """
    if strategies is not None:
        profile = MarketProfile(profile.values, tuple(strategies))
    n = profile.n
    top = profile.max_bid()
    p = np.linspace(0.0, top, 20_001)
    s = profile.bid_cdf_sum(p)
    inside = (s[:-1] > 0.0) & (s[1:] < n)
    flat = inside & (np.diff(s) <= 0.0)
    if np.any(flat):
        k = int(np.argmax(flat))
        raise ValueError(f"bid CDF sum is flat near p={p[k]:.6g}; its inverse is not Lipschitz")
    y_lo, y_hi = (0.0, float(n)) if y_range is None else y_range
    y = np.linspace(y_lo, y_hi, n_grid)
    gamma = bisect_increasing_vec(profile.bid_cdf_sum, y, 0.0, top, tol=1e-13)
    return float(np.max(np.diff(gamma) / np.diff(y)))


def bound_params(profile: MarketProfile, delta: float) -> BoundParams:
    return BoundParams(
        L=estimate_cdf_lipschitz(profile),
        mu=estimate_gamma_lipschitz(profile),
        delta=delta,
    )


def dp_revenue_bound(L: float, epsilon: float, delta: float) -> float:
    """Revenue loss ``(3L + 4) ln(1/delta) / epsilon`` allowed with probability ``1 - delta``."""
    if math.isinf(epsilon):
        return 0.0
    return (3.0 * L + 4.0) * math.log(1.0 / delta) / epsilon


def validate_dp_revenue_bound(
    profile: MarketProfile,
    lam: float,
    epsilon: float,
    delta: float,
    n_trials: int,
    rng: np.random.Generator,
    L: Optional[float] = None,
) -> float:
    """Fraction of Laplace draws whose noisy-reserve revenue falls below the guarantee."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    truthful = profile.truthful()
    if L is None:
        L = estimate_cdf_lipschitz(truthful)
    p = oracle_clearing_price(profile, lam)
    noise = noise_from_epsilon(epsilon)
    z = noise.sample(rng, n_trials)
    rev = expected_revenue_closed(truthful, np.maximum(p + z, 0.0))
    floor = float(expected_revenue_closed(truthful, p)) - dp_revenue_bound(L, epsilon, delta)
    return float(np.mean(rev < floor - 1e-12))


def dp_violation_allowance(delta: float, n_trials: int) -> float:
    """``delta + 3 sqrt(delta (1 - delta) / n_trials)``."""
    return delta + 3.0 * math.sqrt(delta * (1.0 - delta) / n_trials)


@dataclass(frozen=True)
class SmoothingBoundCheck:
    lam: float
    epsilon: float
    clearing_price: float
    smoothed_reserve: float
    revenue_loss: float
    bound: float
    zero_branch: bool

    @property
    def holds(self) -> bool:
        return self.revenue_loss <= self.bound + 1e-12


def check_srcp_revenue_bound(
    profile: MarketProfile,
    lam: float,
    epsilon: float,
    L: Optional[float] = None,
    mu: Optional[float] = None,
) -> SmoothingBoundCheck:
    """Deterministic check of ``Rev(r^s) >= Rev(p^c) - (6L + 8) sqrt(mu max(n - lam, lam) / eps)``."""
    if L is None:
        L = estimate_cdf_lipschitz(profile)
    if mu is None:
        mu = estimate_gamma_lipschitz(profile)
    noise = noise_from_epsilon(epsilon)
    truthful = profile.truthful()
    p = oracle_clearing_price(profile, lam)
    r = smoothed_oracle_reserve(profile, noise, lam)
    loss = float(expected_revenue_closed(truthful, p)) - float(expected_revenue_closed(truthful, r))
    n = profile.n
    bound = 0.0 if math.isinf(epsilon) else (6.0 * L + 8.0) * math.sqrt(mu * max(n - lam, lam) / epsilon)
    zero_branch = smoothed_bid_cdf_sum(profile, noise, 0.0) >= n - lam if not noise.is_degenerate else False
    return SmoothingBoundCheck(lam, epsilon, p, r, loss, bound, bool(zero_branch))


__all__ = [
    "BoundParams",
    "MetricEstimate",
    "ZeroNoise",
    "bound_params",
    "check_srcp_revenue_bound",
    "dp_rcp_expected_revenue",
    "dp_revenue_bound",
    "dp_violation_allowance",
    "estimate_cdf_lipschitz",
    "estimate_gamma_lipschitz",
    "expected_revenue_closed",
    "expected_revenue_mc",
    "expected_second_value",
    "expected_top_value",
    "fixed_reserve",
    "ic_metric_dp_closed",
    "ic_metric_mc",
    "ic_metric_srcp_closed",
    "local_sensitivity_eta",
    "local_sensitivity_zeta",
    "revenue_samples",
    "shaded_reserves",
    "smoothing_kappa",
    "stage1_allocation_value",
    "validate_dp_revenue_bound",
]
