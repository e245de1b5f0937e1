"""Value laws, noise laws, bidding strategies and the order-statistic CDFs built from them.

Every object here is a frozen dataclass so it can be hashed, cached and shared
between workers. Samplers never own a generator; callers pass one in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

_U_MIN = 1e-300  # keeps inverse-transform draws off the open endpoints


def _clip_unit(u):
    return np.clip(u, _U_MIN, 1.0 - 1e-16)


# --------------------------------------------------------------------------- values


@dataclass(frozen=True)
class ValueDistribution:
    """Base class for a bidder's value law on a bounded interval ``[lo, hi]``."""

    lo: float
    hi: float

    kind = "abstract"

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-transform draw(s): ``quantile(U)`` with ``U ~ Uniform[0, 1)``."""
        return self.quantile(rng.random(size))

    def _check_q(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0.0) | (q > 1.0)) or np.any(np.isnan(q)):
            raise ValueError(f"quantile level outside [0, 1]: {q}")
        return q

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ValueDistribution):
    lo: float = 0.0
    hi: float = 1.0

    kind = "uniform"

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi < math.inf):
            raise ValueError(f"uniform support must satisfy 0 <= lo < hi: [{self.lo}, {self.hi}]")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def quantile(self, q):
        q = self._check_q(q)
        return self.lo + q * (self.hi - self.lo)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TruncatedLognormal(ValueDistribution):
    """``exp(N(mu, sigma^2))`` conditioned on ``[lo, hi]`` (renormalized, no atoms)."""

    mu: float = 0.0
    sigma: float = 0.5
    lo: float = 0.0
    hi: float = 2.5
    _z_lo: float = field(init=False, repr=False, compare=False)
    _phi_lo: float = field(init=False, repr=False, compare=False)
    _mass: float = field(init=False, repr=False, compare=False)

    kind = "truncated_lognormal"

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.lo < self.hi < math.inf):
            raise ValueError(f"truncation must satisfy 0 <= lo < hi: [{self.lo}, {self.hi}]")
        z_lo = -math.inf if self.lo == 0.0 else (math.log(self.lo) - self.mu) / self.sigma
        z_hi = (math.log(self.hi) - self.mu) / self.sigma
        phi_lo = float(ndtr(z_lo))
        mass = float(ndtr(z_hi)) - phi_lo
        if mass <= 0.0:
            raise ValueError("truncation window carries no lognormal mass")
        object.__setattr__(self, "_z_lo", z_lo)
        object.__setattr__(self, "_phi_lo", phi_lo)
        object.__setattr__(self, "_mass", mass)

    def _z(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        val = (ndtr(self._z(xc)) - self._phi_lo) / self._mass
        val = np.where(x >= self.hi, 1.0, val)
        return np.clip(np.where(x <= self.lo, 0.0, val), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x >= self.lo) & (x <= self.hi)
        xs = np.where(inside, x, 1.0)
        z = self._z(xs)
        dens = np.exp(-0.5 * z * z) / (xs * self.sigma * math.sqrt(2.0 * math.pi) * self._mass)
        return np.where(inside, dens, 0.0)

    def quantile(self, q):
        q = self._check_q(q)
        level = self._phi_lo + q * self._mass
        x = np.exp(self.mu + self.sigma * ndtri(level))
        x = np.where(q <= 0.0, self.lo, np.where(q >= 1.0, self.hi, x))
        return np.clip(x, self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu, "sigma": self.sigma, "lo": self.lo, "hi": self.hi}


def value_distribution_from_dict(spec: dict) -> ValueDistribution:
    kind = spec.get("kind")
    if kind == "uniform":
        return Uniform(lo=float(spec.get("lo", 0.0)), hi=float(spec.get("hi", 1.0)))
    if kind == "truncated_lognormal":
        return TruncatedLognormal(
            mu=float(spec.get("mu", 0.0)),
            sigma=float(spec.get("sigma", 0.5)),
            lo=float(spec.get("lo", 0.0)),
            hi=float(spec.get("hi", 2.5)),
        )
    raise ValueError(f"unknown value distribution kind: {kind!r}")


# --------------------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseDistribution:
    """Base class for the additive robustness noise ``z ~ F``."""

    kind = "abstract"

    @property
    def epsilon(self) -> float:
        raise NotImplementedError

    @property
    def is_degenerate(self) -> bool:
        return False

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def integrated_cdf(self, x):
        """``H(x) = integral of F over (-inf, x]``, so ``E[(x - z)^+] = H(x)``."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        return self.quantile(_clip_unit(rng.random(size)))

    def kinks(self) -> tuple[float, ...]:
        """Points where the density is not smooth (quadrature breakpoints)."""
        return ()

    def support_radius(self, tail: float = 1e-14) -> float:
        """Half-width outside of which each tail carries less than ``tail`` mass."""
        return float(self.quantile(1.0 - tail))


@dataclass(frozen=True)
class ZeroNoise(NoiseDistribution):
    """Point mass at 0; the ``epsilon = inf`` member of every family."""

    kind = "degenerate_zero"

    @property
    def epsilon(self) -> float:
        return math.inf

    @property
    def is_degenerate(self) -> bool:
        return True

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= 0.0, 1.0, 0.0)

    def pdf(self, x):
        raise ValueError("the degenerate noise law has no density")

    def quantile(self, q):
        return np.zeros_like(np.asarray(q, dtype=float))

    def integrated_cdf(self, x):
        return np.maximum(np.asarray(x, dtype=float), 0.0)

    def sample(self, rng: np.random.Generator, size=None):
        # consumes nothing from the stream
        if size is None:
            return 0.0
        return np.zeros(size)

    def support_radius(self, tail: float = 1e-14) -> float:
        return 0.0


@dataclass(frozen=True)
class Laplace(NoiseDistribution):
    """Centered Laplace noise with scale ``1 / epsilon``."""

    eps: float = 1.0

    kind = "laplace"

    def __post_init__(self):
        if not (0.0 < self.eps < math.inf):
            raise ValueError(f"laplace epsilon must be finite and positive, got {self.eps}")

    @property
    def epsilon(self) -> float:
        return self.eps

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-self.eps * np.abs(x))
        return np.where(x < 0.0, 0.5 * e, 1.0 - 0.5 * e)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.eps * np.exp(-self.eps * np.abs(x))

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            lower = np.log(2.0 * q) / self.eps
            upper = -np.log(2.0 * (1.0 - q)) / self.eps
        return np.where(q < 0.5, lower, upper)

    def integrated_cdf(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-self.eps * np.abs(x)) / (2.0 * self.eps)
        return np.where(x < 0.0, e, x + e)

    def kinks(self) -> tuple[float, ...]:
        return (0.0,)


@dataclass(frozen=True)
class Gaussian(NoiseDistribution):
    """Centered normal noise with standard deviation ``1 / epsilon`` (optional family)."""

    eps: float = 1.0

    kind = "gaussian"

    def __post_init__(self):
        if not (0.0 < self.eps < math.inf):
            raise ValueError(f"gaussian epsilon must be finite and positive, got {self.eps}")

    @property
    def epsilon(self) -> float:
        return self.eps

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=float) * self.eps)

    def pdf(self, x):
        t = np.asarray(x, dtype=float) * self.eps
        return self.eps * np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)

    def quantile(self, q):
        return ndtri(np.asarray(q, dtype=float)) / self.eps

    def integrated_cdf(self, x):
        x = np.asarray(x, dtype=float)
        t = x * self.eps
        return x * ndtr(t) + np.exp(-0.5 * t * t) / (self.eps * math.sqrt(2.0 * math.pi))


def noise_from_epsilon(epsilon: float, family: str = "laplace") -> NoiseDistribution:
    """Noise law of the given family at level ``epsilon``; ``inf`` means no noise."""
    epsilon = float(epsilon)
    if math.isinf(epsilon) and epsilon > 0:
        return ZeroNoise()
    if family == "laplace":
        return Laplace(epsilon)
    if family == "gaussian":
        return Gaussian(epsilon)
    raise ValueError(f"unknown noise family: {family!r}")


# --------------------------------------------------------------------------- strategies


@dataclass(frozen=True)
class BiddingStrategy:
    """Linear bid map ``v -> alpha * v``; ``alpha = 1`` is truthful bidding."""

    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"shading factor must be positive, got {self.alpha}")

    @property
    def kind(self) -> str:
        return "identity" if self.alpha == 1.0 else "linear_shading"

    def __call__(self, v):
        return self.alpha * np.asarray(v, dtype=float)

    def inverse(self, p):
        """Generalized inverse ``inf{v : alpha v >= p}``, pinned to 0 for ``p <= 0``."""
        p = np.asarray(p, dtype=float)
        return np.where(p <= 0.0, 0.0, p / self.alpha)


IDENTITY = BiddingStrategy(1.0)


# --------------------------------------------------------------------------- profiles


@dataclass(frozen=True)
class MarketProfile:
    """Independent bidders, each with a value law and a stage-1 bidding strategy."""

    values: tuple[ValueDistribution, ...]
    strategies: tuple[BiddingStrategy, ...] = ()

    def __post_init__(self):
        values = tuple(self.values)
        if not values:
            raise ValueError("a market needs at least one bidder")
        strategies = tuple(self.strategies) or (IDENTITY,) * len(values)
        if len(strategies) != len(values):
            raise ValueError("one bidding strategy per bidder is required")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "strategies", strategies)

    @classmethod
    def iid(cls, dist: ValueDistribution, n: int) -> "MarketProfile":
        return cls(values=(dist,) * n)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def lo(self) -> float:
        return min(d.lo for d in self.values)

    @property
    def hi(self) -> float:
        return max(d.hi for d in self.values)

    def breakpoints(self) -> list[float]:
        return sorted({d.lo for d in self.values} | {d.hi for d in self.values})

    def truthful(self) -> "MarketProfile":
        return replace(self, strategies=(IDENTITY,) * self.n)

    def with_strategy(self, i: int, strategy: BiddingStrategy) -> "MarketProfile":
        self._check_index(i)
        strategies = list(self.strategies)
        strategies[i] = strategy
        return replace(self, strategies=tuple(strategies))

    def shaded(self, i: int, alpha: float) -> "MarketProfile":
        """Truthful profile except bidder ``i`` bids ``alpha * v``."""
        return self.truthful().with_strategy(i, BiddingStrategy(alpha))

    def max_bid(self) -> float:
        return max(float(s(d.hi)) for d, s in zip(self.values, self.strategies))

    def bid_cdf_sum(self, p):
        """``sum_i D_i(beta_i^{-1}(p))``: expected number of bids at or below ``p``."""
        p = np.asarray(p, dtype=float)
        return sum(d.cdf(s.inverse(p)) for d, s in zip(self.values, self.strategies))

    def sample_values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``(size, n)`` array of independent value draws, one column per bidder."""
        return np.column_stack([d.sample(rng, size) for d in self.values])

    def bids(self, values: np.ndarray) -> np.ndarray:
        return np.column_stack([s(values[:, j]) for j, s in enumerate(self.strategies)])

    def _check_index(self, i: int):
        if not (0 <= i < self.n):
            raise IndexError(f"bidder index {i} out of range for {self.n} bidders")


def cdf(dist, x):
    """CDF of a value or noise law (values outside the support clamp to 0 or 1)."""
    return dist.cdf(x)


def quantile(dist: ValueDistribution, q):
    return dist.quantile(q)


def sample(dist, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def _prod(arrays: Sequence[np.ndarray], shape) -> np.ndarray:
    out = np.ones(shape)
    for a in arrays:
        out = out * a
    return out


def top_order_cdfs(profile: MarketProfile) -> tuple[Callable, Callable]:
    """CDFs of the highest and second-highest truthful values.

    With one bidder the second-highest value is taken to be 0, so its CDF is
    the unit step at 0.
    """
    dists = profile.values

    def d1(x):
        x = np.asarray(x, dtype=float)
        return _prod([d.cdf(x) for d in dists], x.shape)

    def d2(x):
        x = np.asarray(x, dtype=float)
        if len(dists) == 1:
            return np.where(x >= 0.0, 1.0, 0.0)
        cdfs = [d.cdf(x) for d in dists]
        total = _prod(cdfs, x.shape)
        for i in range(len(cdfs)):
            others = _prod(cdfs[:i] + cdfs[i + 1 :], x.shape)
            total = total + (1.0 - cdfs[i]) * others
        return total

    return d1, d2


def competitor_max_cdf(profile: MarketProfile, i: int) -> Callable:
    """CDF ``G_i`` of ``m_i = max_{j != i} v_j`` (unit step at 0 when alone)."""
    profile._check_index(i)
    others = [d for j, d in enumerate(profile.values) if j != i]

    def g_cdf(x):
        x = np.asarray(x, dtype=float)
        if not others:
            return np.where(x >= 0.0, 1.0, 0.0)
        return _prod([d.cdf(x) for d in others], x.shape)

    return g_cdf


def competitor_max_pdf(profile: MarketProfile, i: int) -> Callable:
    """Density ``g_i`` of ``m_i`` by the product rule; undefined for a lone bidder."""
    profile._check_index(i)
    others = [d for j, d in enumerate(profile.values) if j != i]
    if not others:
        raise ValueError("a lone bidder faces the point mass m_i = 0, which has no density")

    def g_pdf(x):
        x = np.asarray(x, dtype=float)
        cdfs = [d.cdf(x) for d in others]
        total = np.zeros(x.shape)
        for j, d in enumerate(others):
            total = total + d.pdf(x) * _prod(cdfs[:j] + cdfs[j + 1 :], x.shape)
        return total

    return g_pdf
