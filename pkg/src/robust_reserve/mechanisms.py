"""Reserve mechanisms trained on stage-1 bids and the second-price auction they feed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .clearing import as_batch, check_lambda, empirical_clearing_price
from .distributions import BiddingStrategy, MarketProfile, NoiseDistribution, ZeroNoise, noise_from_epsilon

MECHANISMS = ("dp_rcp", "srcp", "no_noise")


@dataclass(frozen=True)
class MechanismConfig:
    """Which reserve rule to run, at which ``lambda``, with which noise law.

    ``no_noise`` is the plain clearing price; it behaves exactly like
    ``dp_rcp`` with degenerate noise.
    """

    kind: str
    lam: float
    noise: NoiseDistribution = field(default_factory=ZeroNoise)

    def __post_init__(self):
        if self.kind not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.kind!r}; expected one of {MECHANISMS}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.kind == "no_noise" and not self.noise.is_degenerate:
            object.__setattr__(self, "noise", ZeroNoise())

    @classmethod
    def from_epsilon(cls, kind: str, lam: float, epsilon: float, family: str = "laplace"):
        return cls(kind, lam, noise_from_epsilon(epsilon, family))

    @property
    def epsilon(self) -> float:
        return self.noise.epsilon


@dataclass(frozen=True)
class TrainedPolicy:
    kind: str
    lam: float
    base_price: float
    noise: NoiseDistribution = field(default_factory=ZeroNoise)

    def __post_init__(self):
        if self.base_price < 0:
            raise ValueError("trained base price must be nonnegative")
        if self.kind == "no_noise":
            object.__setattr__(self, "noise", ZeroNoise())

    @property
    def is_random(self) -> bool:
        return self.kind == "dp_rcp" and not self.noise.is_degenerate

    def to_record(self) -> str:
        """Flat ``kind,lambda,epsilon,base_price`` record."""
        eps = self.noise.epsilon
        eps_txt = "inf" if math.isinf(eps) else repr(float(eps))
        return f"{self.kind},{self.lam!r},{eps_txt},{self.base_price:.12g}"

    @classmethod
    def from_record(cls, record: str, family: str = "laplace") -> "TrainedPolicy":
        kind, lam, eps, price = record.strip().split(",")
        return cls(kind, float(lam), float(price), noise_from_epsilon(float(eps), family))


@dataclass(frozen=True)
class AuctionOutcome:
    winner: Optional[int]
    payment: float
    reserve: float

    @property
    def sold(self) -> bool:
        return self.winner is not None


@dataclass
class AuctionResults:
    """Vectorized outcomes of many auctions; iterate to get :class:`AuctionOutcome` objects."""

    winners: np.ndarray  # -1 marks an unsold item
    payments: np.ndarray
    reserves: np.ndarray

    def __len__(self) -> int:
        return len(self.payments)

    def __iter__(self) -> Iterator[AuctionOutcome]:
        for w, pay, r in zip(self.winners, self.payments, self.reserves):
            yield AuctionOutcome(None if w < 0 else int(w), float(pay), float(r))

    @property
    def sold(self) -> np.ndarray:
        return self.winners >= 0

    def mean_revenue(self) -> float:
        return float(self.payments.mean())


def train(config: MechanismConfig, batch, rng: np.random.Generator) -> TrainedPolicy:
    """Fit the base clearing price on a stage-1 bid batch.

    ``srcp`` first perturbs every bid with an independent noise draw (one
    ``n``-vector per profile); the other kinds fit the raw bids.
    """
    batch = as_batch(batch)
    check_lambda(config.lam, batch.shape[1])
    if config.kind == "srcp":
        batch = batch + config.noise.sample(rng, batch.shape)
    price = empirical_clearing_price(batch, config.lam)
    return TrainedPolicy(config.kind, config.lam, price, config.noise)


def draw_reserve(policy: TrainedPolicy, rng: np.random.Generator, size=None):
    """Reserve for the next auction(s); only ``dp_rcp`` consumes randomness."""
    if not policy.is_random:
        return policy.base_price if size is None else np.full(size, policy.base_price)
    z = policy.noise.sample(rng, size)
    out = np.maximum(policy.base_price + z, 0.0)
    return float(out) if size is None else out


def run_auction(bids: Sequence[float], reserve: float) -> AuctionOutcome:
    """Second-price auction with an anonymous reserve; ties go to the lowest index."""
    b = np.asarray(bids, dtype=float)
    if b.size == 0:
        raise ValueError("an auction needs at least one bid")
    if reserve < 0:
        raise ValueError("reserve must be nonnegative")
    res = run_auctions(b[None, :], np.array([reserve]))
    return next(iter(res))


def run_auctions(bids: np.ndarray, reserves) -> AuctionResults:
    """Vectorized :func:`run_auction` over the rows of ``bids``."""
    bids = as_batch(bids)
    k, n = bids.shape
    reserves = np.broadcast_to(np.asarray(reserves, dtype=float), (k,))
    winner = np.argmax(bids, axis=1)  # first maximal index
    top = bids[np.arange(k), winner]
    if n == 1:
        second = np.zeros(k)
    else:
        second = np.partition(bids, n - 2, axis=1)[:, n - 2]
    sold = top >= reserves
    payments = np.where(sold, np.maximum(second, reserves), 0.0)
    winners = np.where(sold, winner, -1)
    return AuctionResults(winners, payments, np.array(reserves, copy=True))


def simulate_two_stage(
    config: MechanismConfig,
    profile: MarketProfile,
    stage1_strategies: Optional[Sequence[BiddingStrategy]],
    k: int,
    rng: np.random.Generator,
) -> tuple[TrainedPolicy, AuctionResults]:
    """Stage 1 at reserve 0 with strategic bids, train, then stage 2 with truthful bids.

    Stage-2 values are fresh draws. Under ``dp_rcp`` each stage-2 auction gets
    its own noisy reserve.
    """
    if k < 1:
        raise ValueError("each stage needs at least one auction")
    if stage1_strategies is not None:
        profile = MarketProfile(profile.values, tuple(stage1_strategies))
    values1 = profile.sample_values(rng, k)
    bids1 = profile.bids(values1)
    policy = train(config, bids1, rng)
    values2 = profile.sample_values(rng, k)
    reserves = draw_reserve(policy, rng, k)
    return policy, run_auctions(values2, reserves)
