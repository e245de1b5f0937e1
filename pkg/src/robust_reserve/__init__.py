"""Reserve prices trained on past bids, made robust to strategic bid shading with noise."""

__version__ = "0.1.0"

from .clearing import empirical_clearing_price, oracle_clearing_price, smoothed_oracle_reserve
from .distributions import Laplace, MarketProfile, TruncatedLognormal, Uniform, ZeroNoise
from .mechanisms import MechanismConfig, run_auction, train

__all__ = [
    "Laplace",
    "MarketProfile",
    "MechanismConfig",
    "TruncatedLognormal",
    "Uniform",
    "ZeroNoise",
    "__version__",
    "empirical_clearing_price",
    "oracle_clearing_price",
    "run_auction",
    "smoothed_oracle_reserve",
    "train",
]
