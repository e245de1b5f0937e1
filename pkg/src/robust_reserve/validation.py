"""Numerical self-checks: revenue guarantees, oracle anchors and sensitivity derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .clearing import oracle_clearing_price, smoothed_oracle_reserve, smoothed_oracle_reserve_by_noise
from .distributions import Laplace, MarketProfile, Uniform
from .metrics import (
    check_srcp_revenue_bound,
    dp_violation_allowance,
    estimate_cdf_lipschitz,
    estimate_gamma_lipschitz,
    local_sensitivity_eta,
    local_sensitivity_zeta,
    validate_dp_revenue_bound,
)
from .numerics import derive_rng

FD_STEP = 1e-4
FD_RTOL = 1e-3


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    passed: bool
    relation: str = "<="

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name}: measured={self.measured:.6g} {self.relation} {self.bound:.6g}"


def eta_finite_difference(profile: MarketProfile, lam: float, i: int, h: float = FD_STEP) -> float:
    up = oracle_clearing_price(profile.shaded(i, 1.0 + h), lam, 1e-14)
    down = oracle_clearing_price(profile.shaded(i, 1.0 - h), lam, 1e-14)
    return (up - down) / (2.0 * h)


def zeta_finite_difference(profile: MarketProfile, lam: float, noise, i: int, h: float = FD_STEP) -> float:
    up = smoothed_oracle_reserve(profile.shaded(i, 1.0 + h), noise, lam, 1e-13)
    down = smoothed_oracle_reserve(profile.shaded(i, 1.0 - h), noise, lam, 1e-13)
    return (up - down) / (2.0 * h)


def _relative_check(name: str, value: float, reference: float) -> Check:
    err = abs(value - reference) / max(abs(reference), 1e-12)
    return Check(name, err, FD_RTOL, err <= FD_RTOL)


def default_profiles() -> list[tuple[str, MarketProfile]]:
    return [("uniform n=1", MarketProfile.iid(Uniform(), 1)), ("uniform n=2", MarketProfile.iid(Uniform(), 2))]


def dp_bound_checks(seed: int, n_trials: int = 100_000) -> list[Check]:
    profile = MarketProfile.iid(Uniform(), 1)
    out = []
    for eps in (2.0, 10.0, math.inf):
        for delta in (0.05, 0.2):
            rate = validate_dp_revenue_bound(
                profile, 0.5, eps, delta, n_trials, derive_rng(seed, 1, int(delta * 100), 0 if math.isinf(eps) else int(eps))
            )
            allow = 0.0 if math.isinf(eps) else dp_violation_allowance(delta, n_trials)
            out.append(Check(f"noisy-reserve revenue bound, eps={eps:g}, delta={delta:g}", rate, allow, rate <= allow))
    return out


def smoothing_bound_checks(profiles: Iterable[tuple[str, MarketProfile]]) -> list[Check]:
    out = []
    for label, profile in profiles:
        L = estimate_cdf_lipschitz(profile)
        mu = estimate_gamma_lipschitz(profile)
        n = profile.n
        for lam in (0.25 * n, 0.5 * n, 0.75 * n):
            for eps in (1.0, 10.0, math.inf):
                res = check_srcp_revenue_bound(profile, lam, eps, L, mu)
                if math.isinf(eps):
                    gap = abs(res.smoothed_reserve - res.clearing_price)
                    out.append(Check(f"{label} no-noise reserve gap, lambda={lam:g}", gap, 0.0, gap == 0.0, "=="))
                else:
                    out.append(
                        Check(
                            f"{label} smoothed revenue loss, lambda={lam:g}, eps={eps:g}",
                            res.revenue_loss,
                            res.bound,
                            res.holds,
                        )
                    )
    return out


def oracle_checks() -> list[Check]:
    out = []
    for n in (1, 2, 3):
        profile = MarketProfile.iid(Uniform(), n)
        for lam in (0.3 * n, 0.5 * n):
            err = abs(oracle_clearing_price(profile, lam) - (1.0 - lam / n))
            out.append(Check(f"uniform n={n} clearing price, lambda={lam:g}", err, 1e-8, err < 1e-8))
    sym = smoothed_oracle_reserve(MarketProfile.iid(Uniform(), 1), Laplace(2.0), 0.5)
    out.append(Check("symmetric smoothed reserve", abs(sym - 0.5), 1e-6, abs(sym - 0.5) < 1e-6))
    for label, profile in default_profiles():
        for eps in (1.0, 5.0):
            noise = Laplace(eps)
            lam = 0.5 * profile.n
            a = smoothed_oracle_reserve(profile, noise, lam)
            b = smoothed_oracle_reserve_by_noise(profile, noise, lam)
            out.append(Check(f"{label} smoothed reserve routes agree, eps={eps:g}", abs(a - b), 1e-6, abs(a - b) <= 1e-6))
    return out


def sensitivity_checks(
    profiles: Iterable[tuple[str, MarketProfile]], eta_denominator: str = "all"
) -> list[Check]:
    out = []
    for label, profile in profiles:
        n = profile.n
        # the competitors-only denominator is undefined for a lone bidder
        denominator = eta_denominator if n > 1 else "all"
        for lam in (0.3 * n, 0.6 * n):
            eta = local_sensitivity_eta(profile, lam, 0, denominator=denominator)
            fd = eta_finite_difference(profile, lam, 0)
            out.append(_relative_check(f"{label} eta vs finite difference, lambda={lam:g}", eta, fd))
            noise = Laplace(3.0)
            zeta = local_sensitivity_zeta(profile, lam, noise, 0)
            if zeta > 0.0:
                fdz = zeta_finite_difference(profile, lam, noise, 0)
                out.append(_relative_check(f"{label} zeta vs finite difference, lambda={lam:g}", zeta, fdz))
    return out


def run_suite(
    seed: int = 0,
    extra_profiles: Optional[list[tuple[str, MarketProfile]]] = None,
    eta_denominator: str = "all",
    n_trials: int = 100_000,
) -> list[Check]:
    profiles = default_profiles() + list(extra_profiles or [])
    return (
        oracle_checks()
        + sensitivity_checks(profiles, eta_denominator)
        + dp_bound_checks(seed, n_trials)
        + smoothing_bound_checks(profiles)
    )
