"""Seeded two-stage sweeps over (lambda, epsilon) grids and the revenue/IC tradeoff summary."""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .distributions import MarketProfile, TruncatedLognormal, value_distribution_from_dict
from .mechanisms import MechanismConfig, simulate_two_stage
from .metrics import MetricEstimate, expected_second_value, expected_top_value, ic_metric_mc
from .numerics import derive_rng

DEFAULT_EPSILONS = (0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8, math.inf)
CSV_COLUMNS = (
    "mechanism",
    "lambda",
    "epsilon",
    "n_bidders",
    "rev_mean",
    "rev_ci",
    "dic_bidder",
    "dic_mean",
    "dic_ci",
    "repetitions",
    "seed",
)
NORMALIZERS = ("welfare", "second_value")
SWEEP_MECHANISMS = ("dp_rcp", "srcp")


def _default_profile() -> MarketProfile:
    return MarketProfile.iid(TruncatedLognormal(mu=0.0, sigma=0.5, lo=0.0, hi=2.5), 1)


@dataclass(frozen=True)
class ExperimentGrid:
    """A full sweep: value profile, mechanisms, (lambda, epsilon) grid and sampling budget.

    ``ic_samples`` is the Monte Carlo size of each IC-metric estimate (``K`` when
    left unset). ``report_bidders`` selects which bidders get a DIC row.
    """

    profile: MarketProfile = field(default_factory=_default_profile)
    mechanisms: tuple[str, ...] = SWEEP_MECHANISMS
    lambdas: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    k: int = 5000
    alpha: float = 0.1
    repetitions: int = 10
    master_seed: int = 0
    normalizer: str = "welfare"
    ic_samples: Optional[int] = None
    report_bidders: tuple[int, ...] = (0,)
    noise_family: str = "laplace"

    def __post_init__(self):
        if not self.mechanisms:
            raise ValueError("grid needs at least one mechanism")
        for kind in self.mechanisms:
            if kind not in SWEEP_MECHANISMS:
                raise ValueError(f"unknown sweep mechanism {kind!r}")
        if not self.lambdas:
            raise ValueError("grid needs at least one lambda")
        if not self.epsilons:
            raise ValueError("grid needs at least one epsilon")
        if any(not (e > 0) for e in self.epsilons):
            raise ValueError("epsilons must be positive (use inf for no noise)")
        n = self.profile.n
        if any(lam < 0 or lam > n for lam in self.lambdas):
            raise ValueError(f"lambdas must lie in [0, {n}]")
        if self.k < 2 or self.repetitions < 2:
            raise ValueError("need K >= 2 and at least two repetitions for a confidence interval")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"normalizer must be one of {NORMALIZERS}")
        if self.normalizer == "second_value" and n < 2:
            raise ValueError("the second-value normalizer needs at least two bidders")
        for i in self.report_bidders:
            self.profile._check_index(i)

    @property
    def n_ic_samples(self) -> int:
        return self.k if self.ic_samples is None else self.ic_samples

    def normalizing_constant(self) -> float:
        truthful = self.profile.truthful()
        if self.normalizer == "welfare":
            return expected_top_value(truthful)
        return expected_second_value(truthful)

    def to_dict(self) -> dict:
        return {
            "profile": {"values": [d.to_dict() for d in self.profile.values]},
            "mechanisms": list(self.mechanisms),
            "lambdas": list(self.lambdas),
            "epsilons": [format_epsilon(e) for e in self.epsilons],
            "k": self.k,
            "alpha": self.alpha,
            "repetitions": self.repetitions,
            "master_seed": self.master_seed,
            "normalizer": self.normalizer,
            "ic_samples": self.n_ic_samples,
            "report_bidders": list(self.report_bidders),
            "noise_family": self.noise_family,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentGrid":
        data = dict(data)
        values = tuple(value_distribution_from_dict(v) for v in data.pop("profile")["values"])
        data["epsilons"] = tuple(parse_epsilon(e) for e in data["epsilons"])
        for key in ("mechanisms", "lambdas", "report_bidders"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(profile=MarketProfile(values), **data)


def format_epsilon(eps: float) -> str:
    return "inf" if math.isinf(eps) else f"{eps:.9g}"


def parse_epsilon(raw) -> float:
    if isinstance(raw, str):
        if raw.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(raw)
    return float(raw)


@dataclass(frozen=True)
class SweepResult:
    """One (mechanism, lambda, epsilon) cell; revenue is already normalized."""

    mechanism: str
    lam: float
    epsilon: float
    n_bidders: int
    revenue: MetricEstimate
    dic: tuple[tuple[int, MetricEstimate], ...]

    def dic_for(self, bidder: int = 0) -> MetricEstimate:
        for i, est in self.dic:
            if i == bidder:
                return est
        raise KeyError(f"no DIC recorded for bidder {bidder}")


def _value_key(x: float) -> int:
    # stable integer key for seeding; independent of grid ordering
    return 2**62 if math.isinf(x) else int(round(x * 1_000_000))


def cell_rng(grid: ExperimentGrid, lam: float, epsilon: float, rep: int, stream: int) -> np.random.Generator:
    """Generator for one repetition of one cell.

    The mechanism is deliberately not part of the key: both mechanisms see the
    same value draws, which makes their no-noise cells identical.
    """
    return derive_rng(grid.master_seed, grid.profile.n, _value_key(lam), _value_key(epsilon), rep, stream)


def run_repetition(grid: ExperimentGrid, mechanism: str, lam: float, epsilon: float, rep: int):
    """Normalized stage-2 revenue and per-bidder DIC for one seeded repetition."""
    config = MechanismConfig.from_epsilon(mechanism, lam, epsilon, grid.noise_family)
    truthful = grid.profile.truthful()
    _, outcome = simulate_two_stage(config, truthful, None, grid.k, cell_rng(grid, lam, epsilon, rep, 0))
    revenue = outcome.mean_revenue() / grid.normalizing_constant()
    dics = []
    for i in grid.report_bidders:
        est = ic_metric_mc(
            config, truthful, i, grid.alpha, grid.n_ic_samples, cell_rng(grid, lam, epsilon, rep, 1 + i)
        )
        dics.append(est.mean)
    return revenue, dics


def run_cell(grid: ExperimentGrid, mechanism: str, lam: float, epsilon: float) -> SweepResult:
    """All repetitions of one cell, aggregated with 95% CIs over repetition means."""
    revs, dics = [], []
    for rep in range(grid.repetitions):
        rev, dic = run_repetition(grid, mechanism, lam, epsilon, rep)
        revs.append(rev)
        dics.append(dic)
    dic_arr = np.array(dics)
    per_bidder = tuple(
        (i, MetricEstimate.from_samples(dic_arr[:, col], grid.master_seed))
        for col, i in enumerate(grid.report_bidders)
    )
    return SweepResult(
        mechanism,
        float(lam),
        float(epsilon),
        grid.profile.n,
        MetricEstimate.from_samples(revs, grid.master_seed),
        per_bidder,
    )


def _cell_job(args):
    return run_cell(*args)


def grid_cells(grid: ExperimentGrid) -> list[tuple[str, float, float]]:
    return sorted(
        (m, float(lam), float(eps)) for m in grid.mechanisms for lam in grid.lambdas for eps in grid.epsilons
    )


def run_sweep(grid: ExperimentGrid, jobs: int = 1, out: Optional[Path] = None) -> list[SweepResult]:
    """Run every cell, optionally in ``jobs`` worker processes, and write the CSV to ``out``.

    Results are sorted by (mechanism, lambda, epsilon) and do not depend on ``jobs``.
    """
    cells = grid_cells(grid)
    if not cells:
        raise ValueError("empty grid")
    if out is not None:
        out = Path(out)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out.parent}: {exc.strerror}") from exc
    tasks = [(grid, *cell) for cell in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, tasks))
    else:
        results = [_cell_job(t) for t in tasks]
    if out is not None:
        try:
            out.write_text(sweep_csv(grid, results))
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc.strerror}") from exc
    return results


def _g(x: float) -> str:
    return f"{x:.9g}"


def sweep_csv(grid: ExperimentGrid, results: Iterable[SweepResult]) -> str:
    """Render results as CSV with ``#`` provenance lines ahead of the column header."""
    buf = io.StringIO()
    buf.write(f"# robust_reserve {__version__}\n")
    buf.write(f"# config_sha256 {grid.config_hash()}\n")
    buf.write(f"# master_seed {grid.master_seed}\n")
    buf.write(f"# normalizer {grid.normalizer}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    ordered = sorted(results, key=lambda r: (r.mechanism, r.lam, r.epsilon))
    for r in ordered:
        for bidder, dic in r.dic:
            row = (
                r.mechanism,
                _g(r.lam),
                format_epsilon(r.epsilon),
                str(r.n_bidders),
                _g(r.revenue.mean),
                _g(r.revenue.ci_half_width),
                str(bidder),
                _g(dic.mean),
                _g(dic.ci_half_width),
                str(r.revenue.n_samples),
                str(grid.master_seed),
            )
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def read_sweep_csv(path) -> list[dict]:
    """Parse a sweep CSV (skipping ``#`` lines) into row dicts with numeric fields."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        rec = dict(zip(header, ln.split(",")))
        for key in ("lambda", "rev_mean", "rev_ci", "dic_mean", "dic_ci"):
            rec[key] = float(rec[key])
        rec["epsilon"] = parse_epsilon(rec["epsilon"])
        for key in ("n_bidders", "dic_bidder", "repetitions", "seed"):
            rec[key] = int(rec[key])
        rows.append(rec)
    return rows


# --------------------------------------------------------------------------- tradeoff analysis


@dataclass(frozen=True)
class TradeoffPoint:
    lam: float
    epsilon: float
    rev: float
    rev_ci: float
    dic: float
    dic_ci: float

    @classmethod
    def from_result(cls, r: SweepResult, bidder: int = 0) -> "TradeoffPoint":
        d = r.dic_for(bidder)
        return cls(r.lam, r.epsilon, r.revenue.mean, r.revenue.ci_half_width, d.mean, d.ci_half_width)


def point_dominates(a: TradeoffPoint, b: TradeoffPoint) -> bool:
    """``a`` beats ``b`` by more than the combined CI in one coordinate and is not worse beyond it in the other.

    The combined CI of two estimates is the sum of their half-widths.
    """
    cr = a.rev_ci + b.rev_ci
    cd = a.dic_ci + b.dic_ci
    not_worse = a.rev >= b.rev - cr and a.dic >= b.dic - cd
    better = a.rev > b.rev + cr or a.dic > b.dic + cd
    return not_worse and better


def curve_dominates(a: Sequence[TradeoffPoint], b: Sequence[TradeoffPoint]) -> bool:
    """Every point of curve ``b`` is dominated by some point of curve ``a``."""
    return all(any(point_dominates(p, q) for p in a) for q in b)


def best_tradeoff_point(points: Sequence[TradeoffPoint], n_ci: float = 3.0) -> TradeoffPoint:
    """Highest-DIC point whose revenue stays within ``n_ci`` combined CIs of the no-noise revenue."""
    ref = [p for p in points if math.isinf(p.epsilon)]
    if not ref:
        raise ValueError("curve has no epsilon = inf point")
    base = ref[0]
    close = [p for p in points if p.rev >= base.rev - n_ci * (p.rev_ci + base.rev_ci)]
    return max(close, key=lambda p: (p.dic, p.rev))


@dataclass
class ParetoReport:
    mechanism: str
    n_bidders: int
    curves: dict[float, list[TradeoffPoint]]
    dominated_by: dict[float, list[float]]
    ic_reversals: list[tuple[float, float, float]]

    @property
    def undominated(self) -> list[float]:
        return [lam for lam in sorted(self.curves) if not self.dominated_by[lam]]

    def render(self) -> str:
        out = [f"[{self.mechanism}, n={self.n_bidders}] undominated lambdas: "
               + ", ".join(_g(lam) for lam in self.undominated)]
        for lam in sorted(self.curves):
            best = best_tradeoff_point(self.curves[lam])
            by = ", ".join(_g(x) for x in self.dominated_by[lam]) or "none"
            out.append(
                f"  lambda={_g(lam)}: dominated by {by}; best eps={format_epsilon(best.epsilon)} "
                f"rev={best.rev:.4f}+-{best.rev_ci:.4f} dic={best.dic:.4f}+-{best.dic_ci:.4f}"
            )
        for lam, e1, e2 in self.ic_reversals:
            out.append(f"  note: lambda={_g(lam)} DIC rises from eps={format_epsilon(e1)} to eps={format_epsilon(e2)}")
        return "\n".join(out)


def pareto_summary(results: Sequence[SweepResult], bidder: int = 0) -> list[ParetoReport]:
    """CI-aware Pareto comparison of the lambda curves, one report per (mechanism, n_bidders)."""
    groups: dict[tuple[str, int], dict[float, list[TradeoffPoint]]] = {}
    for r in results:
        curves = groups.setdefault((r.mechanism, r.n_bidders), {})
        curves.setdefault(r.lam, []).append(TradeoffPoint.from_result(r, bidder))
    reports = []
    for (mech, n), curves in sorted(groups.items()):
        for pts in curves.values():
            pts.sort(key=lambda p: p.epsilon)
        dominated_by = {
            lam: [other for other in sorted(curves) if other != lam and curve_dominates(curves[other], curves[lam])]
            for lam in curves
        }
        reversals = []
        for lam, pts in curves.items():
            for p, q in zip(pts, pts[1:]):
                if q.dic > p.dic + p.dic_ci + q.dic_ci:
                    reversals.append((lam, p.epsilon, q.epsilon))
        reports.append(ParetoReport(mech, n, curves, dominated_by, sorted(reversals)))
    return reports
