import math

import numpy as np
import pytest

from robust_reserve.distributions import MarketProfile, TruncatedLognormal, Uniform
from robust_reserve.experiments import (
    CSV_COLUMNS,
    ExperimentGrid,
    SweepResult,
    TradeoffPoint,
    best_tradeoff_point,
    curve_dominates,
    pareto_summary,
    point_dominates,
    read_sweep_csv,
    run_cell,
    run_sweep,
    sweep_csv,
)
from robust_reserve.metrics import MetricEstimate, expected_second_value, expected_top_value


def small_grid(n=1, **kw):
    base = dict(
        profile=MarketProfile.iid(TruncatedLognormal(mu=0.0, sigma=0.5), n),
        lambdas=(0.4 * n, 0.8 * n),
        epsilons=(1.0, math.inf),
        k=300,
        repetitions=3,
        ic_samples=400,
        master_seed=11,
    )
    base.update(kw)
    return ExperimentGrid(**base)


def test_defaults_mirror_protocol():
    g = ExperimentGrid()
    assert (g.k, g.alpha, g.repetitions) == (5000, 0.1, 10)
    assert g.epsilons == (0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8, math.inf)
    assert g.profile.values[0] == TruncatedLognormal(mu=0.0, sigma=0.5, lo=0.0, hi=2.5)


@pytest.mark.parametrize(
    "kw",
    [
        {"epsilons": ()},
        {"epsilons": (0.0,)},
        {"lambdas": (3.0,)},
        {"mechanisms": ("auction",)},
        {"normalizer": "second_value"},
        {"repetitions": 1},
        {"report_bidders": (4,)},
    ],
)
def test_grid_validation(kw):
    with pytest.raises((ValueError, IndexError)):
        small_grid(**kw)


def test_csv_layout(tmp_path):
    grid = small_grid()
    out = tmp_path / "nested" / "sweep.csv"
    results = run_sweep(grid, out=out)
    lines = out.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    assert comments[0] == "# robust_reserve 0.1.0"
    assert comments[1] == f"# config_sha256 {grid.config_hash()}"
    assert comments[2] == "# master_seed 11"
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == ",".join(CSV_COLUMNS)
    assert len(body) - 1 == 2 * 2 * 2 == len(results)
    rows = read_sweep_csv(out)
    keys = [(r["mechanism"], r["lambda"], r["epsilon"]) for r in rows]
    assert keys == sorted(keys)
    assert sum(ln.split(",")[2] == "inf" for ln in body[1:]) == 4
    for ln in body[1:]:
        fields = ln.split(",")
        assert len(fields[4].replace(".", "").replace("-", "").lstrip("0").split("e")[0]) <= 9


def test_seed_and_jobs_determinism(tmp_path):
    grid = small_grid()
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run_sweep(grid, jobs=1, out=a)
    run_sweep(grid, jobs=2, out=b)
    run_sweep(small_grid(master_seed=12), jobs=1, out=c)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_empty_epsilon_list_writes_nothing(tmp_path):
    out = tmp_path / "never.csv"
    with pytest.raises(ValueError):
        run_sweep(small_grid(epsilons=()), out=out)
    assert not out.exists()


def test_no_noise_cells_coincide():
    grid = small_grid(n=2)
    dp = run_cell(grid, "dp_rcp", 0.8, math.inf)
    sr = run_cell(grid, "srcp", 0.8, math.inf)
    assert dp.revenue == sr.revenue and dp.dic == sr.dic


def test_full_lambda_means_zero_reserve():
    grid = small_grid(n=2, k=4000, ic_samples=4000)
    cell = run_cell(grid, "dp_rcp", 2.0, 2.0)
    ratio = expected_second_value(grid.profile) / expected_top_value(grid.profile)
    assert abs(cell.revenue.mean - ratio) <= 3 * cell.revenue.ci_half_width + 0.01
    assert cell.dic_for(0).mean == pytest.approx(1.0, abs=1e-12)


def test_single_bidder_ordering():
    grid = small_grid(k=5000, repetitions=5, ic_samples=5000)
    low = run_cell(grid, "dp_rcp", 0.2, math.inf)
    high = run_cell(grid, "dp_rcp", 0.8, math.inf)
    assert high.dic_for().mean < 1.0
    assert high.revenue.mean - high.revenue.ci_half_width > low.revenue.mean + low.revenue.ci_half_width


def test_second_value_normalizer_rescales():
    w = run_cell(small_grid(n=2), "srcp", 0.8, 1.0)
    s = run_cell(small_grid(n=2, normalizer="second_value"), "srcp", 0.8, 1.0)
    prof = small_grid(n=2).profile
    assert s.revenue.mean == pytest.approx(w.revenue.mean * expected_top_value(prof) / expected_second_value(prof))


def pt(lam, eps, rev, dic, ci=0.01):
    return TradeoffPoint(lam, eps, rev, ci, dic, ci)


def test_point_dominance_is_ci_aware():
    assert point_dominates(pt(1, 1, 0.6, 0.9), pt(1, 1, 0.5, 0.9))
    assert not point_dominates(pt(1, 1, 0.51, 0.9), pt(1, 1, 0.5, 0.9))
    assert not point_dominates(pt(1, 1, 0.6, 0.8), pt(1, 1, 0.5, 0.9))
    assert not point_dominates(pt(1, 1, 0.5, 0.9), pt(1, 1, 0.5, 0.9))


def test_curve_inside_another_is_dominated():
    outer = [pt(1, e, r, d) for e, r, d in [(0.1, 0.3, 1.0), (1, 0.6, 0.95), (math.inf, 0.7, 0.9)]]
    inner = [pt(2, e, r, d) for e, r, d in [(0.1, 0.25, 0.9), (1, 0.5, 0.85), (math.inf, 0.6, 0.8)]]
    assert curve_dominates(outer, inner) and not curve_dominates(inner, outer)


def test_pareto_summary_reports_undominated():
    def result(lam, eps, rev, dic):
        est = lambda m: MetricEstimate(m, 0.005, 10)
        return SweepResult("dp_rcp", lam, eps, 2, est(rev), ((0, est(dic)),))

    results = [
        result(0.4, 1.0, 0.3, 0.85),
        result(0.4, math.inf, 0.4, 0.8),
        result(1.6, 1.0, 0.5, 0.97),
        result(1.6, math.inf, 0.6, 0.92),
    ]
    (report,) = pareto_summary(results)
    assert report.undominated == [1.6]
    assert report.dominated_by[0.4] == [1.6]
    best = best_tradeoff_point(report.curves[1.6])
    assert best.epsilon == math.inf
    assert "undominated lambdas: 1.6" in report.render()
