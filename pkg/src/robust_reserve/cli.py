"""Command-line entry point: ``robust-reserve {price,oracle,sweep,simulate,validate}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .clearing import (
    BatchFormatError,
    empirical_clearing_price,
    oracle_clearing_price,
    read_bid_batch,
    smoothed_oracle_reserve,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .distributions import noise_from_epsilon
from .experiments import format_epsilon, parse_epsilon, pareto_summary, run_sweep
from .mechanisms import MECHANISMS, MechanismConfig, simulate_two_stage
from .metrics import (
    dp_rcp_expected_revenue,
    expected_revenue_closed,
    expected_top_value,
    ic_metric_dp_closed,
    ic_metric_srcp_closed,
    local_sensitivity_eta,
    local_sensitivity_zeta,
    smoothing_kappa,
)
from .numerics import derive_rng
from .validation import run_suite


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    data = cfg.model_dump(by_alias=True)
    if getattr(args, "seed", None) is not None:
        data["master_seed"] = args.seed
    if getattr(args, "normalizer", None) is not None:
        data["normalizer"] = args.normalizer
    return parse_config(data, args.config or "<defaults>")


def config_digest(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.model_dump(by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _pick(cfg: RunConfig, args):
    lam = args.lam if args.lam is not None else cfg.oracle.lam
    lam = cfg.lambdas[0] if lam is None else lam
    eps = args.epsilon if args.epsilon is not None else cfg.oracle.epsilon
    eps = cfg.epsilons[0] if eps is None else eps
    return float(lam), parse_epsilon(eps)


def cmd_price(args) -> int:
    batch = read_bid_batch(args.batch)
    print(f"{empirical_clearing_price(batch, args.lam):.12g}")
    return 0


def cmd_oracle(args) -> int:
    cfg = _resolve(args)
    grid = cfg.grid()
    profile = grid.profile.truthful()
    lam, eps = _pick(cfg, args)
    bidder = args.bidder if args.bidder is not None else cfg.oracle.bidder
    profile._check_index(bidder)
    noise = noise_from_epsilon(eps, cfg.noise_family)
    p = oracle_clearing_price(profile, lam)
    r = smoothed_oracle_reserve(profile, noise, lam)
    rows = [
        ("n_bidders", profile.n),
        ("lambda", lam),
        ("epsilon", format_epsilon(eps)),
        ("bidder", bidder),
        ("clearing_price", p),
        ("smoothed_reserve", r),
        ("kappa", smoothing_kappa(profile, noise)),
        ("n_minus_lambda", profile.n - lam),
        ("eta", local_sensitivity_eta(profile, lam, bidder)),
    ]
    if len(set(profile.values)) == 1:
        # for i.i.d. bidders eta = D^{-1}(1 - lam/n) / n
        rows.append(("iid_quantile_eta", float(profile.values[0].quantile(1.0 - lam / profile.n)) / profile.n))
    rows += [
        ("zeta", local_sensitivity_zeta(profile, lam, noise, bidder)),
        ("dic_dp_rcp", ic_metric_dp_closed(profile, lam, noise, bidder)),
        ("dic_srcp", ic_metric_srcp_closed(profile, lam, noise, bidder)),
        ("revenue_clearing_price", expected_revenue_closed(profile, p)),
        ("revenue_dp_rcp", dp_rcp_expected_revenue(profile, lam, noise)),
        ("revenue_srcp", expected_revenue_closed(profile, r)),
        ("welfare", expected_top_value(profile)),
    ]
    for label, value in rows:
        text = f"{value:.12g}" if isinstance(value, float) else str(value)
        print(f"{label}: {text}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    out = args.out or cfg.output
    if out is None:
        raise ValueError("no output path: pass --out or set 'output' in the config")
    grid = cfg.grid()
    results = run_sweep(grid, jobs=args.jobs, out=Path(out))
    print(f"wrote {sum(len(r.dic) for r in results)} rows to {out}")
    for report in pareto_summary(results, grid.report_bidders[0]):
        print(report.render())
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    grid = cfg.grid()
    lam, eps = _pick(cfg, args)
    kind = args.mechanism or cfg.mechanisms[0]
    config = MechanismConfig.from_epsilon(kind, lam, eps, cfg.noise_family)
    rng = derive_rng(cfg.master_seed, 0)
    policy, outcome = simulate_two_stage(config, grid.profile, None, cfg.k, rng)
    summary = {
        "tool_version": __version__,
        "config_sha256": config_digest(cfg),
        "master_seed": cfg.master_seed,
        "policy": policy.to_record(),
        "auctions": len(outcome),
        "match_rate": float(outcome.sold.mean()),
        "revenue_mean": outcome.mean_revenue(),
        "revenue_normalized": outcome.mean_revenue() / grid.normalizing_constant(),
        "normalizer": cfg.normalizer,
    }
    for key, value in summary.items():
        print(f"{key}: {value:.12g}" if isinstance(value, float) else f"{key}: {value}")
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({**summary, "config": cfg.model_dump(by_alias=True)}, indent=2) + "\n")
    return 0


def cmd_validate(args) -> int:
    extra = []
    if args.config:
        cfg = _resolve(args)
        extra.append(("configured profile", cfg.grid().profile.truthful()))
    seed = args.seed if args.seed is not None else 0
    checks = run_suite(seed, extra, eta_denominator="others" if args.corrupt_eta else "all", n_trials=args.trials)
    for check in checks:
        print(check.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


def _epsilon_arg(text: str) -> float:
    try:
        eps = parse_epsilon(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or 'inf': {text!r}") from None
    if not eps > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return eps


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--normalizer", choices=("welfare", "second_value"))

    point = argparse.ArgumentParser(add_help=False)
    point.add_argument("--lambda", dest="lam", type=float)
    point.add_argument("--epsilon", type=_epsilon_arg)

    parser = argparse.ArgumentParser(prog="robust-reserve", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[common], help="clearing price of a bid CSV")
    p.add_argument("batch", help="CSV with header bid_1,...,bid_n")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("oracle", parents=[common, point], help="population reserves, sensitivities, closed forms")
    p.add_argument("--bidder", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", parents=[common], help="run a (lambda, epsilon) sweep and summarize it")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common, point], help="one two-stage run")
    p.add_argument("--mechanism", choices=MECHANISMS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common], help="numerical self-checks")
    p.add_argument("--trials", type=int, default=100_000, help="noise draws per revenue-bound check")
    p.add_argument(
        "--corrupt-eta",
        action="store_true",
        help="use the competitors-only denominator for eta; the derivative check should then fail",
    )
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, BatchFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, IndexError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
