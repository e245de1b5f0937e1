import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_reserve.distributions import BiddingStrategy, Laplace, ZeroNoise
from robust_reserve.mechanisms import (
    MechanismConfig,
    TrainedPolicy,
    draw_reserve,
    run_auction,
    run_auctions,
    simulate_two_stage,
    train,
)


@pytest.mark.parametrize(
    "bids, winner, payment",
    [((0.9, 0.4), 0, 0.5), ((0.9, 0.7), 0, 0.7), ((0.3, 0.2), None, 0.0), ((0.6, 0.6), 0, 0.6), ((0.5,), 0, 0.5)],
)
def test_second_price_with_reserve(bids, winner, payment):
    out = run_auction(bids, 0.5)
    assert out.winner == winner
    assert out.payment == pytest.approx(payment)
    assert out.sold == (winner is not None)


def test_auction_input_errors():
    with pytest.raises(ValueError):
        run_auction([], 0.1)
    with pytest.raises(ValueError):
        run_auction([0.3], -0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=5), st.floats(0, 5))
def test_auction_invariants(bids, reserve):
    out = run_auction(bids, reserve)
    if out.sold:
        assert reserve <= out.payment <= bids[out.winner]
        assert bids[out.winner] == max(bids)
    else:
        assert out.payment == 0.0 and max(bids) < reserve


def test_train_plain_and_noisy(rng):
    cfg = MechanismConfig("dp_rcp", 0.5, Laplace(1.0))
    policy = train(cfg, [0.2, 0.5, 0.8], rng)
    assert policy.base_price == 0.5 and policy.is_random
    srcp = MechanismConfig("srcp", 0.5, ZeroNoise())
    assert train(srcp, [0.2, 0.5, 0.8], rng).base_price == 0.5


def test_no_noise_kind_drops_noise():
    assert MechanismConfig("no_noise", 0.3, Laplace(2.0)).noise.is_degenerate
    with pytest.raises(ValueError):
        MechanismConfig("auction", 0.3)


def test_dp_reserves_are_clamped(rng):
    policy = TrainedPolicy("dp_rcp", 0.5, 0.05, Laplace(0.5))
    r = draw_reserve(policy, rng, 10_000)
    assert r.min() == 0.0 and np.mean(r == 0.0) > 0.3
    # median of base + Laplace is the base price
    assert np.median(r) == pytest.approx(0.05, abs=0.05)


def test_deterministic_policies_consume_no_randomness(rng):
    state = rng.bit_generator.state
    policy = TrainedPolicy("srcp", 0.5, 0.4, Laplace(1.0))
    np.testing.assert_array_equal(draw_reserve(policy, rng, 3), np.full(3, 0.4))
    assert rng.bit_generator.state == state


def test_policy_record_round_trip():
    for policy in (TrainedPolicy("dp_rcp", 0.4, 0.731, Laplace(3.2)), TrainedPolicy("srcp", 1.6, 0.2)):
        assert TrainedPolicy.from_record(policy.to_record()) == policy
    assert TrainedPolicy("srcp", 1.6, 0.2).to_record() == "srcp,1.6,inf,0.2"


def test_two_stage_truthful_uniform(uniform1, rng):
    cfg = MechanismConfig("no_noise", 0.5)
    policy, res = simulate_two_stage(cfg, uniform1, None, 20_000, rng)
    assert policy.base_price == pytest.approx(0.5, abs=0.02)
    # r (1 - r) at r = 0.5
    assert res.mean_revenue() == pytest.approx(0.25, abs=0.01)
    assert len(res) == 20_000 and len(list(res)) == 20_000


def test_shading_lowers_trained_price(uniform1, rng):
    cfg = MechanismConfig("no_noise", 0.5)
    policy, _ = simulate_two_stage(cfg, uniform1, [BiddingStrategy(0.5)], 20_000, rng)
    assert policy.base_price == pytest.approx(0.25, abs=0.02)


def test_vectorized_auctions_match_scalar(rng):
    bids = rng.random((50, 3))
    reserves = rng.random(50)
    res = run_auctions(bids, reserves)
    for row, r, out in zip(bids, reserves, res):
        assert out == run_auction(row, r)
