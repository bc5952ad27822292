import numpy as np
import pytest

from evmarket.domain import UserBid
from evmarket.metrics import (AggregateMetrics, ScenarioMetrics, aggregate, compute_metrics, gini,
                              price_adjustment_summary)
from evmarket.offers import OperatorOffer, UserOffer
from evmarket.response import AcceptanceDecision

from tests.conftest import make_instance


def test_gini_values():
    assert gini([3.0, 3.0, 3.0]) == 0.0
    assert gini([1, 2, 3]) == pytest.approx(8 / 36, abs=1e-4)
    assert gini([5]) == 0.0
    assert gini([]) is None
    assert gini([0.0, 0.0]) == 0.0


def test_gini_matches_pairwise_definition():
    rng = np.random.default_rng(3)
    v = rng.uniform(0, 10, size=17)
    direct = np.abs(v[:, None] - v[None, :]).sum() / (2 * len(v) ** 2 * v.mean())
    assert gini(v) == pytest.approx(direct, rel=1e-12)


def test_gini_scale_and_permutation_invariance():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.uniform(0.1, 10.0, size=int(rng.integers(1, 20)))
        g = gini(v)
        assert 0.0 <= g < 1.0
        assert gini(v * rng.uniform(0.1, 100.0)) == pytest.approx(g, abs=1e-12)
        assert gini(rng.permutation(v)) == pytest.approx(g, abs=1e-12)


def test_gini_rejects_negative_values():
    with pytest.raises(ValueError):
        gini([1.0, -1.0])


@pytest.fixture
def served():
    bids = [UserBid(k, 3.0 + 0.1 * k, 5.0, 12.0, range(4)) for k in range(1, 11)]
    instance = make_instance(bids, num_slots=4, charger_count=10, slot_capacity=60.0)
    users = []
    for k in range(1, 11):
        bid = 3.0 + 0.1 * k
        if k <= 6:
            users.append(UserOffer(k, True, 0, (0, 1), (bid, min(bid + 1.0, 3.75)), (0.0, min(bid + 1.0, 3.75)),
                                   (True, False), (5.5, 5.5)))
        else:
            users.append(UserOffer.rejected(k))
    return instance, OperatorOffer(users)


def test_compute_metrics(served):
    instance, offer = served
    m = compute_metrics(offer, instance)
    assert m.acceptance_rate == pytest.approx(0.6)
    prices = [p for uo in offer.accepted_users() for p in uo.final_prices]
    assert m.mean_final_price == pytest.approx(np.mean(prices))
    assert m.gini == pytest.approx(gini(prices))
    markups = [p - instance.bid_for(uo.user_id).bid_price for uo in offer.accepted_users() for p in uo.final_prices]
    assert m.mean_markup == pytest.approx(np.mean(markups))
    expected_profit = sum(5.5 * (p - 1.5) for p in prices)
    assert m.operator_profit == pytest.approx(expected_profit)
    assert m.post_response_acceptance is None


def test_user_level_prices(served):
    instance, offer = served
    m = compute_metrics(offer, instance, price_level='user')
    per_user = [np.mean(uo.final_prices) for uo in offer.accepted_users()]
    assert m.mean_final_price == pytest.approx(np.mean(per_user))
    assert m.gini == pytest.approx(gini(per_user))
    with pytest.raises(ValueError):
        compute_metrics(offer, instance, price_level='kwh')


def test_post_response_acceptance(served):
    instance, offer = served
    decisions = [AcceptanceDecision(k, 1.0, k % 2 == 0) for k in range(1, 7)]
    m = compute_metrics(offer, instance, decisions)
    assert m.post_response_acceptance == pytest.approx(0.5)


def test_all_rejected(tiny_a):
    m = compute_metrics(OperatorOffer([UserOffer.rejected(1)]), tiny_a)
    assert m.acceptance_rate == 0.0
    assert m.operator_profit == 0.0
    assert m.mean_final_price is None
    assert m.mean_markup is None
    assert m.gini is None


def test_at_bid_only_has_zero_markup(tiny_a_protected):
    offer = OperatorOffer([UserOffer(1, True, 0, (0,), (3.0,), (0.0,), (True,), (5.5,))])
    assert compute_metrics(offer, tiny_a_protected).mean_markup == 0.0


def test_aggregate_population_std():
    per_seed = [ScenarioMetrics(10.0, 0.6, seed=1), ScenarioMetrics(14.0, 0.6, seed=0)]
    agg = aggregate(per_seed)
    assert isinstance(agg, AggregateMetrics)
    assert agg.seeds == 2
    assert agg.operator_profit.mean == pytest.approx(12.0)
    assert agg.operator_profit.std == pytest.approx(2.0)
    assert agg.acceptance_rate.mean == pytest.approx(0.6)
    assert agg.acceptance_rate.std == pytest.approx(0.0)
    assert agg.gini.count == 0
    assert agg.gini.mean is None


def test_aggregate_single_seed():
    agg = aggregate([ScenarioMetrics(7.5, 0.3, 3.1, 0.2, 0.05, seed=4)])
    assert agg.operator_profit.std == 0.0
    assert agg.mean_final_price.mean == pytest.approx(3.1)


def test_aggregate_skips_absent_values():
    per_seed = [ScenarioMetrics(0.0, 0.0, seed=0), ScenarioMetrics(5.0, 0.1, 3.0, 0.5, 0.0, seed=1),
                ScenarioMetrics(6.0, 0.1, 4.0, 0.0, 0.1, seed=2)]
    agg = aggregate(per_seed)
    assert agg.mean_final_price.count == 2
    assert agg.mean_final_price.mean == pytest.approx(3.5)
    assert agg.operator_profit.count == 3


def test_aggregate_matches_two_pass_and_ignores_order():
    rng = np.random.default_rng(9)
    profits = rng.uniform(0, 500, size=50)
    per_seed = [ScenarioMetrics(float(p), 0.5, seed=k) for k, p in enumerate(profits)]
    agg = aggregate(per_seed)
    mean = sum(profits) / len(profits)
    var = sum((p - mean) ** 2 for p in profits) / len(profits)
    assert agg.operator_profit.mean == pytest.approx(mean, abs=1e-9)
    assert agg.operator_profit.std == pytest.approx(var ** 0.5, abs=1e-9)
    shuffled = aggregate([per_seed[k] for k in rng.permutation(len(per_seed))])
    assert shuffled == agg


def test_aggregate_needs_a_seed():
    with pytest.raises(ValueError):
        aggregate([])


def test_price_adjustment_summary():
    bids = [UserBid(1, 3.0, 5.0, 30.0, range(2)), UserBid(2, 2.0, 5.0, 30.0, range(2))]
    instance = make_instance(bids, rates_kw=(22.0, 100.0))
    offer = OperatorOffer([UserOffer(1, True, 0, (0,), (3.0,), (0.0,), (True,), (5.5,)),
                           UserOffer(2, True, 1, (1,), (4.0,), (4.0,), (False,), (25.0,))])
    df = price_adjustment_summary(offer, instance)
    assert list(df['rate_kw']) == [22.0, 100.0]
    assert list(df['served_users']) == [1, 1]
    assert list(df['countered_slots']) == [0, 1]
    assert df['increments'][1] == (2.0,)
    assert df['increments'][0] == ()
