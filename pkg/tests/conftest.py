import os

import numpy as np
import pytest

from evmarket.domain import PricingPolicy, ProblemInstance, RateLevel, StationConfig, UserBid
from evmarket.scenarios import RATE_CATALOG

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')


def make_instance(bids, rates_kw=(22.0,), num_slots=2, slot_minutes=15.0, gamma=0.0, alpha=2.5,
                  epsilon=0.5, slot_capacity=None, charger_count=1):
    rates = [RateLevel.constant(kw, RATE_CATALOG[float(kw)], num_slots, 2.0, charger_count) for kw in rates_kw]
    station = StationConfig.build(num_slots, slot_minutes, rates, slot_capacity)
    return ProblemInstance(tuple(bids), station, PricingPolicy(gamma, alpha, epsilon))


def tiny(bid_price, gamma):
    return make_instance([UserBid(1, bid_price, 5.0, 6.0, (0, 1))], gamma=gamma)


def random_tiny_instance(seed):
    """
        Instances within the oracle budget: up to 2 users, 4 slots and 2 rates.
    """
    rng = np.random.default_rng(seed)
    n_users = int(rng.integers(1, 3))
    n_slots = int(rng.integers(2, 5))
    n_rates = int(rng.integers(1, 3))
    rates_kw = sorted(rng.choice([22.0, 50.0, 100.0], size=n_rates, replace=False))
    gamma = float(rng.choice([0.0, 0.5, 1.0]))
    bids = []
    for k in range(n_users):
        q_min = round(float(rng.uniform(0.0, 20.0)), 2)
        q_max = round(q_min + float(rng.uniform(0.0, 30.0)), 2)
        slots = [t for t in range(n_slots) if rng.random() < 0.8] or [0]
        bids.append(UserBid(k + 1, round(float(rng.uniform(1.0, 6.0)), 2), q_min, q_max, slots))
    return make_instance(bids, rates_kw, n_slots, gamma=gamma)


@pytest.fixture
def tiny_a():
    """
        One user, two slots, 22 kW; the best offer counters one slot at the cap.
    """
    return tiny(3.0, 0.0)


@pytest.fixture
def tiny_a_protected():
    return tiny(3.0, 1.0)


@pytest.fixture
def tiny_b():
    """
        Bid above the price cap with every slot required at bid: no service.
    """
    return tiny(4.0, 1.0)


@pytest.fixture
def two_users():
    bids = [UserBid(1, 3.0, 10.0, 20.0, range(4)), UserBid(2, 2.5, 5.0, 12.0, (1, 2, 3))]
    return make_instance(bids, num_slots=4, gamma=0.5)


@pytest.fixture
def data_dir():
    return DATA_DIR
