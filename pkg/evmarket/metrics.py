# -*- coding: utf-8 -*-
"""
Performance indicators for one scenario and their mean/std over seeds.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
import pandas as pd

from evmarket.offers import offer_profit

logger = logging.getLogger(__name__)

PRICE_LEVELS = ('slot', 'user')
INDICATORS = ('operator_profit', 'acceptance_rate', 'mean_final_price', 'mean_markup', 'gini',
              'post_response_acceptance')


@dataclass(frozen=True)
class ScenarioMetrics:
    """
        Indicators for one solved scenario. Price, markup and Gini are
        ``None`` when no slot is served; post-response acceptance is ``None``
        without decisions or without operator-accepted users.
    """
    operator_profit: float
    acceptance_rate: float
    mean_final_price: Optional[float] = None
    mean_markup: Optional[float] = None
    gini: Optional[float] = None
    post_response_acceptance: Optional[float] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class IndicatorSummary:
    mean: Optional[float]
    std: Optional[float]
    count: int


@dataclass(frozen=True)
class AggregateMetrics:
    """
        Mean and population std per indicator over ``seeds`` scenarios. Each
        summary's ``count`` is the number of seeds where the indicator exists.
    """
    operator_profit: IndicatorSummary
    acceptance_rate: IndicatorSummary
    mean_final_price: IndicatorSummary
    mean_markup: IndicatorSummary
    gini: IndicatorSummary
    post_response_acceptance: IndicatorSummary
    seeds: int

    def as_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, IndicatorSummary):
                out[f.name + '_mean'] = value.mean
                out[f.name + '_std'] = value.std
                out[f.name + '_count'] = value.count
            else:
                out[f.name] = value
        return out


def gini(values):
    """
        Gini coefficient, sum_ij |v_i - v_j| / (2 n^2 mean).

        Parameters
        ----------
        values : array-like of non-negative float

        Returns
        -------
        float or None
            ``None`` for an empty input, 0 when the mean is 0.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return None
    if np.any(v < 0):
        raise ValueError('gini needs non-negative values')
    mean = v.mean()
    if mean == 0:
        return 0.0
    # sorted form of the pairwise sum: sum_ij |vi - vj| = 2 * sum_k (2k - n - 1) v_(k)
    v = np.sort(v)
    n = v.size
    k = np.arange(1, n + 1)
    pairwise = 2.0 * np.sum((2 * k - n - 1) * v)
    return float(pairwise / (2.0 * n * n * mean))


def _served_prices(offer, instance, price_level):
    prices = []
    markups = []
    for uo in offer.users:
        if not uo.accepted or not uo.assigned_slots:
            continue
        bid = instance.bid_for(uo.user_id).bid_price
        markups.extend(p - bid for p in uo.final_prices)
        if price_level == 'user':
            prices.append(uo.mean_final_price())
        else:
            prices.extend(uo.final_prices)
    return prices, markups


def compute_metrics(offer, instance, decisions=None, price_level='slot', seed=None):
    """
        Indicators for one verified offer.

        Parameters
        ----------
        offer : OperatorOffer

        instance : ProblemInstance

        decisions : list of AcceptanceDecision, optional

        price_level : {'slot', 'user'}
            'slot' averages and ranks every served slot price; 'user' first
            averages each served user's prices. Mean markup is always per slot.

        seed : int, optional
            Carried through for seed-ordered aggregation.

        Returns
        -------
        ScenarioMetrics
    """
    if price_level not in PRICE_LEVELS:
        raise ValueError('price_level must be one of {}, got {!r}'.format(PRICE_LEVELS, price_level))
    n = instance.num_users
    accepted = offer.num_accepted
    acceptance = accepted / n if n else 0.0
    prices, markups = _served_prices(offer, instance, price_level)

    post = None
    if decisions is not None and accepted > 0:
        post = sum(1 for d in decisions if d.accepted) / accepted

    return ScenarioMetrics(
        operator_profit=offer_profit(offer, instance),
        acceptance_rate=float(acceptance),
        mean_final_price=float(np.mean(prices)) if prices else None,
        mean_markup=float(np.mean(markups)) if markups else None,
        gini=gini(prices) if prices else None,
        post_response_acceptance=post,
        seed=seed,
    )


def _summarize(values):
    present = np.array([v for v in values if v is not None], dtype=float)
    if present.size == 0:
        return IndicatorSummary(None, None, 0)
    return IndicatorSummary(float(present.mean()), float(present.std(ddof=0)), int(present.size))


def aggregate(per_seed):
    """
        Mean and population std of every indicator across seeds.

        Metrics are reduced in seed order so the result does not depend on the
        order parallel workers finished in. Absent values are left out of
        their own indicator only.

        Parameters
        ----------
        per_seed : list of ScenarioMetrics
            At least one entry.

        Returns
        -------
        AggregateMetrics
    """
    per_seed = list(per_seed)
    if not per_seed:
        raise ValueError('aggregate needs at least one scenario')
    per_seed.sort(key=lambda m: (m.seed is None, m.seed if m.seed is not None else 0))
    summaries = {name: _summarize([getattr(m, name) for m in per_seed]) for name in INDICATORS}
    return AggregateMetrics(seeds=len(per_seed), **summaries)


def price_adjustment_summary(offer, instance, decimals=6):
    """
        How the operator adjusted prices, per rate.

        Returns
        -------
        DataFrame
            One row per rate with columns ``rate_kw``, ``served_users``,
            ``at_bid_slots``, ``countered_slots`` and ``increments``, the sorted
            distinct values of final price - bid over countered slots.
    """
    station = instance.station
    served = defaultdict(int)
    at_bid = defaultdict(int)
    countered = defaultdict(int)
    increments = defaultdict(set)
    for uo in offer.users:
        if not uo.accepted or uo.rate_index is None:
            continue
        r = uo.rate_index
        served[r] += 1
        bid = instance.bid_for(uo.user_id).bid_price
        for flag, price in zip(uo.at_bid, uo.final_prices):
            if flag:
                at_bid[r] += 1
            else:
                countered[r] += 1
                increments[r].add(round(price - bid, decimals))
    return pd.DataFrame({'rate_kw': [rate.rate_kw for rate in station.rates],
                         'served_users': [served[r] for r in range(station.num_rates)],
                         'at_bid_slots': [at_bid[r] for r in range(station.num_rates)],
                         'countered_slots': [countered[r] for r in range(station.num_rates)],
                         'increments': [tuple(sorted(increments[r])) for r in range(station.num_rates)]})
