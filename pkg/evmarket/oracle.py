# -*- coding: utf-8 -*-
"""
Exhaustive enumeration of operator decisions for tiny instances, used to
certify MILP backends.

Each user either is rejected or takes one rate, one contiguous window of
acceptable slots whose energy meets the demand bounds, and an at-bid/countered
flag per slot. For fixed binaries the best prices are closed form: at-bid
slots pay the bid, countered slots pay min(bid + max_markup, alpha * cost), which must stay at
or above max((1 + epsilon) * cost, reference) where the reference price is the
highest at-bid bid in the same (slot, rate) cell.
"""

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Tuple

from evmarket.domain import validate_instance
from evmarket.exceptions import InvalidInstanceError, OracleBudgetError
from evmarket.offers import OperatorOffer, UserOffer

logger = logging.getLogger(__name__)

ORACLE_CELL_BUDGET = 16
_EPS = 1e-9


@dataclass(frozen=True)
class _Option:
    rate: int
    slots: Tuple[int, ...]
    at_bid: Tuple[bool, ...]
    prices: Tuple[float, ...]
    energy: float
    profit: float


def _user_options(bid, instance):
    """
        Every pricing-feasible (rate, window, flags) choice for one user,
        ignoring interactions with other users.
    """
    station = instance.station
    policy = instance.policy
    options = []
    for r, rate in enumerate(station.rates):
        E = rate.energy(station.slot_minutes)
        if bid.q_min <= _EPS:
            options.append(_Option(r, (), (), (), E, 0.0))
        for start in range(station.num_slots):
            for end in range(start, station.num_slots):
                window = tuple(range(start, end + 1))
                if not all(bid.available(t) for t in window):
                    break
                total = E * len(window)
                if total < bid.q_min - _EPS:
                    continue
                if total > bid.q_max + _EPS:
                    break
                for flags in itertools.product((True, False), repeat=len(window)):
                    prices = []
                    feasible = True
                    for t, at_bid in zip(window, flags):
                        c = rate.cost(t)
                        floor = (1.0 + policy.epsilon) * c
                        cap = policy.alpha * c
                        if at_bid:
                            price = bid.bid_price
                            if price < floor - _EPS or price > cap + _EPS:
                                feasible = False
                                break
                        else:
                            price = min(bid.bid_price + rate.max_markup, cap)
                            if price < floor - _EPS:
                                feasible = False
                                break
                        prices.append(price)
                    if not feasible:
                        continue
                    profit = sum(E * (p - rate.cost(t)) for t, p in zip(window, prices))
                    options.append(_Option(r, window, tuple(flags), tuple(prices), E, profit))
    return options


def _leaf_is_feasible(choice, instance):
    """
        Check the global share and reference-price coupling for a full choice.
    """
    n_at_bid = 0
    n_assigned = 0
    at_bid_max = defaultdict(float)
    for bid, opt in choice:
        if opt is None:
            continue
        for t, flag in zip(opt.slots, opt.at_bid):
            n_assigned += 1
            if flag:
                n_at_bid += 1
                at_bid_max[(t, opt.rate)] = max(at_bid_max[(t, opt.rate)], bid.bid_price)
    if n_at_bid < instance.policy.gamma * n_assigned - _EPS:
        return False, None
    for bid, opt in choice:
        if opt is None:
            continue
        for t, flag, price in zip(opt.slots, opt.at_bid, opt.prices):
            if not flag and price < at_bid_max.get((t, opt.rate), 0.0) - _EPS:
                return False, None
    return True, at_bid_max


def exhaustive_oracle(instance, budget=ORACLE_CELL_BUDGET):
    """
        Profit-maximising offer by brute force.

        Parameters
        ----------
        instance : ProblemInstance
            Must have at most ``budget`` (user, slot, rate) cells.

        budget : int, optional

        Returns
        -------
        OperatorOffer
            Ties keep the first optimum found, with rejection enumerated
            before acceptance.

        Raises
        ------
        OracleBudgetError
            If the instance exceeds the enumeration budget.
    """
    if instance.z_cells() > budget:
        raise OracleBudgetError('instance has {} z-cells, oracle budget is {}'.format(
            instance.z_cells(), budget))
    result = validate_instance(instance)
    if not result.ok:
        raise InvalidInstanceError(result.violations)

    station = instance.station
    bids = list(instance.bids)
    options = [[None] + _user_options(bid, instance) for bid in bids]
    best_tail = [0.0] * (len(bids) + 1)
    for k in range(len(bids) - 1, -1, -1):
        best_tail[k] = best_tail[k + 1] + max(0.0, max((o.profit for o in options[k] if o is not None),
                                                       default=0.0))

    best = {'profit': 0.0, 'choice': [(bid, None) for bid in bids], 'ref': {}}
    found = [False]
    energy = [0.0] * station.num_slots
    users_at = defaultdict(int)
    chosen = []
    leaves = [0]

    def descend(k, profit):
        if k == len(bids):
            leaves[0] += 1
            ok, ref = _leaf_is_feasible(chosen, instance)
            if ok and (not found[0] or profit > best['profit'] + _EPS):
                found[0] = True
                best['profit'] = profit
                best['choice'] = list(chosen)
                best['ref'] = dict(ref)
            return
        if found[0] and profit + best_tail[k] <= best['profit'] + _EPS:
            return
        for opt in options[k]:
            if opt is not None:
                charger_limit = station.rates[opt.rate].charger_count
                if any(users_at[(t, opt.rate)] + 1 > charger_limit for t in opt.slots):
                    continue
                if any(energy[t] + opt.energy > station.slot_capacity[t] + _EPS for t in opt.slots):
                    continue
                for t in opt.slots:
                    users_at[(t, opt.rate)] += 1
                    energy[t] += opt.energy
            chosen.append((bids[k], opt))
            descend(k + 1, profit + (opt.profit if opt is not None else 0.0))
            chosen.pop()
            if opt is not None:
                for t in opt.slots:
                    users_at[(t, opt.rate)] -= 1
                    energy[t] -= opt.energy

    descend(0, 0.0)
    logger.debug('oracle visited %d leaves, best profit %.6f', leaves[0], best['profit'])

    users = []
    for bid, opt in best['choice']:
        if opt is None:
            users.append(UserOffer.rejected(bid.user_id))
            continue
        counters = tuple(0.0 if flag else p for flag, p in zip(opt.at_bid, opt.prices))
        users.append(UserOffer(bid.user_id, True, opt.rate, opt.slots, opt.prices, counters,
                               opt.at_bid, (opt.energy,) * len(opt.slots)))
    reference = tuple(tuple(best['ref'].get((t, r), 0.0) for r in range(station.num_rates))
                      for t in range(station.num_slots))
    return OperatorOffer(tuple(users), reference, float(best['profit']))
