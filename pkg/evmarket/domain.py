# -*- coding: utf-8 -*-
"""
Core market types: user bids, charging rates, station configuration, pricing
policy and the bundled operator input, plus instance validation.

Units throughout: energy in kWh, power in kW, slot length in minutes and every
price, cost and markup in SEK per kWh.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def energy_per_slot(rate, slot_minutes):
    """
        Energy a charger at ``rate`` delivers in one slot, rate_kw * slot_minutes / 60.

        Parameters
        ----------
        rate : RateLevel or number
            Charging rate, or its power in kW.

        slot_minutes : number
            Slot length in minutes.

        Returns
        -------
        float
            Energy in kWh.
    """
    rate_kw = rate.rate_kw if isinstance(rate, RateLevel) else float(rate)
    return rate_kw * slot_minutes / 60.0


@dataclass(frozen=True)
class UserBid:
    """
        One user's submission for the planning horizon.

        Attributes
        ----------
        user_id : int
            Identifier, unique within an instance.
        bid_price : float
            Offered price in SEK/kWh.
        q_min, q_max : float
            Demand bounds in kWh.
        acceptable_slots : tuple of int
            Sorted, de-duplicated slot indices the user can charge in.
    """
    user_id: int
    bid_price: float
    q_min: float
    q_max: float
    acceptable_slots: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'user_id', int(self.user_id))
        object.__setattr__(self, 'bid_price', float(self.bid_price))
        object.__setattr__(self, 'q_min', float(self.q_min))
        object.__setattr__(self, 'q_max', float(self.q_max))
        object.__setattr__(self, 'acceptable_slots',
                           tuple(sorted({int(t) for t in self.acceptable_slots})))

    def available(self, t):
        """
            Indicator A_{i,t}.
        """
        return t in self.acceptable_slots

    def availability_vector(self, num_slots):
        A = np.zeros(num_slots, dtype=int)
        for t in self.acceptable_slots:
            if 0 <= t < num_slots:
                A[t] = 1
        return A

    def violations(self, num_slots=None):
        out = []
        label = 'user {}'.format(self.user_id)
        if not self.bid_price > 0:
            out.append('bid_price must be > 0 for {}'.format(label))
        if self.q_min < 0:
            out.append('q_min < 0 for {}'.format(label))
        if self.q_min > self.q_max:
            out.append('q_min > q_max for {}'.format(label))
        if num_slots is not None:
            outside = [t for t in self.acceptable_slots if t < 0 or t >= num_slots]
            if outside:
                out.append('slot out of horizon for {}: {}'.format(label, outside))
        return out


@dataclass(frozen=True)
class RateLevel:
    """
        A charger type offered by the station.

        Attributes
        ----------
        rate_kw : float
            Charging power in kW.
        cost_per_kwh : tuple of float
            Unit cost per slot, SEK/kWh.
        max_markup : float
            Largest counter-offer increase over a bid, SEK/kWh.
        charger_count : int
            Chargers of this type.
    """
    rate_kw: float
    cost_per_kwh: Tuple[float, ...]
    max_markup: float = 2.0
    charger_count: int = 1

    def __post_init__(self):
        costs = np.atleast_1d(np.asarray(self.cost_per_kwh, dtype=float))
        object.__setattr__(self, 'rate_kw', float(self.rate_kw))
        object.__setattr__(self, 'cost_per_kwh', tuple(float(c) for c in costs))
        object.__setattr__(self, 'max_markup', float(self.max_markup))
        object.__setattr__(self, 'charger_count', int(self.charger_count))
        if not self.rate_kw > 0:
            raise ValueError('rate_kw must be > 0, got {}'.format(self.rate_kw))
        if self.charger_count < 0:
            raise ValueError('charger_count must be >= 0, got {}'.format(self.charger_count))
        if len(self.cost_per_kwh) == 0 or min(self.cost_per_kwh) <= 0:
            raise ValueError('every cost entry must be > 0 for the {:g} kW rate'.format(self.rate_kw))
        if self.max_markup < 0:
            raise ValueError('max_markup must be >= 0, got {}'.format(self.max_markup))

    @classmethod
    def constant(cls, rate_kw, cost, num_slots, max_markup=2.0, charger_count=1):
        """
            Rate with the same unit cost in every slot.
        """
        return cls(rate_kw, (float(cost),) * int(num_slots), max_markup, charger_count)

    def cost(self, t):
        return self.cost_per_kwh[t]

    def energy(self, slot_minutes):
        return energy_per_slot(self, slot_minutes)

    def broadcast(self, num_slots):
        """
            Return a copy whose cost vector covers ``num_slots``. A single
            cost entry is repeated; a full-length vector is kept.
        """
        if len(self.cost_per_kwh) == num_slots:
            return self
        if len(self.cost_per_kwh) == 1:
            return RateLevel(self.rate_kw, self.cost_per_kwh * num_slots,
                             self.max_markup, self.charger_count)
        raise ValueError('cost vector of the {:g} kW rate has {} entries for {} slots'.format(
            self.rate_kw, len(self.cost_per_kwh), num_slots))


def default_slot_capacity(rates, slot_minutes):
    """
        Aggregate non-binding capacity: chargers times slot energy, summed over rates.
    """
    return float(sum(r.charger_count * energy_per_slot(r, slot_minutes) for r in rates))


@dataclass(frozen=True)
class StationConfig:
    """
        Horizon, slot length, per-slot energy capacity and the offered rates.
    """
    num_slots: int
    slot_minutes: float
    slot_capacity: Tuple[float, ...]
    rates: Tuple[RateLevel, ...]

    def __post_init__(self):
        object.__setattr__(self, 'num_slots', int(self.num_slots))
        object.__setattr__(self, 'slot_minutes', float(self.slot_minutes))
        if self.num_slots < 1:
            raise ValueError('num_slots must be >= 1')
        if not self.slot_minutes > 0:
            raise ValueError('slot_minutes must be > 0')
        if len(self.rates) == 0:
            raise ValueError('a station needs at least one rate')
        rates = tuple(r.broadcast(self.num_slots) for r in self.rates)
        object.__setattr__(self, 'rates', rates)
        cap = np.atleast_1d(np.asarray(self.slot_capacity, dtype=float))
        if cap.size == 1:
            cap = np.repeat(cap, self.num_slots)
        if cap.size != self.num_slots:
            raise ValueError('slot_capacity has {} entries for {} slots'.format(cap.size, self.num_slots))
        if np.any(cap < 0):
            raise ValueError('every slot capacity must be >= 0')
        object.__setattr__(self, 'slot_capacity', tuple(float(c) for c in cap))

    @classmethod
    def build(cls, num_slots, slot_minutes, rates, slot_capacity=None):
        """
            Build a station, defaulting slot capacity to default_slot_capacity.
        """
        if slot_capacity is None:
            slot_capacity = default_slot_capacity(rates, slot_minutes)
        return cls(num_slots, slot_minutes, slot_capacity, tuple(rates))

    @property
    def num_rates(self):
        return len(self.rates)

    def energies(self):
        """
            Slot energy of every rate, as a numpy array.
        """
        return np.array([energy_per_slot(r, self.slot_minutes) for r in self.rates])

    def cost_matrix(self):
        """
            Unit costs as a (rates, slots) array.
        """
        return np.array([r.cost_per_kwh for r in self.rates])

    def rate_label(self):
        return '+'.join('{:g}'.format(r.rate_kw) for r in self.rates)


@dataclass(frozen=True)
class PricingPolicy:
    """
        Operator pricing rules.

        Attributes
        ----------
        gamma : float
            Price protection ratio, minimum share of slots served at bid.
        alpha : float
            Price cap as a multiple of unit cost.
        epsilon : float
            Minimum profit margin over unit cost.
        price_big_m : float or None
            Big-M bound on prices; ``None`` lets the instance derive it from bids and costs.
    """
    gamma: float = 0.0
    alpha: float = 2.5
    epsilon: float = 0.5
    price_big_m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'gamma', float(self.gamma))
        object.__setattr__(self, 'alpha', float(self.alpha))
        object.__setattr__(self, 'epsilon', float(self.epsilon))
        if self.price_big_m is not None:
            object.__setattr__(self, 'price_big_m', float(self.price_big_m))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError('gamma must lie in [0, 1], got {}'.format(self.gamma))
        if self.epsilon < 0:
            raise ValueError('epsilon must be >= 0, got {}'.format(self.epsilon))
        if self.alpha < 1.0 + self.epsilon:
            raise ValueError('alpha must be >= 1 + epsilon, got alpha={} epsilon={}'.format(
                self.alpha, self.epsilon))


def default_price_big_m(bids, rates, alpha):
    """
        max(alpha * max cost, max bid + max markup) + 1.
    """
    max_cost = max(max(r.cost_per_kwh) for r in rates)
    max_markup = max(r.max_markup for r in rates)
    max_bid = max([b.bid_price for b in bids], default=0.0)
    return max(alpha * max_cost, max_bid + max_markup) + 1.0


@dataclass(frozen=True)
class ProblemInstance:
    """
        Everything the operator model needs: bids, station and pricing policy.
    """
    bids: Tuple[UserBid, ...]
    station: StationConfig
    policy: PricingPolicy = field(default_factory=PricingPolicy)

    def __post_init__(self):
        object.__setattr__(self, 'bids', tuple(self.bids))

    @property
    def num_users(self):
        return len(self.bids)

    @property
    def price_big_m(self):
        if self.policy.price_big_m is not None:
            return self.policy.price_big_m
        return default_price_big_m(self.bids, self.station.rates, self.policy.alpha)

    def user_ids(self):
        return [b.user_id for b in self.bids]

    def bid_for(self, user_id):
        for b in self.bids:
            if b.user_id == user_id:
                return b
        raise KeyError(user_id)

    def z_cells(self):
        """
            Number of (user, slot, rate) assignment binaries.
        """
        return self.num_users * self.station.num_slots * self.station.num_rates


@dataclass(frozen=True)
class ValidationResult:
    """
        Outcome of validate_instance: ``ok`` when there are no violations.
    """
    violations: Tuple[str, ...] = ()

    @property
    def ok(self):
        return len(self.violations) == 0

    def __bool__(self):
        return self.ok


def validate_instance(instance):
    """
        Check every domain invariant jointly without raising.

        Parameters
        ----------
        instance : ProblemInstance

        Returns
        -------
        ValidationResult
            Empty when the instance is well formed; otherwise one message per
            violation naming the field and the user.
    """
    violations: List[str] = []
    station = instance.station
    seen = set()
    for bid in instance.bids:
        violations.extend(bid.violations(station.num_slots))
        if bid.user_id in seen:
            violations.append('duplicate user_id {}'.format(bid.user_id))
        seen.add(bid.user_id)

    policy = instance.policy
    if policy.price_big_m is not None and instance.bids:
        needed = max(b.bid_price for b in instance.bids) + max(r.max_markup for r in station.rates)
        if policy.price_big_m < needed:
            violations.append('price_big_m {} below max bid + max markup {}'.format(
                policy.price_big_m, needed))
    if policy.price_big_m is not None:
        cap = policy.alpha * float(station.cost_matrix().max())
        if policy.price_big_m < cap:
            violations.append('price_big_m {} below alpha * max cost {}'.format(policy.price_big_m, cap))

    if violations:
        logger.debug('instance has %d violation(s)', len(violations))
    return ValidationResult(tuple(violations))


def bids_from_arrays(prices, q_min, q_max, slots, user_ids=None):
    """
        Convenience constructor: one bid per entry of the aligned sequences.
    """
    n = len(prices)
    if user_ids is None:
        user_ids = range(1, n + 1)
    slots = list(slots)
    if not slots or np.isscalar(slots[0]):
        slots = [slots] * n
    q_min = np.broadcast_to(q_min, n)
    q_max = np.broadcast_to(q_max, n)
    return tuple(UserBid(uid, p, lo, hi, tuple(s))
                 for uid, p, lo, hi, s in zip(user_ids, prices, q_min, q_max, slots))
