# -*- coding: utf-8 -*-
"""
Operator offers: reconstruction from a solved model and independent
verification against the market rules without a solver.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from evmarket.exceptions import NonIntegralSolutionError
from evmarket.model import (a_name, pf_name, pn_name, pr_name, xb_name, y_name, z_name)

logger = logging.getLogger(__name__)

CONTIGUITY_TAG = 'eq4-eq6'


@dataclass(frozen=True)
class UserOffer:
    """
        Outcome for one user. Per-slot tuples are aligned with
        ``assigned_slots``.

        Attributes
        ----------
        user_id : int
        accepted : bool
            a_i.
        rate_index : int or None
            Position of the assigned rate in ``station.rates``.
        assigned_slots : tuple of int
            One contiguous, increasing run of slots.
        final_prices : tuple of float
            Final price per assigned slot.
        counter_prices : tuple of float
            Counter price per assigned slot, 0 on at-bid slots.
        at_bid : tuple of bool
            True where the slot is served at the bid, False where countered.
        energies : tuple of float
            q_{i,t} per assigned slot.
    """
    user_id: int
    accepted: bool = False
    rate_index: Optional[int] = None
    assigned_slots: Tuple[int, ...] = ()
    final_prices: Tuple[float, ...] = ()
    counter_prices: Tuple[float, ...] = ()
    at_bid: Tuple[bool, ...] = ()
    energies: Tuple[float, ...] = ()

    @classmethod
    def rejected(cls, user_id):
        return cls(user_id)

    @property
    def num_at_bid(self):
        return sum(1 for flag in self.at_bid if flag)

    @property
    def num_countered(self):
        return sum(1 for flag in self.at_bid if not flag)

    @property
    def total_energy(self):
        return float(sum(self.energies))

    def slot_start(self):
        return self.assigned_slots[0] if self.assigned_slots else None

    def slot_end(self):
        return self.assigned_slots[-1] if self.assigned_slots else None

    def markup_payment(self, bid_price):
        """
            sum over assigned slots of (final price - bid) * energy.
        """
        return float(sum((p - bid_price) * q for p, q in zip(self.final_prices, self.energies)))

    def mean_final_price(self):
        if not self.final_prices:
            return None
        return float(np.mean(self.final_prices))


@dataclass(frozen=True)
class OperatorOffer:
    """
        The operator's answer to every bid.

        Attributes
        ----------
        users : tuple of UserOffer
            In the order of ``instance.bids``.
        reference_prices : tuple of tuple of float, optional
            Reference prices indexed [t][r]; ``None`` for hand-built offers, in which case
            verification uses the highest at-bid bid per cell.
        objective : float, optional
            Operator profit; ``None`` skips the consistency check in
            verify_offer.
    """
    users: Tuple[UserOffer, ...]
    reference_prices: Optional[Tuple[Tuple[float, ...], ...]] = None
    objective: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'users', tuple(self.users))

    def for_user(self, user_id):
        for uo in self.users:
            if uo.user_id == user_id:
                return uo
        raise KeyError(user_id)

    def accepted_users(self):
        return [uo for uo in self.users if uo.accepted]

    @property
    def num_accepted(self):
        return len(self.accepted_users())


def offer_profit(offer, instance):
    """
        Profit: slot energy times (final price - unit cost), summed over assigned slots.
    """
    station = instance.station
    total = 0.0
    for uo in offer.users:
        if not uo.accepted or uo.rate_index is None:
            continue
        rate = station.rates[uo.rate_index]
        E = rate.energy(station.slot_minutes)
        for t, price in zip(uo.assigned_slots, uo.final_prices):
            total += E * (price - rate.cost(t))
    return float(total)


def _binary_value(solution, name, tolerance):
    x = solution.assignment.get(name, 0.0)
    if min(abs(x), abs(x - 1.0)) > tolerance:
        raise NonIntegralSolutionError(name, x)
    return x >= 0.5


def extract_offer(model, solution, instance, tolerance=1e-6):
    """
        Map a solved variable assignment back into per-user offers.

        Binaries are rounded at 0.5 after checking they sit within
        ``tolerance`` of 0 or 1. At-bid slots carry the bid exactly and
        energies are the rate's slot energy exactly.

        Parameters
        ----------
        model : ModelDescription
            The model the solution belongs to.

        solution : Solution

        instance : ProblemInstance

        tolerance : float, optional
            Integrality tolerance.

        Returns
        -------
        OperatorOffer

        Raises
        ------
        NonIntegralSolutionError
            If a binary deviates from {0, 1} by more than ``tolerance``.
    """
    if not solution.has_point:
        raise ValueError('solution ({}) carries no assignment'.format(solution.status.value))
    for var in model.variables:
        if var.is_binary:
            _binary_value(solution, var.name, tolerance)

    station = instance.station
    values = solution.assignment
    users = []
    for i, bid in enumerate(instance.bids):
        if not _binary_value(solution, a_name(i), tolerance):
            users.append(UserOffer.rejected(bid.user_id))
            continue
        rate_index = None
        for r in range(station.num_rates):
            if _binary_value(solution, y_name(i, r), tolerance):
                rate_index = r
                break
        slots, finals, counters, flags, energies = [], [], [], [], []
        if rate_index is not None:
            E = station.rates[rate_index].energy(station.slot_minutes)
            for t in range(station.num_slots):
                if not _binary_value(solution, z_name(i, t, rate_index), tolerance):
                    continue
                at_bid = _binary_value(solution, xb_name(i, t, rate_index), tolerance)
                if at_bid:
                    final, counter = bid.bid_price, 0.0
                else:
                    counter = max(0.0, values.get(pn_name(i, t, rate_index), 0.0))
                    final = counter
                pf = values.get(pf_name(i, t, rate_index), final)
                if abs(pf - final) > 1e-4:
                    logger.warning('user %s slot %s: pF %.6f disagrees with reconstructed %.6f',
                                   bid.user_id, t, pf, final)
                slots.append(t)
                finals.append(float(final))
                counters.append(float(counter))
                flags.append(bool(at_bid))
                energies.append(float(E))
        users.append(UserOffer(bid.user_id, True, rate_index, tuple(slots), tuple(finals),
                               tuple(counters), tuple(flags), tuple(energies)))

    reference = tuple(tuple(max(0.0, values.get(pr_name(t, r), 0.0)) for r in range(station.num_rates))
                      for t in range(station.num_slots))
    profit = offer_profit(OperatorOffer(tuple(users)), instance)
    if solution.objective is not None and abs(profit - solution.objective) > 1e-6 * max(1.0, abs(solution.objective)):
        logger.debug('reconstructed profit %.9f differs from solver objective %.9f',
                     profit, solution.objective)
    return OperatorOffer(tuple(users), reference, profit)


@dataclass(frozen=True)
class Violation:
    tag: str
    user_id: Optional[int] = None
    slot: Optional[int] = None
    rate: Optional[int] = None
    value: Optional[float] = None
    bound: Optional[float] = None
    message: str = ''

    def __str__(self):
        where = ', '.join('{}={}'.format(k, v) for k, v in
                          (('user', self.user_id), ('slot', self.slot), ('rate', self.rate)) if v is not None)
        text = '[{}] {}'.format(self.tag, self.message)
        if where:
            text += ' ({})'.format(where)
        if self.value is not None:
            bound = 'n/a' if self.bound is None else '{:.6g}'.format(self.bound)
            text += ': value {:.6g} vs bound {}'.format(self.value, bound)
        return text


@dataclass(frozen=True)
class ViolationReport:
    """
        Violations found by verify_offer; empty when the offer is clean.
    """
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self):
        return len(self.violations) == 0

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def tags(self):
        return sorted({v.tag for v in self.violations})

    def summary(self, limit=5):
        lines = [str(v) for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append('... {} more'.format(len(self.violations) - limit))
        return '; '.join(lines)


def _runs(slots):
    if not slots:
        return 0
    ordered = sorted(slots)
    return 1 + sum(1 for a, b in zip(ordered, ordered[1:]) if b != a + 1)


def _is_grid(rows, n_rows, n_cols):
    try:
        return len(rows) == n_rows and all(len(row) == n_cols for row in rows)
    except TypeError:
        return False


def verify_offer(offer, instance, tolerance=1e-6):
    """
        Re-check an offer against every market rule directly, with no solver.

        Parameters
        ----------
        offer : OperatorOffer

        instance : ProblemInstance

        tolerance : float, optional
            Absolute tolerance on continuous comparisons.

        Returns
        -------
        ViolationReport
            Empty iff every tagged rule holds.
    """
    station = instance.station
    policy = instance.policy
    out = []
    bids = {b.user_id: b for b in instance.bids}
    offered = [uo.user_id for uo in offer.users]
    if sorted(offered) != sorted(bids) or len(set(offered)) != len(offered):
        out.append(Violation('aux', message='offer users {} do not match instance users {}'.format(
            sorted(offered), sorted(bids))))

    energy_at = defaultdict(float)
    users_at = defaultdict(int)
    at_bid_bids = defaultdict(list)
    countered = []
    n_at_bid = 0
    n_assigned = 0

    for uo in offer.users:
        bid = bids.get(uo.user_id)
        if bid is None:
            continue
        uid = uo.user_id
        if not uo.accepted:
            if uo.rate_index is not None or uo.assigned_slots or any(uo.final_prices) or any(uo.energies):
                out.append(Violation('aux', uid, message='rejected user carries an allocation'))
            continue
        r = uo.rate_index
        if r is None or not 0 <= r < station.num_rates:
            out.append(Violation('eq2', uid, message='accepted user has no valid rate'))
            continue
        n = len(uo.assigned_slots)
        if not (len(uo.final_prices) == len(uo.counter_prices) == len(uo.at_bid) == len(uo.energies) == n):
            out.append(Violation('aux', uid, message='per-slot fields are misaligned'))
            continue
        rate = station.rates[r]
        E = rate.energy(station.slot_minutes)

        for t in uo.assigned_slots:
            if not 0 <= t < station.num_slots:
                out.append(Violation('eq3', uid, t, r, message='slot outside the horizon'))
            elif not bid.available(t):
                out.append(Violation('eq3', uid, t, r, message='slot not acceptable to the user'))
        runs = _runs(uo.assigned_slots)
        if runs > 1 or len(set(uo.assigned_slots)) != n or list(uo.assigned_slots) != sorted(uo.assigned_slots):
            out.append(Violation(CONTIGUITY_TAG, uid, value=float(runs), bound=1.0,
                                 message='charging window is not one contiguous run'))

        total = 0.0
        for t, final, counter, flag, q in zip(uo.assigned_slots, uo.final_prices, uo.counter_prices,
                                              uo.at_bid, uo.energies):
            total += q
            if abs(q - E) > tolerance:
                out.append(Violation('eq10', uid, t, r, q, E, 'slot energy differs from the rate energy'))
            if not 0 <= t < station.num_slots:
                continue
            energy_at[t] += q
            users_at[(t, r)] += 1
            n_assigned += 1
            c = rate.cost(t)
            if flag:
                n_at_bid += 1
                at_bid_bids[(t, r)].append(bid.bid_price)
                if abs(final - bid.bid_price) > tolerance:
                    out.append(Violation('eq13', uid, t, r, final, bid.bid_price,
                                         'at-bid slot not priced at the bid'))
            else:
                countered.append((uid, t, r, counter))
                if counter > bid.bid_price + rate.max_markup + tolerance:
                    out.append(Violation('eq12b', uid, t, r, counter, bid.bid_price + rate.max_markup,
                                         'counter price above bid + max markup'))
                if abs(final - counter) > tolerance:
                    out.append(Violation('eq13', uid, t, r, final, counter,
                                         'final price differs from counter price'))
            floor = (1.0 + policy.epsilon) * c
            if final < floor - tolerance:
                out.append(Violation('eq14', uid, t, r, final, floor, 'price below minimum margin'))
            cap = policy.alpha * c
            if final > cap + tolerance:
                out.append(Violation('eq15', uid, t, r, final, cap, 'price above cap'))
        if total < bid.q_min - tolerance or total > bid.q_max + tolerance:
            out.append(Violation('eq7', uid, value=total, bound=bid.q_min if total < bid.q_min else bid.q_max,
                                 message='delivered energy outside demand bounds'))

    for t, energy in sorted(energy_at.items()):
        if energy > station.slot_capacity[t] + tolerance:
            out.append(Violation('eq8', slot=t, value=energy, bound=station.slot_capacity[t],
                                 message='slot capacity exceeded'))
    for (t, r), count in sorted(users_at.items()):
        limit = station.rates[r].charger_count
        if count > limit:
            out.append(Violation('eq9', slot=t, rate=r, value=float(count), bound=float(limit),
                                 message='more users than chargers'))

    refs = offer.reference_prices
    if refs is not None and not _is_grid(refs, station.num_slots, station.num_rates):
        out.append(Violation('aux', message='reference prices are not {} slots x {} rates'.format(
            station.num_slots, station.num_rates)))
        refs = None
    for (t, r), prices in sorted(at_bid_bids.items()):
        if refs is None:
            break
        ref = refs[t][r]
        if ref < max(prices) - tolerance:
            out.append(Violation('eq16', slot=t, rate=r, value=ref, bound=max(prices),
                                 message='reference price below an at-bid bid'))
    for uid, t, r, counter in countered:
        if refs is not None:
            ref = refs[t][r]
        else:
            ref = max(at_bid_bids.get((t, r), [0.0]))
        if counter < ref - tolerance:
            out.append(Violation('eq17', uid, t, r, counter, ref, 'counter price below reference price'))

    needed = policy.gamma * n_assigned
    if n_at_bid < needed - tolerance:
        out.append(Violation('eq18', value=float(n_at_bid), bound=needed,
                             message='too few slots served at bid'))

    profit = offer_profit(offer, instance)
    # prices archived at 6 decimals may each be off by half a unit in the last place
    slack = tolerance * (max(1.0, abs(profit)) + sum(energy_at.values()))
    if offer.objective is not None and abs(profit - offer.objective) > slack:
        out.append(Violation('aux', value=offer.objective, bound=profit,
                             message='stated objective differs from recomputed profit'))

    report = ViolationReport(tuple(out))
    if not report.ok:
        logger.debug('offer verification found %d violation(s): %s', len(report), report.tags())
    return report


def allocation_grid(offer, instance):
    """
        User x slot matrix: 0 = not served, 1 = served at bid, 2 = countered.
        Rows follow ``instance.bids``.
    """
    grid = np.zeros((instance.num_users, instance.station.num_slots), dtype=int)
    row_of = {b.user_id: k for k, b in enumerate(instance.bids)}
    for uo in offer.users:
        if not uo.accepted or uo.user_id not in row_of:
            continue
        for t, flag in zip(uo.assigned_slots, uo.at_bid):
            if 0 <= t < grid.shape[1]:
                grid[row_of[uo.user_id], t] = 1 if flag else 2
    return grid
