# -*- coding: utf-8 -*-
"""
User response to operator offers: utility of an offer and the accept/decline
decision against each user's outside option.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from evmarket.exceptions import MissingPreferenceError

logger = logging.getLogger(__name__)

THETA_RANGE = (0.5, 2.0)
PREFERENCE_STREAM = 1


@dataclass(frozen=True)
class UserPreference:
    """
        Attributes
        ----------
        theta1 : float
            Utility per kW of charging rate.
        theta2 : float
            Utility lost per SEK of markup payment.
        outside_option : float
            Utility of the user's best alternative.
    """
    theta1: float
    theta2: float
    outside_option: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'theta1', float(self.theta1))
        object.__setattr__(self, 'theta2', float(self.theta2))
        object.__setattr__(self, 'outside_option', float(self.outside_option))
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError('theta1 and theta2 must be >= 0, got {} and {}'.format(
                self.theta1, self.theta2))


@dataclass(frozen=True)
class AcceptanceDecision:
    user_id: int
    utility: float
    accepted: bool


def utility(user_offer, bid, pref, station):
    """
        theta1 * rate_kw - theta2 * sum over assigned slots of (final price - bid) * energy.

        Parameters
        ----------
        user_offer : UserOffer
            Must be accepted by the operator.

        bid : UserBid

        pref : UserPreference

        station : StationConfig
            Supplies rate_kw for the assigned rate.

        Returns
        -------
        float
    """
    if not user_offer.accepted or user_offer.rate_index is None:
        raise ValueError('utility is undefined for operator-rejected user {}'.format(user_offer.user_id))
    rate_kw = station.rates[user_offer.rate_index].rate_kw
    return pref.theta1 * rate_kw - pref.theta2 * user_offer.markup_payment(bid.bid_price)


def _preference_lookup(prefs, bids):
    if isinstance(prefs, Mapping):
        return dict(prefs)
    prefs = list(prefs)
    if len(prefs) != len(bids):
        raise ValueError('{} preferences given for {} bids'.format(len(prefs), len(bids)))
    return {b.user_id: p for b, p in zip(bids, prefs)}


def decide(offer, instance, prefs):
    """
        Accept/decline decision for every operator-accepted user.

        Parameters
        ----------
        offer : OperatorOffer

        instance : ProblemInstance

        prefs : dict or list of UserPreference
            Keyed by user_id, or aligned with ``instance.bids``.

        Returns
        -------
        list of AcceptanceDecision
            In offer order; operator-rejected users emit no decision.

        Raises
        ------
        MissingPreferenceError
            If an accepted user has no preference.
    """
    lookup = _preference_lookup(prefs, instance.bids)
    decisions = []
    for uo in offer.users:
        if not uo.accepted:
            continue
        if uo.user_id not in lookup:
            raise MissingPreferenceError('no preference for accepted user {}'.format(uo.user_id))
        pref = lookup[uo.user_id]
        u = utility(uo, instance.bid_for(uo.user_id), pref, instance.station)
        decisions.append(AcceptanceDecision(uo.user_id, float(u), bool(u >= pref.outside_option)))
    logger.debug('%d of %d offered users accept', sum(d.accepted for d in decisions), len(decisions))
    return decisions


def sample_preferences(count, seed, outside_option=0.0):
    """
        Draw theta1 and theta2 independently from U(0.5, 2.0) for ``count`` users.

        The stream is ``SeedSequence([seed, 1])``, separate from the bid
        stream, so the same seed gives the same preferences regardless of how
        bids were drawn.
    """
    if count < 0:
        raise ValueError('count must be >= 0')
    if count == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), PREFERENCE_STREAM])))
    draws = rng.uniform(THETA_RANGE[0], THETA_RANGE[1], size=(count, 2))
    return [UserPreference(t1, t2, outside_option) for t1, t2 in draws]
