# -*- coding: utf-8 -*-
"""
Named scenario families. Preset names are stable command-line identifiers.
"""

import logging
from dataclasses import dataclass, replace

from evmarket.domain import PricingPolicy
from evmarket.exceptions import ConfigError
from evmarket.scenarios import AvailabilityPattern, ScenarioSpec, SweepSpec, restation, station_for_rates

logger = logging.getLogger(__name__)

GAMMAS = (0.2, 0.4, 0.6, 0.8)
ALL_RATES = (22.0, 50.0, 100.0)
NARROW_BIDS = (2.0, 4.0)
WIDE_BIDS = (1.0, 6.0)
SPLIT = AvailabilityPattern('split', narrow_users=5, window_slots=8)
# mixed-22-50 doubles the chargers so the 8-slot window can hold every narrow user at full demand
MIXED_CHARGERS = 2


@dataclass(frozen=True)
class Preset:
    """
        A named sweep. ``run`` uses the first cell of the sweep.

        Attributes
        ----------
        name : str
        description : str
        sweep : SweepSpec
    """
    name: str
    description: str
    sweep: SweepSpec

    def scenario(self, seed=None):
        cell = self.sweep.cells()[0]
        return self.sweep.spec_for(cell, self.sweep.first_seed if seed is None else seed)


def _base(rates_kw=(22.0,), users=10, bids=NARROW_BIDS, availability=None, gamma=0.0, charger_count=1):
    return ScenarioSpec(user_count=users, bid_range=bids,
                        availability=availability or AvailabilityPattern(),
                        station=station_for_rates(rates_kw, charger_count=charger_count),
                        policy=PricingPolicy(gamma=gamma))


def _preset(name, description, base, gammas=GAMMAS, rate_configs=None, bid_ranges=None, seeds=50):
    rate_configs = rate_configs or (tuple(r.rate_kw for r in base.station.rates),)
    bid_ranges = bid_ranges or (base.bid_range,)
    return Preset(name, description, SweepSpec(base, gammas, rate_configs, bid_ranges, seeds))


PRESETS = {p.name: p for p in [
    _preset('baseline-single-rate',
            'single 22 kW charger, bids on [2, 4], gamma 0.2 to 0.8',
            _base()),
    _preset('table2',
            'gamma 0.2 to 0.8 on each single rate of 22, 50 and 100 kW',
            _base(), rate_configs=tuple((kw,) for kw in ALL_RATES)),
    _preset('multi-rate',
            'one charger each of 22, 50 and 100 kW',
            _base(ALL_RATES)),
    _preset('expanded-bid-range',
            'one charger each of 22, 50 and 100 kW, bids on [1, 6]',
            _base(ALL_RATES, bids=WIDE_BIDS)),
    _preset('bid-range-series',
            'gamma 0.4 on every rate with shifted bid ranges',
            _base(ALL_RATES), gammas=(0.4,),
            bid_ranges=((1.0, 3.0), (2.0, 4.0), (3.0, 5.0), (4.0, 6.0))),
    _preset('heterogeneous-availability',
            '22 kW, five users available all day and five in a 2-hour midday window',
            _base(availability=SPLIT)),
    _preset('heterogeneous-50kw',
            '50 kW, five users available all day and five in a 2-hour midday window',
            _base((50.0,), availability=SPLIT)),
    _preset('mixed-22-50',
            'two 22 kW and two 50 kW chargers with split availability',
            _base((22.0, 50.0), availability=SPLIT, charger_count=MIXED_CHARGERS)),
    _preset('large-scale',
            '40 users, 48 slots, one charger each of 22, 50 and 100 kW, gamma 0.8',
            _base(ALL_RATES, users=40), gammas=(0.8,), seeds=1),
    _preset('large-scale-wide',
            '40 users, 48 slots, three rates, bids on [1, 6], gamma 0.4',
            _base(ALL_RATES, users=40, bids=WIDE_BIDS), gammas=(0.4,), seeds=1),
    _preset('utility-response',
            '40 users on three rates, bids on [1, 6], gamma 0.4, with sampled user preferences',
            _base(ALL_RATES, users=40, bids=WIDE_BIDS), gammas=(0.4,)),
]}


def get_preset(name):
    """
        Raises
        ------
        ConfigError
            If ``name`` is not a known preset.
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError('unknown preset {!r}; choose one of {}'.format(name, ', '.join(sorted(PRESETS))))


def preset_names():
    return sorted(PRESETS)


def with_overrides(preset, gammas=None, rate_configs=None, bid_ranges=None, seeds=None, users=None,
                   num_slots=None, alpha=None, epsilon=None, first_seed=None):
    """
        Copy of ``preset.sweep`` with the given axes and base fields replaced.
    """
    sweep = preset.sweep
    base = sweep.base
    if users is not None:
        availability = base.availability
        if availability.narrow_users > users:
            availability = replace(availability, narrow_users=users)
        base = replace(base, user_count=users, availability=availability)
    if num_slots is not None:
        base = replace(base, station=restation(base.station, num_slots=num_slots))
    if alpha is not None or epsilon is not None:
        policy = base.policy
        base = replace(base, policy=replace(policy,
                                            alpha=policy.alpha if alpha is None else alpha,
                                            epsilon=policy.epsilon if epsilon is None else epsilon))
    out = replace(sweep, base=base)
    if gammas is not None:
        out = replace(out, gammas=gammas)
    if rate_configs is not None:
        out = replace(out, rate_configs=rate_configs)
    if bid_ranges is not None:
        out = replace(out, bid_ranges=bid_ranges)
    if seeds is not None:
        out = replace(out, seeds=seeds)
    if first_seed is not None:
        out = replace(out, first_seed=first_seed)
    logger.debug('preset %s resolved to %d cell(s) x %d seed(s)', preset.name, len(out.cells()), out.seeds)
    return out
