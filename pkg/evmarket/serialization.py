# -*- coding: utf-8 -*-
"""
JSON archives of instances and offers, and CSV/JSON result tables.

Money (prices, costs, markups, profits) is written as a decimal string with six
fractional digits. Every JSON document carries ``schema_version``; the CSV
files keep their fixed column order and are versioned through the
``manifest.json`` written next to them.
"""

import json
import logging
import os

import pandas as pd

from evmarket.domain import PricingPolicy, ProblemInstance, RateLevel, StationConfig, UserBid
from evmarket.exceptions import ConfigError
from evmarket.offers import OperatorOffer, UserOffer, allocation_grid

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMATS = ('csv', 'json')

SWEEP_COLUMNS = ['rate_kw', 'gamma', 'bid_low', 'bid_high', 'profit_mean', 'profit_std',
                 'acceptance_mean', 'acceptance_std', 'price_mean', 'price_std', 'markup_mean',
                 'markup_std', 'gini_mean', 'seeds']
DETAIL_COLUMNS = ['user_id', 'bid_price', 'accepted', 'rate_kw', 'slot_start', 'slot_end',
                  'at_bid_slots', 'countered_slots', 'mean_final_price', 'utility', 'user_accepts']
MONEY_COLUMNS = {'profit_mean', 'profit_std', 'price_mean', 'price_std', 'markup_mean', 'markup_std',
                 'bid_price', 'mean_final_price'}


def money(x):
    if x is None:
        return None
    return '{:.6f}'.format(float(x))


def parse_money(s):
    if s is None:
        return None
    return float(s)


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError('{} must be a JSON object'.format(where))
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError('unknown key(s) in {}: {}'.format(where, ', '.join(sorted(unknown))))


def _check_version(d, kind):
    version = d.get('schema_version')
    if version != SCHEMA_VERSION:
        raise ConfigError('unsupported {} schema_version {!r}, expected {}'.format(kind, version, SCHEMA_VERSION))
    if d.get('kind', kind) != kind:
        raise ConfigError('expected a {} document, got {!r}'.format(kind, d.get('kind')))


def instance_to_dict(instance):
    station = instance.station
    policy = instance.policy
    return {
        'schema_version': SCHEMA_VERSION,
        'kind': 'instance',
        'station': {
            'num_slots': station.num_slots,
            'slot_minutes': station.slot_minutes,
            'slot_capacity': list(station.slot_capacity),
            'rates': [{'rate_kw': r.rate_kw,
                       'cost_per_kwh': [money(c) for c in r.cost_per_kwh],
                       'max_markup': money(r.max_markup),
                       'charger_count': r.charger_count} for r in station.rates],
        },
        'policy': {'gamma': policy.gamma, 'alpha': policy.alpha, 'epsilon': policy.epsilon,
                   'price_big_m': money(policy.price_big_m)},
        'bids': [{'user_id': b.user_id,
                  'bid_price': money(b.bid_price),
                  'q_min': b.q_min,
                  'q_max': b.q_max,
                  'acceptable_slots': list(b.acceptable_slots)} for b in instance.bids],
    }


def instance_from_dict(d):
    """
        Rebuild a ProblemInstance from ``instance_to_dict`` output.

        Raises
        ------
        ConfigError
            On a wrong schema version, unknown keys or malformed values.
    """
    _check_keys(d, ('schema_version', 'kind', 'station', 'policy', 'bids'), 'instance')
    _check_version(d, 'instance')
    try:
        s = d['station']
        _check_keys(s, ('num_slots', 'slot_minutes', 'slot_capacity', 'rates'), 'instance.station')
        rates = []
        for r in s['rates']:
            _check_keys(r, ('rate_kw', 'cost_per_kwh', 'max_markup', 'charger_count'), 'instance.station.rates')
            rates.append(RateLevel(r['rate_kw'], tuple(parse_money(c) for c in r['cost_per_kwh']),
                                   parse_money(r.get('max_markup', '2')), r.get('charger_count', 1)))
        station = StationConfig(s['num_slots'], s['slot_minutes'], tuple(s['slot_capacity']), tuple(rates))
        p = d.get('policy', {})
        _check_keys(p, ('gamma', 'alpha', 'epsilon', 'price_big_m'), 'instance.policy')
        policy = PricingPolicy(p.get('gamma', 0.0), p.get('alpha', 2.5), p.get('epsilon', 0.5),
                               parse_money(p.get('price_big_m')))
        bids = []
        for b in d['bids']:
            _check_keys(b, ('user_id', 'bid_price', 'q_min', 'q_max', 'acceptable_slots'), 'instance.bids')
            bids.append(UserBid(b['user_id'], parse_money(b['bid_price']), b['q_min'], b['q_max'],
                                tuple(b['acceptable_slots'])))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError('malformed instance: {}'.format(e))
    return ProblemInstance(tuple(bids), station, policy)


def offer_to_dict(offer):
    reference = None
    if offer.reference_prices is not None:
        reference = [[money(p) for p in row] for row in offer.reference_prices]
    return {
        'schema_version': SCHEMA_VERSION,
        'kind': 'offer',
        'objective': money(offer.objective),
        'reference_prices': reference,
        'users': [{'user_id': uo.user_id,
                   'accepted': uo.accepted,
                   'rate_index': uo.rate_index,
                   'assigned_slots': list(uo.assigned_slots),
                   'final_prices': [money(p) for p in uo.final_prices],
                   'counter_prices': [money(p) for p in uo.counter_prices],
                   'at_bid': list(uo.at_bid),
                   'energies': list(uo.energies)} for uo in offer.users],
    }


def offer_from_dict(d):
    _check_keys(d, ('schema_version', 'kind', 'objective', 'reference_prices', 'users'), 'offer')
    _check_version(d, 'offer')
    user_keys = ('user_id', 'accepted', 'rate_index', 'assigned_slots', 'final_prices', 'counter_prices',
                 'at_bid', 'energies')
    try:
        users = []
        for u in d['users']:
            _check_keys(u, user_keys, 'offer.users')
            users.append(UserOffer(u['user_id'], bool(u.get('accepted', False)), u.get('rate_index'),
                                   tuple(u.get('assigned_slots', ())),
                                   tuple(parse_money(p) for p in u.get('final_prices', ())),
                                   tuple(parse_money(p) for p in u.get('counter_prices', ())),
                                   tuple(bool(f) for f in u.get('at_bid', ())),
                                   tuple(float(q) for q in u.get('energies', ()))))
        reference = d.get('reference_prices')
        if reference is not None:
            reference = tuple(tuple(parse_money(p) for p in row) for row in reference)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError('malformed offer: {}'.format(e))
    return OperatorOffer(tuple(users), reference, parse_money(d.get('objective')))


def write_json(data, filename):
    with open(filename, 'w') as fid:
        json.dump(data, fid, indent=2)
    logger.debug('wrote %s', filename)
    return filename


def read_json(filename):
    try:
        with open(filename) as fid:
            return json.load(fid)
    except json.JSONDecodeError as e:
        raise ConfigError('{} is not valid JSON: {}'.format(filename, e))


def load_instance(filename):
    return instance_from_dict(read_json(filename))


def load_offer(filename):
    return offer_from_dict(read_json(filename))


def sweep_frame(rows):
    """
        One line per sweep cell with the fixed sweep columns. Cells where
        every seed failed keep their axis values and leave indicators empty.
    """
    records = []
    for row in rows:
        rec = {'rate_kw': row.cell.rate_label,
               'gamma': row.cell.gamma,
               'bid_low': row.cell.bid_range[0],
               'bid_high': row.cell.bid_range[1]}
        m = row.metrics
        pairs = [('profit', 'operator_profit'), ('acceptance', 'acceptance_rate'),
                 ('price', 'mean_final_price'), ('markup', 'mean_markup')]
        for prefix, name in pairs:
            summary = getattr(m, name) if m is not None else None
            rec[prefix + '_mean'] = summary.mean if summary is not None else None
            rec[prefix + '_std'] = summary.std if summary is not None else None
        rec['gini_mean'] = m.gini.mean if m is not None else None
        rec['seeds'] = m.seeds if m is not None else 0
        records.append(rec)
    df = pd.DataFrame(records, columns=SWEEP_COLUMNS)
    df['seeds'] = df['seeds'].astype('Int64')
    return df


def detail_frame(result):
    """
        One line per user of a scenario, in bid order.
    """
    instance = result.instance
    station = instance.station
    decisions = {d.user_id: d for d in (result.decisions or [])}
    records = []
    for uo in result.offer.users:
        bid = instance.bid_for(uo.user_id)
        rec = {'user_id': uo.user_id, 'bid_price': bid.bid_price, 'accepted': uo.accepted,
               'rate_kw': None, 'slot_start': None, 'slot_end': None,
               'at_bid_slots': None, 'countered_slots': None, 'mean_final_price': None,
               'utility': None, 'user_accepts': None}
        if uo.accepted:
            rec['rate_kw'] = station.rates[uo.rate_index].rate_kw if uo.rate_index is not None else None
            rec['slot_start'] = uo.slot_start()
            rec['slot_end'] = uo.slot_end()
            rec['at_bid_slots'] = uo.num_at_bid
            rec['countered_slots'] = uo.num_countered
            rec['mean_final_price'] = uo.mean_final_price()
            if uo.user_id in decisions:
                rec['utility'] = decisions[uo.user_id].utility
                rec['user_accepts'] = decisions[uo.user_id].accepted
        records.append(rec)
    df = pd.DataFrame(records, columns=DETAIL_COLUMNS)
    for col in ('slot_start', 'slot_end', 'at_bid_slots', 'countered_slots'):
        df[col] = df[col].astype('Int64')
    df['user_accepts'] = df['user_accepts'].astype('boolean')
    return df


def grid_frame(offer, instance):
    """
        Allocation grid as a DataFrame indexed by user_id, one column per slot.
    """
    grid = allocation_grid(offer, instance)
    return pd.DataFrame(grid, index=pd.Index(instance.user_ids(), name='user_id'),
                        columns=['slot_{}'.format(t) for t in range(instance.station.num_slots)])


def _records(df):
    out = []
    for rec in df.astype(object).where(pd.notnull(df), None).to_dict('records'):
        for k, v in rec.items():
            if k in MONEY_COLUMNS:
                rec[k] = money(v)
            elif hasattr(v, 'item'):
                rec[k] = v.item()
        out.append(rec)
    return out


def _write_csv(df, filename, index=False):
    df.to_csv(filename, index=index, float_format='%.6f', na_rep='')
    logger.debug('wrote %s', filename)
    return filename


def _is_sweep(result):
    return isinstance(result, (list, tuple))


def emit_results(result, formats, directory):
    """
        Write a scenario or sweep result.

        Parameters
        ----------
        result : ScenarioResult or list of SweepRow

        formats : iterable of {'csv', 'json'}

        directory : str
            Created if missing.

        Returns
        -------
        list of str
            Paths written, in write order.
    """
    formats = list(formats)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError('unknown output format(s): {}'.format(', '.join(bad)))
    os.makedirs(directory, exist_ok=True)
    written = []

    if _is_sweep(result):
        df = sweep_frame(result)
        if 'csv' in formats:
            written.append(_write_csv(df, os.path.join(directory, 'sweep.csv')))
        if 'json' in formats:
            rows = _records(df)
            for rec, row in zip(rows, result):
                rec['status'] = row.status
                rec['errors'] = list(row.errors)
                if row.metrics is not None:
                    rec['aggregate'] = row.metrics.as_dict()
            written.append(write_json({'schema_version': SCHEMA_VERSION, 'kind': 'sweep', 'rows': rows},
                                      os.path.join(directory, 'sweep.json')))
    else:
        df = detail_frame(result)
        grid = grid_frame(result.offer, result.instance)
        if 'csv' in formats:
            written.append(_write_csv(df, os.path.join(directory, 'detail.csv')))
            written.append(_write_csv(grid, os.path.join(directory, 'allocation.csv'), index=True))
        if 'json' in formats:
            m = result.metrics
            written.append(write_json({'schema_version': SCHEMA_VERSION, 'kind': 'detail',
                                       'metrics': {'operator_profit': money(m.operator_profit),
                                                   'acceptance_rate': m.acceptance_rate,
                                                   'mean_final_price': money(m.mean_final_price),
                                                   'mean_markup': money(m.mean_markup),
                                                   'gini': m.gini,
                                                   'post_response_acceptance': m.post_response_acceptance,
                                                   'seed': m.seed},
                                       'rows': _records(df),
                                       'allocation': grid.values.tolist()},
                                      os.path.join(directory, 'detail.json')))
        written.append(write_json(instance_to_dict(result.instance), os.path.join(directory, 'instance.json')))
        written.append(write_json(offer_to_dict(result.offer), os.path.join(directory, 'offer.json')))

    written.append(write_json({'schema_version': SCHEMA_VERSION,
                               'files': [os.path.basename(f) for f in written]},
                              os.path.join(directory, 'manifest.json')))
    logger.info('wrote %d file(s) to %s', len(written), directory)
    return written

