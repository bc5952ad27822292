import json
import os

import pandas as pd
import pytest

from evmarket.domain import UserBid
from evmarket.exceptions import ConfigError
from evmarket.metrics import ScenarioMetrics, aggregate
from evmarket.offers import OperatorOffer, UserOffer
from evmarket.presets import get_preset
from evmarket.scenarios import SweepRow, generate_instance, run_scenario
from evmarket.serialization import (DETAIL_COLUMNS, SCHEMA_VERSION, SWEEP_COLUMNS, emit_results,
                                    instance_from_dict, instance_to_dict, load_instance, money,
                                    offer_from_dict, offer_to_dict, sweep_frame)


def test_money_has_six_decimals():
    assert money(3.75) == '3.750000'
    assert money(None) is None


def test_instance_round_trip():
    instance = generate_instance(get_preset('mixed-22-50').scenario(seed=11))
    back = instance_from_dict(json.loads(json.dumps(instance_to_dict(instance))))
    assert back == instance


def test_stored_instances_load(data_dir):
    instance = load_instance(os.path.join(data_dir, 'tiny_a.json'))
    assert instance.bids == (UserBid(1, 3.0, 5.0, 6.0, (0, 1)),)
    assert instance.station.rates[0].cost_per_kwh == (1.5, 1.5)
    assert instance.policy.gamma == 0.0


def test_offer_round_trip():
    offer = OperatorOffer((UserOffer(1, True, 0, (0, 1), (3.0, 3.75), (0.0, 3.75), (True, False), (5.5, 0.5)),
                           UserOffer.rejected(2)),
                          reference_prices=((3.0, 0.0),), objective=12.375)
    assert offer_from_dict(json.loads(json.dumps(offer_to_dict(offer)))) == offer


def test_unknown_keys_and_versions_are_rejected(tiny_a):
    d = instance_to_dict(tiny_a)
    d['colour'] = 'blue'
    with pytest.raises(ConfigError, match='colour'):
        instance_from_dict(d)
    d = instance_to_dict(tiny_a)
    d['schema_version'] = SCHEMA_VERSION + 1
    with pytest.raises(ConfigError):
        instance_from_dict(d)
    with pytest.raises(ConfigError):
        offer_from_dict(instance_to_dict(tiny_a))


def test_tiny_a_detail(tiny_a, tmpdir):
    result = run_scenario(tiny_a, seed=0)
    written = emit_results(result, ['csv', 'json'], str(tmpdir))
    names = [os.path.basename(f) for f in written]
    assert names == ['detail.csv', 'allocation.csv', 'detail.json', 'instance.json', 'offer.json', 'manifest.json']

    df = pd.read_csv(str(tmpdir.join('detail.csv')))
    assert list(df.columns) == DETAIL_COLUMNS
    row = df.iloc[0]
    assert bool(row['accepted'])
    assert row['countered_slots'] == 1
    assert row['at_bid_slots'] == 0
    assert row['mean_final_price'] == pytest.approx(3.75)

    grid = pd.read_csv(str(tmpdir.join('allocation.csv')), index_col='user_id')
    assert sorted(grid.loc[1].tolist()) == [0, 2]

    detail = json.loads(tmpdir.join('detail.json').read())
    assert detail['rows'][0]['mean_final_price'] == '3.750000'
    assert detail['metrics']['operator_profit'] == '12.375000'
    manifest = json.loads(tmpdir.join('manifest.json').read())
    assert manifest['schema_version'] == SCHEMA_VERSION
    assert 'manifest.json' not in manifest['files']


def test_all_rejected_detail(tiny_b, tmpdir):
    result = run_scenario(tiny_b)
    emit_results(result, ['csv', 'json'], str(tmpdir))
    df = pd.read_csv(str(tmpdir.join('detail.csv')))
    row = df.iloc[0]
    assert not bool(row['accepted'])
    for col in ('rate_kw', 'slot_start', 'slot_end', 'at_bid_slots', 'countered_slots', 'mean_final_price'):
        assert pd.isna(row[col]), col
    rec = json.loads(tmpdir.join('detail.json').read())['rows'][0]
    assert rec['accepted'] is False
    assert rec['slot_start'] is None
    assert rec['user_accepts'] is None


def _fake_rows(sweep):
    rows = []
    for k, cell in enumerate(sweep.cells()):
        per_seed = [ScenarioMetrics(100.0 - k, 0.5, 3.0, 0.25, 0.1, seed=s) for s in range(3)]
        rows.append(SweepRow(cell, aggregate(per_seed), 'ok'))
    return rows


def test_table2_sweep_csv(tmpdir):
    rows = _fake_rows(get_preset('table2').sweep)
    rows[-1] = SweepRow(rows[-1].cell, None, 'error', ['seed 0: solver returned failed (boom)'])
    emit_results(rows, ['csv', 'json'], str(tmpdir))

    df = pd.read_csv(str(tmpdir.join('sweep.csv')))
    assert list(df.columns) == SWEEP_COLUMNS
    assert len(df) == 12
    assert df['rate_kw'].tolist()[:4] == [22, 22, 22, 22]
    assert df['gamma'].tolist()[:4] == [0.2, 0.4, 0.6, 0.8]
    assert df['profit_std'].iloc[0] == 0.0
    assert df['seeds'].iloc[0] == 3
    assert pd.isna(df['profit_mean'].iloc[-1])

    sweep = json.loads(tmpdir.join('sweep.json').read())
    assert len(sweep['rows']) == 12
    assert sweep['rows'][0]['profit_mean'] == '100.000000'
    assert sweep['rows'][-1]['status'] == 'error'
    assert sweep['rows'][-1]['errors']


def test_sweep_frame_labels_mixed_rates():
    rows = _fake_rows(get_preset('mixed-22-50').sweep)
    assert sweep_frame(rows)['rate_kw'].tolist() == ['22+50'] * 4


def test_unknown_format(tiny_a, tmpdir):
    with pytest.raises(ConfigError):
        emit_results(run_scenario(tiny_a), ['xml'], str(tmpdir))
