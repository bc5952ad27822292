# -*- coding: utf-8 -*-
"""
Command-line entry point.

    evmarket run --preset baseline-single-rate --gamma 0.4 --seed 7 --out results/
    evmarket sweep --preset table2 --seeds 50 --out results/table2
    evmarket verify --instance results/instance.json --offer results/offer.json
    evmarket oracle --instance data/tiny_a.json --compare
    evmarket export-lp --preset large-scale --out model.lp

Settings come from ``--config`` (JSON) and are overridden by flags. The solver
backend is chosen by the EVMARKET_SOLVER environment variable.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from evmarket.domain import PricingPolicy
from evmarket.exceptions import ConfigError, EVMarketError
from evmarket.metrics import PRICE_LEVELS
from evmarket.model import build_model
from evmarket.offers import verify_offer
from evmarket.oracle import exhaustive_oracle
from evmarket.presets import Preset, get_preset, preset_names, with_overrides
from evmarket.scenarios import (AvailabilityPattern, ScenarioOptions, ScenarioSpec, SweepSpec,
                                generate_instance, run_scenario, run_sweep, station_for_rates)
from evmarket.serialization import (FORMATS, SCHEMA_VERSION, emit_results, load_instance, load_offer,
                                    offer_to_dict, read_json, write_json)
from evmarket.solver import SolverOptions

logger = logging.getLogger(__name__)

CONFIG_KEYS = ('schema_version', 'command', 'preset', 'scenario', 'sweep', 'solver', 'run', 'output')
SCENARIO_KEYS = ('user_count', 'bid_range', 'demand_bounds', 'availability', 'rates', 'num_slots',
                 'slot_minutes', 'charger_count', 'max_markup', 'slot_capacity', 'gamma', 'alpha', 'epsilon')
SWEEP_KEYS = ('gammas', 'rate_configs', 'bid_ranges', 'seeds', 'first_seed')
SOLVER_KEYS = ('backend', 'time_limit', 'threads', 'seed', 'mip_rel_gap', 'feasibility_tolerance')
RUN_KEYS = ('seed', 'processes', 'price_level', 'outside_option', 'instance', 'offer')
OUTPUT_KEYS = ('directory', 'formats')
AVAILABILITY_KEYS = ('kind', 'narrow_users', 'window_slots')


@dataclass(frozen=True)
class RunConfig:
    """
        A fully resolved command.

        Attributes
        ----------
        command : str
        preset : str or None
            Preset name, or ``None`` for an inline scenario.
        sweep : SweepSpec or None
            Scenario recipe and axes; ``None`` only for file-based commands
            given an instance.
        seed : int or None
            Seed for ``run``; defaults to the sweep's first seed.
        solver : SolverOptions
        backend : str or None
        out : str
        formats : tuple of str
        processes : int
        price_level : str
        outside_option : float
        instance_path, offer_path : str or None
            Inputs of ``verify``, ``oracle`` and ``export-lp``.
        compare : bool
            ``oracle`` also solves the MILP and checks the objectives agree.
    """
    command: str
    preset: Optional[str]
    sweep: Optional[SweepSpec]
    seed: Optional[int] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    backend: Optional[str] = None
    out: str = 'results'
    formats: Tuple[str, ...] = FORMATS
    processes: int = 1
    price_level: str = 'slot'
    outside_option: float = 0.0
    instance_path: Optional[str] = None
    offer_path: Optional[str] = None
    compare: bool = False

    def scenario(self):
        if self.sweep is None:
            raise ConfigError('{} needs a preset or an inline scenario'.format(self.command))
        cell = self.sweep.cells()[0]
        return self.sweep.spec_for(cell, self.sweep.first_seed if self.seed is None else self.seed)

    def scenario_options(self):
        return ScenarioOptions(solver=self.solver, backend=self.backend, price_level=self.price_level,
                               outside_option=self.outside_option,
                               tolerance=self.solver.feasibility_tolerance)

    def instance(self):
        if self.instance_path is not None:
            return load_instance(self.instance_path)
        return generate_instance(self.scenario())


def _floats(text):
    try:
        return tuple(float(x) for x in str(text).split(',') if x.strip())
    except ValueError:
        raise ConfigError('expected comma-separated numbers, got {!r}'.format(text))


def _groups(text):
    return tuple(_floats(part) for part in str(text).split(';') if part.strip())


def _pair(values, what):
    values = tuple(float(v) for v in values)
    if len(values) != 2:
        raise ConfigError('{} needs two values, got {}'.format(what, list(values)))
    if values[0] > values[1]:
        raise ConfigError('{} low > high: {}'.format(what, list(values)))
    return values


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError('{} must be a JSON object'.format(where))
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError('unknown key(s) in {}: {}'.format(where, ', '.join(sorted(unknown))))


def _inline_scenario(d):
    """
        ScenarioSpec from the ``scenario`` section of a config file. Missing
        keys take the documented defaults.
    """
    _check_keys(d, SCENARIO_KEYS, 'scenario')
    avail = d.get('availability', {})
    _check_keys(avail, AVAILABILITY_KEYS, 'scenario.availability')
    station = station_for_rates(d.get('rates', [22.0]), d.get('num_slots', 48), d.get('slot_minutes', 15.0),
                                d.get('charger_count', 1), d.get('max_markup', 2.0), d.get('slot_capacity'))
    return ScenarioSpec(user_count=d.get('user_count', 10),
                        bid_range=_pair(d.get('bid_range', (2.0, 4.0)), 'bid_range'),
                        demand_bounds=_pair(d.get('demand_bounds', (20.0, 40.0)), 'demand_bounds'),
                        availability=AvailabilityPattern(**avail),
                        station=station,
                        policy=PricingPolicy(d.get('gamma', 0.0), d.get('alpha', 2.5), d.get('epsilon', 0.5)))


def _sweep_from(base, d):
    _check_keys(d, SWEEP_KEYS, 'sweep')
    rates = (tuple(r.rate_kw for r in base.station.rates),)
    return SweepSpec(base,
                     gammas=tuple(d.get('gammas', (base.policy.gamma,))),
                     rate_configs=tuple(tuple(rc) for rc in d.get('rate_configs', rates)),
                     bid_ranges=tuple(_pair(br, 'bid_range') for br in d.get('bid_ranges', (base.bid_range,))),
                     seeds=d.get('seeds', 50),
                     first_seed=d.get('first_seed', 0))


def load_config_file(filename):
    """
        Read and shape-check a JSON configuration file.

        Raises
        ------
        ConfigError
            If the file is malformed or has unknown keys.
    """
    data = read_json(filename)
    _check_keys(data, CONFIG_KEYS, 'config')
    version = data.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError('unsupported config schema_version {!r}'.format(version))
    for key, allowed in (('solver', SOLVER_KEYS), ('run', RUN_KEYS), ('output', OUTPUT_KEYS)):
        _check_keys(data.get(key, {}), allowed, key)
    if 'preset' in data and 'scenario' in data:
        raise ConfigError('config gives both a preset and an inline scenario')
    return data


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON configuration file; flags override its values')
    common.add_argument('--preset', help='named scenario family: ' + ', '.join(preset_names()))
    common.add_argument('--gamma', help='price protection ratio, or a comma-separated list for sweeps')
    common.add_argument('--alpha', type=float, help='price cap as a multiple of unit cost')
    common.add_argument('--epsilon', type=float, help='minimum margin over unit cost')
    common.add_argument('--seed', type=int, help='scenario seed (run) or first seed (sweep)')
    common.add_argument('--seeds', type=int, help='seeds per sweep cell')
    common.add_argument('--users', type=int, help='number of users')
    common.add_argument('--slots', type=int, help='number of time slots')
    common.add_argument('--rates', help='rates in kW, e.g. "22,50"; separate sweep configurations with ";"')
    common.add_argument('--bid-range', help='bid range, e.g. "2,4"; separate sweep ranges with ";"')
    common.add_argument('--out', help='output directory (export-lp: file or directory)')
    common.add_argument('--format', help='comma-separated subset of csv,json')
    common.add_argument('--time-limit', type=float, help='solver time limit in seconds')
    common.add_argument('--threads', type=int, help='solver threads, where the backend supports it')
    common.add_argument('--processes', type=int, help='worker processes for sweeps')
    common.add_argument('-v', '--verbose', action='count', default=0, help='-v for info, -vv for debug')
    common.add_argument('--log-file', help='write log output to this file')

    parser = argparse.ArgumentParser(prog='evmarket', description='Bid-based EV charging market simulator')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('run', parents=[common], help='solve one scenario')
    sub.add_parser('sweep', parents=[common], help='run a seeded grid of scenarios')
    p = sub.add_parser('verify', parents=[common], help='re-check a stored offer against a stored instance')
    p.add_argument('--instance', required=True)
    p.add_argument('--offer', required=True)
    p = sub.add_parser('oracle', parents=[common], help='exhaustively solve a tiny instance')
    p.add_argument('--instance')
    p.add_argument('--compare', action='store_true', help='also solve the MILP and compare objectives')
    p = sub.add_parser('export-lp', parents=[common], help='write the operator model in LP format')
    p.add_argument('--instance')
    return parser


def parse_config(argv=None):
    """
        Resolve command-line arguments, and the config file they name, into a RunConfig.

        Raises
        ------
        ConfigError
            On malformed files, unknown presets or keys, and conflicting options.
    """
    args = build_parser().parse_args(argv)
    return config_from_args(args)


def config_from_args(args):
    data = load_config_file(args.config) if args.config else {}
    if data.get('command') not in (None, args.command):
        raise ConfigError('config is for {!r} but the command is {!r}'.format(data['command'], args.command))
    solver_d = data.get('solver', {})
    run_d = data.get('run', {})
    out_d = data.get('output', {})

    if args.command == 'run' and args.seeds is not None:
        raise ConfigError('--seeds applies to sweep, not run')
    if args.preset and 'scenario' in data:
        raise ConfigError('--preset conflicts with the inline scenario in the config file')

    preset_name = args.preset or data.get('preset')
    instance_path = getattr(args, 'instance', None) or run_d.get('instance')
    sweep = None
    try:
        if preset_name:
            preset = get_preset(preset_name)
            if 'sweep' in data:
                preset = Preset(preset.name, preset.description,
                                _sweep_from(preset.sweep.base, dict(data['sweep'])))
        elif 'scenario' in data:
            base = _inline_scenario(data['scenario'])
            preset = Preset('inline', 'inline scenario', _sweep_from(base, data.get('sweep', {})))
        else:
            preset = None
            if args.command == 'sweep' or (args.command != 'verify' and instance_path is None):
                raise ConfigError('{} needs --preset, an inline scenario or an instance file'.format(args.command))

        if preset is not None:
            gammas = _floats(args.gamma) if args.gamma is not None else None
            if gammas is not None and args.command != 'sweep' and len(gammas) != 1:
                raise ConfigError('--gamma takes a single value outside sweep')
            rate_configs = _groups(args.rates) if args.rates else None
            bid_ranges = tuple(_pair(br, 'bid_range') for br in _groups(args.bid_range)) if args.bid_range else None
            first_seed = args.seed if args.command == 'sweep' else None
            sweep = with_overrides(preset, gammas=gammas, rate_configs=rate_configs, bid_ranges=bid_ranges,
                                   seeds=args.seeds, users=args.users, num_slots=args.slots,
                                   alpha=args.alpha, epsilon=args.epsilon, first_seed=first_seed)
        solver = SolverOptions(time_limit=args.time_limit or solver_d.get('time_limit', 60.0),
                               threads=args.threads if args.threads is not None else solver_d.get('threads'),
                               seed=solver_d.get('seed'),
                               feasibility_tolerance=solver_d.get('feasibility_tolerance', 1e-6),
                               mip_rel_gap=solver_d.get('mip_rel_gap', 0.0))
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e))

    formats = _format_list(args.format) if args.format else tuple(out_d.get('formats', FORMATS))
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError('unknown output format(s): {}'.format(', '.join(bad)))
    price_level = run_d.get('price_level', 'slot')
    if price_level not in PRICE_LEVELS:
        raise ConfigError('price_level must be one of {}'.format(PRICE_LEVELS))

    return RunConfig(command=args.command,
                     preset=preset_name,
                     sweep=sweep,
                     seed=args.seed if args.seed is not None else run_d.get('seed'),
                     solver=solver,
                     backend=solver_d.get('backend'),
                     out=args.out or out_d.get('directory', 'results'),
                     formats=formats,
                     processes=args.processes or run_d.get('processes', 1),
                     price_level=price_level,
                     outside_option=float(run_d.get('outside_option', 0.0)),
                     instance_path=instance_path,
                     offer_path=getattr(args, 'offer', None) or run_d.get('offer'),
                     compare=getattr(args, 'compare', False))


def _format_list(text):
    return tuple(f.strip().lower() for f in text.split(',') if f.strip())


def configure_logging(verbose=0, log_file=None):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, filename=log_file,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def cmd_run(config):
    if config.instance_path is not None:
        instance = load_instance(config.instance_path)
        seed = config.seed
    else:
        spec = config.scenario()
        instance = generate_instance(spec)
        seed = spec.seed
    result = run_scenario(instance, config.scenario_options(), seed=seed)
    emit_results(result, config.formats, config.out)
    m = result.metrics
    print('profit {:.4f}, acceptance {:.2f}, {} of {} users served'.format(
        m.operator_profit, m.acceptance_rate, result.offer.num_accepted, instance.num_users))
    return 0


def cmd_sweep(config):
    rows = run_sweep(config.sweep, config.scenario_options(), processes=config.processes)
    emit_results(rows, config.formats, config.out)
    failed = [row for row in rows if not row.complete]
    print('{} cell(s), {} with failed seeds'.format(len(rows), len(failed)))
    return 0 if not failed else 1


def cmd_verify(config):
    if config.instance_path is None or config.offer_path is None:
        raise ConfigError('verify needs --instance and --offer')
    instance = load_instance(config.instance_path)
    offer = load_offer(config.offer_path)
    report = verify_offer(offer, instance, config.solver.feasibility_tolerance)
    if report.ok:
        print('offer verified: no violations')
        return 0
    print('{} violation(s)'.format(len(report)))
    for v in report:
        print('  ' + str(v))
    return 1


def cmd_oracle(config):
    instance = config.instance()
    offer = exhaustive_oracle(instance)
    os.makedirs(config.out, exist_ok=True)
    write_json(offer_to_dict(offer), os.path.join(config.out, 'oracle_offer.json'))
    print('oracle objective {:.6f}, {} of {} users served'.format(
        offer.objective, offer.num_accepted, instance.num_users))
    if not config.compare:
        return 0
    result = run_scenario(instance, replace(config.scenario_options(), respond=False))
    gap = abs(result.metrics.operator_profit - offer.objective)
    print('milp objective {:.6f}, gap {:.2e}'.format(result.metrics.operator_profit, gap))
    return 0 if gap <= 1e-6 else 1


def cmd_export_lp(config):
    instance = config.instance()
    model = build_model(instance)
    target = config.out
    if not target.endswith('.lp'):
        os.makedirs(target, exist_ok=True)
        target = os.path.join(target, 'model.lp')
    model.write_lp(target)
    n_bin, n_cont = model.counts()
    print('wrote {} ({} binary, {} continuous variables, {} constraints)'.format(
        target, n_bin, n_cont, len(model.constraints)))
    return 0


HANDLERS = {'run': cmd_run, 'sweep': cmd_sweep, 'verify': cmd_verify, 'oracle': cmd_oracle,
            'export-lp': cmd_export_lp}


def main(argv=None):
    """
        Returns
        -------
        int
            0 when every requested cell completed and every offer verified,
            1 on any failure, 2 for usage errors (from argparse).
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)
    try:
        config = config_from_args(args)
        return HANDLERS[config.command](config)
    except (EVMarketError, OSError) as e:
        logger.error('%s', e)
        print('error: {}'.format(e), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
