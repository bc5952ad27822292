# -*- coding: utf-8 -*-
"""
Randomised market scenarios and seeded sweeps over policy and station axes.

A scenario draws one bid per user from a uniform price range, runs the
operator model, verifies the offer, lets users respond and computes the
indicators. A sweep repeats this over a grid of (rates, bid range, gamma)
cells and a block of seeds, and reduces each cell in seed order.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing import Pool
from typing import Optional, Tuple

import numpy as np
from tqdm import tqdm

from evmarket.domain import (PricingPolicy, ProblemInstance, RateLevel, StationConfig, bids_from_arrays,
                             default_slot_capacity, validate_instance)
from evmarket.exceptions import (EVMarketError, InvalidInstanceError, SolverFailedError,
                                 SolverLimitError, VerificationError)
from evmarket.metrics import aggregate, compute_metrics
from evmarket.model import build_model
from evmarket.offers import extract_offer, verify_offer
from evmarket.response import decide, sample_preferences
from evmarket.solver import SolutionStatus, SolverOptions, solve

logger = logging.getLogger(__name__)

# rate_kw -> unit cost in SEK/kWh
RATE_CATALOG = {22.0: 1.5, 50.0: 2.0, 100.0: 2.5}
DEFAULT_MAX_MARKUP = 2.0
DEFAULT_NUM_SLOTS = 48
DEFAULT_SLOT_MINUTES = 15.0
BID_STREAM = 0


def station_for_rates(rates_kw, num_slots=DEFAULT_NUM_SLOTS, slot_minutes=DEFAULT_SLOT_MINUTES,
                      charger_count=1, max_markup=DEFAULT_MAX_MARKUP, slot_capacity=None):
    """
        Station offering the catalogued rates ``rates_kw``, each with
        ``charger_count`` chargers and a constant unit cost.
    """
    rates = []
    for kw in rates_kw:
        kw = float(kw)
        if kw not in RATE_CATALOG:
            raise ValueError('no catalogued cost for a {:g} kW rate; known rates are {}'.format(
                kw, sorted(RATE_CATALOG)))
        rates.append(RateLevel.constant(kw, RATE_CATALOG[kw], num_slots, max_markup, charger_count))
    return StationConfig.build(num_slots, slot_minutes, rates, slot_capacity)


def restation(station, rates_kw=None, num_slots=None):
    """
        Rebuild ``station`` on other catalogued rates or another horizon.

        Slot length, charger count and markup carry over. A slot capacity that
        differs from the rate-derived default is kept as well; it has to be
        uniform when the horizon changes.
    """
    if rates_kw is None:
        rates_kw = [r.rate_kw for r in station.rates]
    num_slots = num_slots or station.num_slots
    capacity = None
    if not np.allclose(station.slot_capacity, default_slot_capacity(station.rates, station.slot_minutes)):
        capacity = station.slot_capacity
        if num_slots != station.num_slots:
            if len(set(capacity)) != 1:
                raise ValueError('cannot stretch a non-uniform slot capacity over {} slots'.format(num_slots))
            capacity = capacity[0]
    first = station.rates[0]
    return station_for_rates(rates_kw, num_slots, station.slot_minutes, first.charger_count, first.max_markup,
                             capacity)


@dataclass(frozen=True)
class AvailabilityPattern:
    """
        Which slots users can charge in.

        ``full`` makes every user available over the whole horizon. ``split``
        restricts the last ``narrow_users`` users to a window of
        ``window_slots`` slots centred in the horizon.
    """
    kind: str = 'full'
    narrow_users: int = 0
    window_slots: int = 8

    def __post_init__(self):
        if self.kind not in ('full', 'split'):
            raise ValueError('availability kind must be full or split, got {!r}'.format(self.kind))
        if self.narrow_users < 0 or self.window_slots < 1:
            raise ValueError('narrow_users must be >= 0 and window_slots >= 1')

    def window(self, num_slots):
        if self.window_slots > num_slots:
            raise ValueError('window of {} slots does not fit a {}-slot horizon'.format(
                self.window_slots, num_slots))
        start = (num_slots - self.window_slots) // 2
        return tuple(range(start, start + self.window_slots))

    def slots_for(self, index, user_count, num_slots):
        if self.kind == 'split' and index >= user_count - self.narrow_users:
            return self.window(num_slots)
        return tuple(range(num_slots))


@dataclass(frozen=True)
class ScenarioSpec:
    """
        Recipe for one random instance.

        Attributes
        ----------
        user_count : int
        bid_range : tuple of float
            (low, high) in SEK/kWh; bids are uniform on it.
        demand_bounds : tuple of float
            (q_min, q_max) in kWh, shared by every user.
        availability : AvailabilityPattern
        station : StationConfig
        policy : PricingPolicy
        seed : int
    """
    user_count: int = 10
    bid_range: Tuple[float, float] = (2.0, 4.0)
    demand_bounds: Tuple[float, float] = (20.0, 40.0)
    availability: AvailabilityPattern = field(default_factory=AvailabilityPattern)
    station: StationConfig = field(default_factory=lambda: station_for_rates([22]))
    policy: PricingPolicy = field(default_factory=PricingPolicy)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'bid_range', tuple(float(b) for b in self.bid_range))
        object.__setattr__(self, 'demand_bounds', tuple(float(q) for q in self.demand_bounds))
        if self.user_count < 0:
            raise ValueError('user_count must be >= 0')
        low, high = self.bid_range
        if low > high:
            raise ValueError('bid range low > high: [{}, {}]'.format(low, high))
        if low < 0:
            raise ValueError('bid range must be non-negative')
        q_min, q_max = self.demand_bounds
        if q_min < 0 or q_min > q_max:
            raise ValueError('demand bounds must satisfy 0 <= q_min <= q_max, got [{}, {}]'.format(q_min, q_max))
        if self.availability.narrow_users > self.user_count:
            raise ValueError('{} narrow-window users for {} users'.format(
                self.availability.narrow_users, self.user_count))
        if self.availability.kind == 'split':
            self.availability.window(self.station.num_slots)

    def with_rates(self, rates_kw):
        """
            Same scenario with the catalogued rates ``rates_kw`` on the current horizon.
        """
        return replace(self, station=restation(self.station, rates_kw))


def _draw_bid(child, low, high):
    rng = np.random.Generator(np.random.PCG64(child))
    # two decimals keep archived instances exact
    return max(0.01, round(float(rng.uniform(low, high)), 2))


def generate_instance(spec):
    """
        Draw a ProblemInstance from ``spec``.

        Bid prices use ``SeedSequence([seed, 0])`` spawned into one child
        stream per user, so user ``k``'s bid does not depend on how many users
        follow it.
    """
    low, high = spec.bid_range
    q_min, q_max = spec.demand_bounds
    T = spec.station.num_slots
    children = np.random.SeedSequence([int(spec.seed), BID_STREAM]).spawn(spec.user_count)
    prices = [_draw_bid(child, low, high) for child in children]
    slots = [spec.availability.slots_for(k, spec.user_count, T) for k in range(spec.user_count)]
    bids = bids_from_arrays(prices, q_min, q_max, slots)
    instance = ProblemInstance(bids, spec.station, spec.policy)
    logger.debug('generated %d bids on %s kW for seed %d', len(bids), spec.station.rate_label(), spec.seed)
    return instance


@dataclass(frozen=True)
class ScenarioOptions:
    """
        How scenarios are solved and evaluated.

        Attributes
        ----------
        solver : SolverOptions
        backend : str or None
            Backend name; ``None`` defers to EVMARKET_SOLVER.
        respond : bool
            Sample user preferences and compute accept/decline decisions.
        outside_option : float
            Outside option given to sampled preferences.
        price_level : {'slot', 'user'}
        tolerance : float
            Integrality and verification tolerance.
    """
    solver: SolverOptions = field(default_factory=SolverOptions)
    backend: Optional[str] = None
    respond: bool = True
    outside_option: float = 0.0
    price_level: str = 'slot'
    tolerance: float = 1e-6


@dataclass(frozen=True)
class ScenarioResult:
    instance: ProblemInstance
    offer: object
    decisions: Optional[list]
    metrics: object
    solution: object
    report: object


def run_scenario(instance, options=None, preferences=None, seed=None):
    """
        Build, solve, extract, verify, respond and measure one instance.

        Parameters
        ----------
        instance : ProblemInstance

        options : ScenarioOptions, optional

        preferences : dict or list of UserPreference, optional
            Overrides sampling; only used when ``options.respond``.

        seed : int, optional
            Seeds preference sampling and tags the metrics.

        Returns
        -------
        ScenarioResult

        Raises
        ------
        SolverLimitError
            If the backend stops on a limit before proving optimality.
        VerificationError
            If the extracted offer breaks a market rule.
    """
    options = options or ScenarioOptions()
    checked = validate_instance(instance)
    if not checked.ok:
        raise InvalidInstanceError(checked.violations)

    model = build_model(instance)
    solution = solve(model, options.solver, options.backend)
    if solution.status is SolutionStatus.limit_reached:
        raise SolverLimitError(solution)
    if not solution.is_optimal:
        raise SolverFailedError(solution)

    offer = extract_offer(model, solution, instance, options.tolerance)
    report = verify_offer(offer, instance, options.tolerance)
    if not report.ok:
        raise VerificationError(report)

    decisions = None
    if options.respond:
        if preferences is None:
            preferences = sample_preferences(instance.num_users, seed if seed is not None else 0,
                                             options.outside_option)
        decisions = decide(offer, instance, preferences)

    metrics = compute_metrics(offer, instance, decisions, options.price_level, seed)
    logger.info('seed %s: profit %.4f, %d/%d users served in %.2fs', seed, metrics.operator_profit,
                offer.num_accepted, instance.num_users, solution.runtime)
    return ScenarioResult(instance, offer, decisions, metrics, solution, report)


def run_spec(spec, options=None):
    """
        generate_instance followed by run_scenario with the spec's seed.
    """
    return run_scenario(generate_instance(spec), options, seed=spec.seed)


@dataclass(frozen=True)
class SweepCell:
    rates_kw: Tuple[float, ...]
    gamma: float
    bid_range: Tuple[float, float]

    @property
    def rate_label(self):
        return '+'.join('{:g}'.format(kw) for kw in self.rates_kw)


@dataclass(frozen=True)
class SweepSpec:
    """
        A grid of cells, each run for ``seeds`` consecutive seeds starting at
        ``first_seed``. Cells are ordered by rates, then bid range, then gamma.
    """
    base: ScenarioSpec
    gammas: Tuple[float, ...] = (0.0,)
    rate_configs: Tuple[Tuple[float, ...], ...] = ((22.0,),)
    bid_ranges: Tuple[Tuple[float, float], ...] = ((2.0, 4.0),)
    seeds: int = 50
    first_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'gammas', tuple(float(g) for g in self.gammas))
        object.__setattr__(self, 'rate_configs', tuple(tuple(float(kw) for kw in rc) for rc in self.rate_configs))
        object.__setattr__(self, 'bid_ranges', tuple(tuple(float(b) for b in br) for br in self.bid_ranges))
        if not self.gammas or not self.rate_configs or not self.bid_ranges:
            raise ValueError('every sweep axis needs at least one value')
        if self.seeds < 1:
            raise ValueError('seeds must be >= 1')
        for low, high in self.bid_ranges:
            if low > high:
                raise ValueError('bid range low > high: [{}, {}]'.format(low, high))

    def cells(self):
        return [SweepCell(rc, g, br)
                for rc, br, g in itertools.product(self.rate_configs, self.bid_ranges, self.gammas)]

    def seed_values(self):
        return list(range(self.first_seed, self.first_seed + self.seeds))

    def spec_for(self, cell, seed):
        spec = self.base.with_rates(cell.rates_kw)
        return replace(spec, bid_range=cell.bid_range, seed=seed,
                       policy=replace(spec.policy, gamma=cell.gamma))


@dataclass
class SweepRow:
    """
        Aggregated outcome of one sweep cell.

        Attributes
        ----------
        cell : SweepCell
        metrics : AggregateMetrics or None
            Over the seeds that completed; ``None`` if none did.
        status : str
            'ok', 'no-service' when no seed served any user, or 'error' when
            every seed failed.
        errors : list of str
            One message per failed seed.
    """
    cell: SweepCell
    metrics: object
    status: str
    errors: list = field(default_factory=list)

    @property
    def complete(self):
        return not self.errors


def _run_sweep_job(job, spec, options):
    k, seed = job
    cell = spec.cells()[k]
    try:
        result = run_spec(spec.spec_for(cell, seed), options)
    except (EVMarketError, ValueError) as e:
        return k, seed, None, 'seed {}: {}'.format(seed, e)
    return k, seed, result.metrics, None


def run_sweep(spec, options=None, processes=1, progress=True):
    """
        Run every (cell, seed) pair of a sweep.

        Parameters
        ----------
        spec : SweepSpec

        options : ScenarioOptions, optional

        processes : int, optional
            Worker processes; 1 runs in the calling process.

        progress : bool, optional
            Show a tqdm progress bar.

        Returns
        -------
        list of SweepRow
            One row per cell in ``spec.cells()`` order. Failed seeds are
            recorded on their row and the sweep carries on.
    """
    options = options or ScenarioOptions()
    cells = spec.cells()
    jobs = [(k, seed) for k in range(len(cells)) for seed in spec.seed_values()]
    worker = partial(_run_sweep_job, spec=spec, options=options)
    logger.info('sweep: %d cells x %d seeds on %d process(es)', len(cells), spec.seeds, processes)

    if processes > 1:
        pool = Pool(processes=processes)
        try:
            results = list(tqdm(pool.imap(worker, jobs), total=len(jobs), disable=not progress))
        finally:
            pool.close()
            pool.join()
    else:
        results = [worker(job) for job in tqdm(jobs, disable=not progress)]

    rows = []
    for k, cell in enumerate(cells):
        mine = sorted((r for r in results if r[0] == k), key=lambda r: r[1])
        done = [m for _, _, m, _ in mine if m is not None]
        errors = [e for _, _, _, e in mine if e is not None]
        for e in errors:
            logger.warning('cell %s kW, gamma %g, bids %s: %s', cell.rate_label, cell.gamma, cell.bid_range, e)
        if not done:
            rows.append(SweepRow(cell, None, 'error', errors))
            continue
        status = 'ok' if any(m.acceptance_rate > 0 for m in done) else 'no-service'
        rows.append(SweepRow(cell, aggregate(done), status, errors))
    return rows
