# -*- coding: utf-8 -*-
"""
Solver-agnostic mixed-integer description of the operator's pricing and
scheduling problem, its builder, and an LP-format writer for debugging.

Index conventions: ``i`` is the position of a bid in ``instance.bids``, ``t``
a 0-based slot and ``r`` the position of a rate in ``station.rates``.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from evmarket.domain import validate_instance
from evmarket.exceptions import InvalidInstanceError

logger = logging.getLogger(__name__)

CONSTRAINT_TAGS = ('eq2', 'eq3', 'eq4', 'eq5', 'eq6', 'eq7', 'eq8', 'eq9', 'eq10', 'eq11', 'eq12', 'eq12b',
                   'eq13', 'eq14', 'eq15', 'eq16', 'eq17', 'eq18', 'eq19', 'aux')

# default row-name stem per tag
ROW_LABELS = {
    'eq2': 'rate_choice',
    'eq3': 'availability',
    'eq4': 'single_window',
    'eq5': 'window_start',
    'eq6': 'window_end',
    'eq7': 'demand',
    'eq8': 'slot_capacity',
    'eq9': 'chargers',
    'eq10': 'slot_energy',
    'eq11': 'rate_link',
    'eq12': 'price_mode',
    'eq12b': 'markup_cap',
    'eq13': 'final_price',
    'eq14': 'min_margin',
    'eq15': 'price_cap',
    'eq16': 'reference_price',
    'eq17': 'counter_floor',
    'eq18': 'protection',
    'aux': 'slot_count',
}

# slack used when deciding whether a bid sits inside the price band
_BAND_TOL = 1e-9


class VariableKind(enum.Enum):
    binary = 'binary'
    continuous = 'continuous'


class Sense(enum.Enum):
    le = '<='
    eq = '='
    ge = '>='


class ObjectiveSense(enum.Enum):
    maximize = 'maximize'
    minimize = 'minimize'


def z_name(i, t, r):
    return 'z_{}_{}_{}'.format(i, t, r)


def xb_name(i, t, r):
    return 'xB_{}_{}_{}'.format(i, t, r)


def xn_name(i, t, r):
    return 'xN_{}_{}_{}'.format(i, t, r)


def y_name(i, r):
    return 'y_{}_{}'.format(i, r)


def a_name(i):
    return 'a_{}'.format(i)


def zs_name(i, t):
    return 'zs_{}_{}'.format(i, t)


def ze_name(i, t):
    return 'ze_{}_{}'.format(i, t)


def pn_name(i, t, r):
    return 'pN_{}_{}_{}'.format(i, t, r)


def pf_name(i, t, r):
    return 'pF_{}_{}_{}'.format(i, t, r)


def q_name(i, t):
    return 'q_{}_{}'.format(i, t)


def pr_name(t, r):
    return 'pR_{}_{}'.format(t, r)


@dataclass
class Variable:
    name: str
    kind: VariableKind = VariableKind.continuous
    lower: float = 0.0
    upper: float = np.inf

    @property
    def is_binary(self):
        return self.kind is VariableKind.binary


@dataclass
class Constraint:
    """
        One linear row, sum(coefficients[v] * v) <sense> rhs, tagged with the
        market rule it implements.
    """
    name: str
    coefficients: Dict[str, float]
    sense: Sense
    rhs: float
    tag: str

    def activity(self, values):
        return sum(c * values.get(v, 0.0) for v, c in self.coefficients.items())

    def violation(self, values):
        """
            Amount by which ``values`` violates the row (0 when satisfied).
        """
        lhs = self.activity(values)
        if self.sense is Sense.le:
            return max(0.0, lhs - self.rhs)
        if self.sense is Sense.ge:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class ModelDescription:
    """
        Variables with bounds and integrality, tagged linear constraints and a
        linear objective.
    """
    name: str = 'evmarket'
    variables: List[Variable] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    objective_sense: ObjectiveSense = ObjectiveSense.maximize
    _index: Optional[Dict[str, int]] = field(default=None, repr=False, compare=False)

    def add_variable(self, name, kind=VariableKind.continuous, lower=0.0, upper=np.inf):
        var = Variable(name, kind, float(lower), float(upper))
        self.variables.append(var)
        self._index = None
        return var

    def add_constraint(self, tag, coefficients, sense, rhs, name=None):
        """
            Append a row, dropping zero coefficients. The row name defaults to
            ``<label>_<n>`` with the label taken from ROW_LABELS.
        """
        coefficients = {v: float(c) for v, c in coefficients.items() if c != 0}
        if name is None:
            name = '{}_{}'.format(ROW_LABELS.get(tag, tag), len(self.constraints))
        row = Constraint(name, coefficients, sense, float(rhs), tag)
        self.constraints.append(row)
        return row

    def index(self):
        """
            Map variable name to column position.
        """
        if self._index is None:
            self._index = {v.name: k for k, v in enumerate(self.variables)}
        return self._index

    def variable(self, name):
        return self.variables[self.index()[name]]

    def counts(self):
        """
            Returns
            -------
            (int, int)
                Number of binary and continuous variables.
        """
        n_bin = sum(1 for v in self.variables if v.is_binary)
        return n_bin, len(self.variables) - n_bin

    def rows_by_tag(self):
        counts = {}
        for row in self.constraints:
            counts[row.tag] = counts.get(row.tag, 0) + 1
        return counts

    def problems(self):
        """
            Structural defects: coefficients on undeclared variables and rows
            without a known tag.
        """
        index = self.index()
        out = []
        for name in self.objective:
            if name not in index:
                out.append('objective references undeclared variable {}'.format(name))
        for row in self.constraints:
            if row.tag not in CONSTRAINT_TAGS:
                out.append('row {} has unknown tag {}'.format(row.name, row.tag))
            for name in row.coefficients:
                if name not in index:
                    out.append('row {} references undeclared variable {}'.format(row.name, name))
        return out

    def objective_value(self, values):
        return float(sum(c * values.get(v, 0.0) for v, c in self.objective.items()))

    def infeasibilities(self, values, tolerance=1e-6):
        """
            Names of rows and variable bounds violated by more than ``tolerance``.
        """
        out = []
        for var in self.variables:
            x = values.get(var.name, 0.0)
            if x < var.lower - tolerance or x > var.upper + tolerance:
                out.append(var.name)
            elif var.is_binary and min(abs(x), abs(x - 1.0)) > tolerance:
                out.append(var.name)
        for row in self.constraints:
            if row.violation(values) > tolerance:
                out.append(row.name)
        return out

    def to_lp(self):
        """
            Render the model in CPLEX LP text format.
        """
        lines = ['\\ {}'.format(self.name),
                 'Maximize' if self.objective_sense is ObjectiveSense.maximize else 'Minimize']
        lines.extend(_wrap_expression(' obj:', self.objective))
        lines.append('Subject To')
        for row in self.constraints:
            if not row.coefficients:
                lines.append('\\ {}: empty row {} {}'.format(row.name, row.sense.value, _fmt(row.rhs)))
                continue
            expr = _wrap_expression(' {}:'.format(row.name), row.coefficients)
            expr[-1] = '{} {} {}'.format(expr[-1], row.sense.value, _fmt(row.rhs))
            lines.extend(expr)
        lines.append('Bounds')
        for var in self.variables:
            if var.is_binary:
                if var.upper < 1.0 or var.lower > 0.0:
                    lines.append(' {} = {}'.format(var.name, _fmt(var.lower if var.lower > 0.0 else var.upper)))
                continue
            upper = '+inf' if np.isinf(var.upper) else _fmt(var.upper)
            lines.append(' {} <= {} <= {}'.format(_fmt(var.lower), var.name, upper))
        binaries = [v.name for v in self.variables if v.is_binary]
        if binaries:
            lines.append('Binaries')
            for k in range(0, len(binaries), 8):
                lines.append(' ' + ' '.join(binaries[k:k + 8]))
        lines.append('End')
        return '\n'.join(lines) + '\n'

    def write_lp(self, filename):
        with open(filename, 'w') as f:
            f.write(self.to_lp())
        logger.info('wrote LP model %s to %s', self.name, filename)
        return filename


def _fmt(x):
    return '{:.12g}'.format(x)


def _wrap_expression(head, coefficients, per_line=6):
    lines = []
    current = head
    for k, (name, c) in enumerate(coefficients.items()):
        sign = '-' if c < 0 else '+'
        current += ' {} {} {}'.format(sign, _fmt(abs(c)), name)
        if (k + 1) % per_line == 0:
            lines.append(current)
            current = '  '
    if current.strip() or not lines:
        lines.append(current)
    return lines


def _longest_run(flags):
    best = run = 0
    for flag in flags:
        run = run + 1 if flag else 0
        best = max(best, run)
    return best


def _slot_count_range(bid, energy):
    """
        Smallest and largest number of slots at one rate that keep the user's
        delivered energy inside [q_min, q_max].
    """
    n_min = max(0, int(math.ceil(bid.q_min / energy - _BAND_TOL)))
    n_max = int(math.floor(bid.q_max / energy + _BAND_TOL))
    return n_min, n_max


def build_model(instance):
    """
        Translate a ProblemInstance into the operator's MILP.

        The objective is the linear form sum slot_energy * (pF - cost * z),
        equal to the bilinear profit on every feasible point because the final
        price pF vanishes whenever z does.

        Variables that no feasible point can switch on are declared with a zero
        upper bound: z where the slot is unacceptable or the rate cannot meet
        the user's demand in one window, xB where the bid lies outside the
        price band, xN where no counter price fits below the cap. Price bounds
        and big-M coefficients are the smallest ones the band allows, and each
        usable rate gets a pair of slot-count rows (tag ``aux``).

        Parameters
        ----------
        instance : ProblemInstance

        Returns
        -------
        ModelDescription

        Raises
        ------
        InvalidInstanceError
            If validate_instance reports violations.
    """
    result = validate_instance(instance)
    if not result.ok:
        raise InvalidInstanceError(result.violations)

    station = instance.station
    policy = instance.policy
    users = range(instance.num_users)
    slots = range(station.num_slots)
    rates = range(station.num_rates)
    E = station.energies()
    c = station.cost_matrix()
    p_high = instance.price_big_m
    bids = instance.bids

    floor = (1.0 + policy.epsilon) * c
    cap = policy.alpha * c
    markups = np.array([rate.max_markup for rate in station.rates])
    p_bid = np.array([bid.bid_price for bid in bids])
    avail = np.array([bid.availability_vector(station.num_slots) for bid in bids], dtype=bool)
    avail = avail.reshape(len(bids), station.num_slots)

    # rate r is usable by user i when some window of acceptable slots meets the demand bounds
    counts = [[_slot_count_range(bid, E[r]) for r in rates] for bid in bids]
    usable = np.array([[n_min <= min(n_max, _longest_run(avail[i])) for (n_min, n_max) in counts[i]]
                       for i in users], dtype=bool).reshape(len(bids), station.num_rates)

    # shapes (users, slots, rates)
    at_bid_ok = ((p_bid[:, None, None] >= floor.T[None] - _BAND_TOL)
                 & (p_bid[:, None, None] <= cap.T[None] + _BAND_TOL))
    counter_top = np.minimum(p_bid[:, None, None] + markups[None, None, :], cap.T[None])
    counter_ok = counter_top >= floor.T[None] - _BAND_TOL
    z_ok = avail[:, :, None] & usable[:, None, :] & (at_bid_ok | counter_ok)
    at_bid_ok &= z_ok
    counter_ok &= z_ok
    # the reference price never needs to exceed the largest bid that can be served at-bid in its cell
    ref_top = np.where(at_bid_ok, p_bid[:, None, None], 0.0).max(axis=0) if len(bids) else np.zeros((0, 0))

    model = ModelDescription(name='evmarket_{}u_{}t_{}r'.format(len(bids), station.num_slots, station.num_rates))
    binary = VariableKind.binary

    def bit(flag):
        return 1 if flag else 0

    for i in users:
        model.add_variable(a_name(i), binary, 0, bit(usable[i].any()))
        for r in rates:
            model.add_variable(y_name(i, r), binary, 0, bit(usable[i, r]))
        for t in slots:
            model.add_variable(zs_name(i, t), binary, 0, bit(z_ok[i, t].any()))
            model.add_variable(ze_name(i, t), binary, 0, bit(z_ok[i, t].any()))
            for r in rates:
                model.add_variable(z_name(i, t, r), binary, 0, bit(z_ok[i, t, r]))
                model.add_variable(xb_name(i, t, r), binary, 0, bit(at_bid_ok[i, t, r]))
                model.add_variable(xn_name(i, t, r), binary, 0, bit(counter_ok[i, t, r]))
    for i in users:
        for t in slots:
            q_top = max([E[r] for r in rates if z_ok[i, t, r]], default=0.0)
            model.add_variable(q_name(i, t), lower=0.0, upper=q_top)
            for r in rates:
                pn_top = min(p_high, counter_top[i, t, r]) if counter_ok[i, t, r] else 0.0
                pf_top = min(p_high, cap[r, t]) if z_ok[i, t, r] else 0.0
                model.add_variable(pn_name(i, t, r), lower=0.0, upper=pn_top)
                model.add_variable(pf_name(i, t, r), lower=0.0, upper=pf_top)
    for t in slots:
        for r in rates:
            pr_top = min(p_high, ref_top[t, r]) if len(bids) else 0.0
            model.add_variable(pr_name(t, r), lower=0.0, upper=pr_top)

    for i in users:
        for t in slots:
            for r in rates:
                model.objective[pf_name(i, t, r)] = E[r]
                model.objective[z_name(i, t, r)] = -E[r] * c[r, t]

    le, eq, ge = Sense.le, Sense.eq, Sense.ge
    for i, bid in enumerate(bids):
        row = {y_name(i, r): 1.0 for r in rates}
        row[a_name(i)] = -1.0
        model.add_constraint('eq2', row, eq, 0.0)

        for t in slots:
            row = {z_name(i, t, r): 1.0 for r in rates}
            row[a_name(i)] = -float(avail[i, t])
            model.add_constraint('eq3', row, le, 0.0)

        model.add_constraint('eq4', {zs_name(i, t): 1.0 for t in slots}, le, 1.0)
        model.add_constraint('eq4', {ze_name(i, t): 1.0 for t in slots}, le, 1.0)
        for t in slots:
            for r in rates:
                # z at t-1 and t+1 are zero off the horizon
                row = {zs_name(i, t): 1.0, z_name(i, t, r): -1.0}
                if t > 0:
                    row[z_name(i, t - 1, r)] = 1.0
                model.add_constraint('eq5', row, ge, 0.0)
                row = {ze_name(i, t): 1.0, z_name(i, t, r): -1.0}
                if t < station.num_slots - 1:
                    row[z_name(i, t + 1, r)] = 1.0
                model.add_constraint('eq6', row, ge, 0.0)

        energy = {q_name(i, t): 1.0 for t in slots}
        model.add_constraint('eq7', dict(energy, **{a_name(i): -bid.q_min}), ge, 0.0)
        model.add_constraint('eq7', dict(energy, **{a_name(i): -bid.q_max}), le, 0.0)

        for t in slots:
            row = {q_name(i, t): 1.0}
            for r in rates:
                row[z_name(i, t, r)] = -E[r]
            model.add_constraint('eq10', row, eq, 0.0)

        for t in slots:
            for r in rates:
                model.add_constraint('eq11', {z_name(i, t, r): 1.0, y_name(i, r): -1.0}, le, 0.0)

        for r in rates:
            if not usable[i, r]:
                continue
            n_min, n_max = counts[i][r]
            row = {z_name(i, t, r): 1.0 for t in slots}
            model.add_constraint('aux', dict(row, **{y_name(i, r): -float(n_max)}), le, 0.0)
            if n_min > 0:
                model.add_constraint('aux', dict(row, **{y_name(i, r): -float(n_min)}), ge, 0.0)

    for t in slots:
        model.add_constraint('eq8', {q_name(i, t): 1.0 for i in users}, le, station.slot_capacity[t])
        for r in rates:
            model.add_constraint('eq9', {z_name(i, t, r): 1.0 for i in users}, le,
                                 station.rates[r].charger_count)

    for i, bid in enumerate(bids):
        for t in slots:
            for r in rates:
                z, xb, xn = z_name(i, t, r), xb_name(i, t, r), xn_name(i, t, r)
                pn, pf, pr = pn_name(i, t, r), pf_name(i, t, r), pr_name(t, r)
                big_m = float(ref_top[t, r])
                model.add_constraint('eq12', {xb: 1.0, xn: 1.0, z: -1.0}, eq, 0.0)
                model.add_constraint('eq12b', {pn: 1.0, xn: -float(counter_top[i, t, r])}, le, 0.0)
                model.add_constraint('eq13', {pf: 1.0, xb: -bid.bid_price, pn: -1.0}, eq, 0.0)
                model.add_constraint('eq14', {pf: 1.0, z: -floor[r, t]}, ge, 0.0)
                model.add_constraint('eq15', {pf: 1.0, z: -cap[r, t]}, le, 0.0)
                model.add_constraint('eq16', {pr: 1.0, xb: -bid.bid_price}, ge, 0.0)
                model.add_constraint('eq17', {pn: 1.0, pr: -1.0, xn: -big_m}, ge, -big_m)

    share = {}
    for i in users:
        for t in slots:
            for r in rates:
                share[xb_name(i, t, r)] = 1.0
                share[z_name(i, t, r)] = -policy.gamma
    model.add_constraint('eq18', share, ge, 0.0, name='protection')

    n_bin, n_cont = model.counts()
    n_fixed = sum(1 for v in model.variables if v.is_binary and v.upper < 1.0)
    logger.debug('built %s: %d binary (%d fixed at 0), %d continuous, %d rows', model.name, n_bin, n_fixed,
                 n_cont, len(model.constraints))
    return model
