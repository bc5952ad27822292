# -*- coding: utf-8 -*-
"""
Exact MILP backends behind a small adapter interface.

A backend converts a ModelDescription into its own data structure and solves
it. The shipped adapter drives HiGHS through ``scipy.optimize.milp``; the
environment variable ``EVMARKET_SOLVER`` picks the adapter by name.
"""

import abc
import enum
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from evmarket.exceptions import UnknownBackendError
from evmarket.model import ObjectiveSense, Sense

logger = logging.getLogger(__name__)

SOLVER_ENV_VAR = 'EVMARKET_SOLVER'
DEFAULT_BACKEND = 'highs'


class SolutionStatus(enum.Enum):
    optimal = 'optimal'
    infeasible = 'infeasible'
    limit_reached = 'limit-reached'
    failed = 'failed'


@dataclass(frozen=True)
class SolverOptions:
    """
        Options shared by every backend.

        Attributes
        ----------
        time_limit : float
            Wall-clock limit in seconds.
        threads : int or None
            Worker threads, when the backend exposes them.
        feasibility_tolerance : float
            Tolerance for post-solve feasibility and integrality checks.
        seed : int or None
            Backend random seed for tie-breaking, when the backend exposes one.
        mip_rel_gap : float
            Requested relative optimality gap.
    """
    time_limit: float = 60.0
    threads: Optional[int] = None
    feasibility_tolerance: float = 1e-6
    seed: Optional[int] = None
    mip_rel_gap: float = 0.0

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError('time_limit must be > 0, got {}'.format(self.time_limit))
        if self.threads is not None and self.threads < 1:
            raise ValueError('threads must be >= 1')
        if self.feasibility_tolerance <= 0:
            raise ValueError('feasibility_tolerance must be > 0')


@dataclass(frozen=True)
class Solution:
    """
        Result of one solve. ``assignment`` maps variable names to values and is
        empty when the backend returned no point.
    """
    status: SolutionStatus
    objective: Optional[float] = None
    assignment: Dict[str, float] = field(default_factory=dict)
    message: str = ''
    runtime: float = 0.0
    backend: str = ''

    @property
    def is_optimal(self):
        return self.status is SolutionStatus.optimal

    @property
    def has_point(self):
        return len(self.assignment) > 0


class SolverInterface(abc.ABC):
    """
        A MILP backend.
    """
    name = ''

    def __init__(self, options=None):
        self.options = options or SolverOptions()

    @abc.abstractmethod
    def convert(self, model):
        """
            Convert a ModelDescription to the backend's data structure.
        """

    @abc.abstractmethod
    def solve(self, model):
        """
            Solve a ModelDescription and return a Solution.
        """


class HighsSolver(SolverInterface):
    """
        HiGHS branch-and-cut via ``scipy.optimize.milp``.

        scipy does not forward thread counts or random seeds to HiGHS, so
        those options are accepted and ignored; HiGHS itself is deterministic.
    """
    name = 'highs'

    _status_map = {0: SolutionStatus.optimal,
                   1: SolutionStatus.limit_reached,
                   2: SolutionStatus.infeasible}

    def convert(self, model):
        """
            Returns
            -------
            dict
                Keyword arguments for ``scipy.optimize.milp``.
        """
        index = model.index()
        n = len(model.variables)
        c = np.zeros(n)
        for name, coef in model.objective.items():
            c[index[name]] = coef
        if model.objective_sense is ObjectiveSense.maximize:
            c = -c

        integrality = np.array([1 if v.is_binary else 0 for v in model.variables], dtype=int)
        bounds = Bounds(np.array([v.lower for v in model.variables]),
                        np.array([v.upper for v in model.variables]))

        rows, cols, vals = [], [], []
        lower = np.empty(len(model.constraints))
        upper = np.empty(len(model.constraints))
        for k, row in enumerate(model.constraints):
            for name, coef in row.coefficients.items():
                rows.append(k)
                cols.append(index[name])
                vals.append(coef)
            if row.sense is Sense.le:
                lower[k], upper[k] = -np.inf, row.rhs
            elif row.sense is Sense.ge:
                lower[k], upper[k] = row.rhs, np.inf
            else:
                lower[k], upper[k] = row.rhs, row.rhs

        kwargs = dict(c=c, integrality=integrality, bounds=bounds,
                      options={'time_limit': float(self.options.time_limit),
                               'mip_rel_gap': float(self.options.mip_rel_gap),
                               'presolve': True,
                               'disp': False})
        if model.constraints:
            A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(model.constraints), n))
            kwargs['constraints'] = LinearConstraint(A, lower, upper)
        return kwargs

    def solve(self, model):
        if self.options.threads is not None or self.options.seed is not None:
            logger.debug('%s backend ignores threads/seed options', self.name)
        kwargs = self.convert(model)
        start = time.perf_counter()
        res = milp(**kwargs)
        runtime = time.perf_counter() - start

        status = self._status_map.get(res.status, SolutionStatus.failed)
        assignment = {}
        objective = None
        if res.x is not None:
            assignment = {v.name: float(x) for v, x in zip(model.variables, res.x)}
            objective = model.objective_value(assignment)
        elif status is SolutionStatus.optimal:
            status = SolutionStatus.failed

        logger.debug('%s finished %s in %.3fs: %s (objective %s)', self.name, model.name, runtime,
                     status.value, objective)
        if status is SolutionStatus.optimal:
            bad = model.infeasibilities(_snap_binaries(model, assignment, self.options.feasibility_tolerance),
                                        tolerance=self.options.feasibility_tolerance * 10)
            if bad:
                logger.warning('%s reported optimal but %d row(s) exceed tolerance, e.g. %s',
                               self.name, len(bad), bad[:3])
        return Solution(status, objective, assignment, str(res.message), runtime, self.name)


def _snap_binaries(model, assignment, tolerance):
    snapped = dict(assignment)
    for var in model.variables:
        if var.is_binary:
            x = snapped.get(var.name, 0.0)
            if abs(x - round(x)) <= tolerance:
                snapped[var.name] = float(round(x))
    return snapped


BACKENDS = {'highs': HighsSolver,
            'scipy': HighsSolver}


def get_solver(name=None, options=None):
    """
        Instantiate a backend by name, falling back to ``EVMARKET_SOLVER`` and
        then the default.

        Raises
        ------
        UnknownBackendError
            If the name is not registered.
    """
    if name is None:
        name = os.environ.get(SOLVER_ENV_VAR) or DEFAULT_BACKEND
    key = name.strip().lower()
    if key not in BACKENDS:
        raise UnknownBackendError('unknown solver backend {!r}; choose one of {}'.format(
            name, sorted(BACKENDS)))
    return BACKENDS[key](options)


def solve(model, options=None, backend=None):
    """
        Solve ``model`` with the selected backend.

        Parameters
        ----------
        model : ModelDescription

        options : SolverOptions, optional

        backend : str or SolverInterface, optional
            Backend name or instance; defaults to ``EVMARKET_SOLVER``.

        Returns
        -------
        Solution
    """
    if isinstance(backend, SolverInterface):
        solver = backend
    else:
        solver = get_solver(backend, options)
    return solver.solve(model)
