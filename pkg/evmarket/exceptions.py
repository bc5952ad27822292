# -*- coding: utf-8 -*-
"""
Exception types raised across evmarket.
"""


class EVMarketError(Exception):
    """
        Base class for every error evmarket raises on purpose.
    """


class InvalidInstanceError(EVMarketError, ValueError):
    """
        A ProblemInstance failed validation. ``violations`` holds the messages.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__('Invalid instance: ' + '; '.join(self.violations))


class NonIntegralSolutionError(EVMarketError):
    """
        A binary variable in a solver assignment is not within tolerance of 0 or 1.
    """

    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__('non-integral solution: {} = {!r}'.format(name, value))


class SolverLimitError(EVMarketError):
    """
        The backend stopped on a limit before proving optimality.
    """

    def __init__(self, solution):
        self.solution = solution
        super().__init__('solver limit reached ({})'.format(solution.message))


class VerificationError(EVMarketError):
    """
        An offer failed independent verification.
    """

    def __init__(self, report):
        self.report = report
        super().__init__('offer failed verification with {} violation(s): {}'.format(
            len(report), report.summary()))


class OracleBudgetError(EVMarketError, ValueError):
    """
        The instance has more z-cells than the exhaustive oracle enumerates.
    """


class MissingPreferenceError(EVMarketError, KeyError):
    """
        An operator-accepted user has no preference entry.
    """


class ConfigError(EVMarketError, ValueError):
    """
        Malformed, conflicting or unknown configuration.
    """


class UnknownBackendError(ConfigError):
    """
        EVMARKET_SOLVER (or an explicit backend name) is not registered.
    """


class SolverFailedError(EVMarketError):
    """
        The backend returned no usable point for a model that is always
        feasible (every user rejected).
    """

    def __init__(self, solution):
        self.solution = solution
        super().__init__('solver returned {} ({})'.format(solution.status.value, solution.message))
