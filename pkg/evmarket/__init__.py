# -*- coding: utf-8 -*-

__version__ = '0.1.0'

__all__ = ['domain', 'model', 'solver', 'offers', 'oracle', 'response', 'metrics', 'scenarios']

from evmarket.domain import *
from evmarket.exceptions import *
from evmarket.model import build_model
from evmarket.solver import SolverOptions, solve
from evmarket.offers import OperatorOffer, UserOffer, extract_offer, verify_offer
from evmarket.oracle import exhaustive_oracle
from evmarket.response import UserPreference, decide, sample_preferences
from evmarket.metrics import aggregate, compute_metrics, gini
from evmarket.scenarios import ScenarioSpec, SweepSpec, generate_instance, run_scenario, run_sweep
