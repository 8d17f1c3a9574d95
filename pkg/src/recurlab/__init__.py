"""Quantitative recurrence lab for lattice random walks."""

__version__ = "0.1.0"

from recurlab._backend import NAME as BACKEND
from recurlab.errors import RecurLabError
from recurlab.estimators import (EstimatorResult, Form, box_limit_value, corollary3_weighted,
                                 delta_statistic, limit_value, liminf_report)
from recurlab.hits import (TargetMode, TargetSpec, alpha_window_hit, lattice_hit,
                           lattice_representative, scaled_box_hit)
from recurlab.oracle import (ProbEstimate, be_box_prob, exact_binomial_prob, exact_simple1d_point,
                             exact_simple2d_point, expected_hits, lclt_lattice_asym,
                             lclt_simple1d_asym, lclt_simple2d_asym, phi_n)
from recurlab.replication import (ExperimentConfig, ReplicaAggregate, chebyshev_rate_check,
                                  delta_distribution, run_experiment)
from recurlab.schedule import Schedule, ScheduleSpec, build_schedule, validate_growth
from recurlab.stepdist import (StepDistribution, gaussian, lattice_atoms, moments, simple_walk,
                               uniform_box, uniform_mixture, whitening)
from recurlab.streams import RngStream
from recurlab.walker import run_checkpoints, run_min_tracker, run_weighted_box
