"""Simulation and verification of fluctuation identities for Levy processes."""

from .levy_model import (Family, LadderClass, LevyModel, QuadConfig, classify_ladder_mean,
                         closed_form_ladder, levy_tail, make_model, mean_increment, negate)
from .ladder import LadderData, LadderSource
from .paths import (NO_ENTRANCE, NOT_SETTLED, PassageRecord, PathSkeleton, first_exit_nonpositive,
                    first_passage_above, last_exit_below, reverse_at, shift_at_entrance, simulate)
from .fluctuation import (RhoLaw, build_rho, continuous_crossing_prob, entrance_pairs, estimate_ladder,
                          green_duality_check, mass_of_m, overshoot_limit_check, potential_identity_check,
                          sample_conditioned, silverstein_check)
from .stationary import (TwoSidedPath, convergence_from_minus_infinity, coupling_epsilon, coupling_exact,
                         crossing_stationarity_check, duquesne_check, reversal_check, sample_stationary,
                         spatial_stationarity_check, stationary_ensemble, williams_check)
from .lamperti import (ClockSpec, PssmpSample, entrance_convergence_check, entrance_sample,
                       exp_functional, exp_functional_mean_check, inverse_clock, pssmp_from_positive,
                       self_similarity_check, time_change)
from .stats import ks_distance, w1_distance
from .report import CheckReport, Statistic
from .config import ExperimentConfig, load_config, parse_config
from .experiments import EXPERIMENTS, ExperimentReport, run_experiment

__version__ = "0.1.0"
