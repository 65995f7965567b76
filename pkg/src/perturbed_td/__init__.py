"""Off-policy temporal-difference learning on perturbed finite MDPs."""

__version__ = "0.1.0"

from .errors import (CapabilityError, DivergenceError, NumericalError, PerturbedTDError,
                     ValidationError)
from .mdp import (Mdp, StochasticMatrix, as_stochastic, infinity_norm_diff, is_regular,
                  policy_weights, transition_under_policy, validate_stochastic)
from .exact import (bellman_apply, evaluate_policy_exact, greedy_policy, norm_condition_check,
                    stationary_distribution, theorem2_bound_check, value_iteration)
from .projection import (FeatureMatrix, ProjectedSystem, assemble_projected_system,
                         certificate_iteration_spectrum, certificate_positive_definite,
                         iterate_projected, project_value, solve_direct)
from .perturbation import PerturbationSpec, deviation_report, mixture_policy, perturb_transition
from .resource import (PAPER_R_BAR, PAPER_SPEC, ResourceSpec, StateIndex, build_mdp,
                       build_transition, enumerate_states, feature_matrix, reward_vector,
                       state_count, target_policy)
from .td import (TdConfig, TdRunResult, aggregate_runs, estimate_projected_system_mc,
                 flattening_ratio, run_algorithm1, run_many)
from .config import ExperimentConfig, load_config, parse_config
