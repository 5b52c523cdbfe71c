"""Approximate policy iteration with lookahead, rollouts and linear function approximation."""
from .algorithms import (IterationRecord, IterationTrace, RunConfig, SampleSpec, realize_sample_sets,
                         run, run_gd_api, run_ls_api, run_modified_ls_api, select_lookahead_policy)
from .bounds import (AssumptionReport, BoundCurve, BoundParams, asymptotic_component, audit_trace,
                     check_assumptions, params_gd, params_ls, params_modified_ls,
                     proposition1_curve, proposition3_jk_bound)
from .counterexample import (CounterexampleSpec, build_counterexample_mdp, counterexample_features,
                             theta_recursion, verify_dichotomy)
from .errors import (AssumptionViolation, ConfigError, GradientDivergenceError, InvalidInputError,
                     NumericalError, PreconditionViolated)
from .experiments import (ExperimentSpec, RandomMdpParams, generate_random_mdp, load_spec,
                          parse_spec, run_experiment)
from .features import (FeatureSystem, SampleSet, compute_delta_app, compute_delta_fv,
                       gradient_descent_fit, least_squares_fit, projector_matrix,
                       spectral_quantities, stepsize_threshold)
from .mdp import (Mdp, apply_T, apply_T_mu, brute_force_optimal, evaluate_policy_exact,
                  greedy_policy, lookahead, rollout_return, solve_optimal)

__version__ = "0.1.0"
