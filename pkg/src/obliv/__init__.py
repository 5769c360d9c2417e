"""Recovery of structured signals (rank-one tensors, sparse principal
components) from oblivious heavy-tailed noise and adversarial corruptions,
via Huber loss minimization over pseudo-moment sets."""

__version__ = "0.1.0"

from .tensor import (Tensor, huber_grad, huber_loss, huber_second_order_gap,
                     huber_value, rank_one, tensor_diff_norm_check,
                     upper_simplex, upper_simplex_indices, upper_simplex_size)
from .noise import (BoundedUniform, Cauchy, CorruptionSpec, HeavyMixture,
                    RademacherScaled, ZeroOnSet, alpha_at, corrupt,
                    corruption_from_dict, corruption_to_dict, noise_from_dict,
                    noise_to_dict, rng_from_seed, sample_noise)
from .moments import (ConstraintSystem, MonomialBasis, ProjectionReport,
                      PseudoMoments, compile_sparse_pca, compile_tensor_pca,
                      compile_unit_ball, dykstra_project, extract_signal,
                      moment_matrix, monomial_basis, project_psd,
                      system_to_json)
from .solver import (SolveReport, SolverFailure, SolverParams,
                     exact_hypercube_estimate, maximize_linear, minimize_huber)
from .recovery import (KINDS, ExperimentResult, Graph, PipelineParams,
                       UnroundableError, clique_extract, clique_reduce,
                       correlation, matrix_from_upper_triangle,
                       planted_clique_gen, round_even, round_odd,
                       run_pipeline, symmetric_from_simplex)
from .complexity import (ComplexityReport, expectation_from_tails,
                         gaussian_complexity_mc, gradient_sup_bound_check,
                         rademacher_complexity_mc, sparse_complexity_bound_mc,
                         sparse_quadratic_certificate, submatrix_spectral_max,
                         sudakov_ln_net_bound)
from .harness import (ConfigError, ExperimentConfig, aggregate_rows,
                      config_from_dict, config_to_dict, run_experiment,
                      run_single_trial)
from .cli import cli_dispatch, main
