"""Entropy-based analysis and design of importance sampling proposals.

Submodules
----------
measures     finite distributions, samplers, statistics, weighted ensembles
entropy      relative and Renyi entropies, exact and Monte Carlo
gibbs        Gibbs families, moment matching and entropy projections
smc          tempered sequential Monte Carlo for Gibbs proposals
bounds       required sample size bounds and the three-point example
wlc          worst-case log-cost oracles and strip targets
adaptive     cross-entropy adaptive importance sampling
estimators   scikit-learn style wrappers
cli          experiment runner
"""

from .adaptive import (ConfidenceMomentSet, CrossEntropyResult, CrossEntropyState, ce_step,
                       ce_step_confidence, run_cross_entropy)
from .bounds import (BoundReport, DeviationProbeConfig, LikelihoodRatio, ThreePointParams,
                     bound_report, c_constant, empirical_critical_n, slack_r, three_point_report)
from .entropy import (EntropyReport, chain_rule_decompose, entropy_report_finite, entropy_report_mc,
                      relative_entropy_finite, relative_entropy_mc, renyi_entropy_finite,
                      variance_from_renyi2)
from .estimators import CrossEntropyImportanceSampler, GibbsProjection
from .exceptions import (AllWeightsDegenerate, DegenerateReference, DegenerateTilt, DomainError,
                         EmptyFeasibleSet, EntropicISError, GridTooNarrow, InfeasibleMoment,
                         MaxIterations, MismatchedSupport, MoveKernelRejectionStall,
                         NumericalFailure, ProfileIncomplete, QuadratureFailure, SingularHessian,
                         WeightDegeneracyWarning)
from .gibbs import (ConvexMomentSet, GibbsModel, log_partition_finite, moment_map,
                    pythagorean_check, solve_convex_constraint, solve_linear_family)
from .measures import (CategoricalModel, FiniteDistribution, GaussianModel, SampleableModel,
                       Statistic, UniformModel, WeightedEnsemble, effective_sample_size,
                       empirical_mean, normalize)
from .smc import SmcConfig, SmcResult, run_smc
from .wlc import (StripTarget, WlcProblem, WlcSolution, build_strip_target,
                  proposal_lower_bound_check, two_atom_argmin, two_atom_minimax, wlc_argmin_grid,
                  wlc_value_grid)

__version__ = "0.1.0"
