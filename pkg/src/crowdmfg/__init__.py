"""Hard-congestion crowd motion on staggered grids.

Crowds that maximize a terminal reward under the density cap rho <= 1,
approached from three sides that must agree: a fixed-point solver for the
game equilibrium (penalized and hard-constrained), minimizing-movement
gradient flows in Wasserstein space, and a space-time convex formulation
solved by a primal-dual method.  The scenarios module packages reference
configurations whose solutions are known in closed form, with every
structural claim turned into a measured residual.
"""

from .grids import (EPS_K, EPS_SAT, MASS_TOL, DensityField, FaceVelocityField,
                    Grid, ScalarField, SpaceTimeField, TimeGrid, build_grid,
                    cell_inner, divergence, face_inner, gradient, integrate,
                    l1_distance)
from .transport import CflReport, advect_step, solve_continuity, weak_residual
from .hjb import (HjbProblem, hjb_backward, hjb_residual, hopf_lax,
                  optimal_feedback)
from .projection import (ProjectionResult, cone_violation, project_velocity,
                         wasserstein_project_K_1d)
from .quantiles import (density_to_quantiles, pava, project_quantiles_capped,
                        quantile_levels, quantiles_to_density)
from .gradient_flow import (JkoConfig, QuantileFunction, flow_energy,
                            geodesic_1d, jko_step, porous_media_reference,
                            run_gradient_flow, w2_distance_1d)
from .mfg import (CongestionPenalty, MfgSolution, ResidualReport,
                  equilibrium_residual, exploitability, fictitious_pressure,
                  realized_payoff, solve_mfg_constrained, solve_mfg_penalized,
                  trajectory_best_response, transformed_system_residual,
                  uniqueness_monitor)
from .variational import (BbIterate, ChiLink, OptimalityResiduals,
                          StaticReduction, StaticReductionPair,
                          check_optimality_conditions, chi_from_mfg,
                          effort_consistency, kinetic_density, kinetic_energy,
                          solve_bb_constrained, static_reduction_oracle_1d)
from .scenarios import (ConfigError, NothingMovesScenario, ScenarioConfig,
                        build_initial_density, build_nothing_moves,
                        build_terminal, find_level, load_config,
                        negative_control_drift, recompute_residuals,
                        region_collar, run_scenario, verify_nothing_moves)

__version__ = "0.1.0"

__all__ = [
    "EPS_K", "EPS_SAT", "MASS_TOL",
    "Grid", "TimeGrid", "ScalarField", "DensityField", "FaceVelocityField",
    "SpaceTimeField", "build_grid", "gradient", "divergence", "integrate",
    "cell_inner", "face_inner", "l1_distance",
    "CflReport", "advect_step", "solve_continuity", "weak_residual",
    "HjbProblem", "hjb_backward", "hjb_residual", "hopf_lax",
    "optimal_feedback",
    "ProjectionResult", "project_velocity", "cone_violation",
    "wasserstein_project_K_1d",
    "density_to_quantiles", "quantiles_to_density", "pava",
    "project_quantiles_capped", "quantile_levels",
    "JkoConfig", "QuantileFunction", "jko_step", "run_gradient_flow",
    "flow_energy", "porous_media_reference", "w2_distance_1d", "geodesic_1d",
    "CongestionPenalty", "MfgSolution", "ResidualReport",
    "solve_mfg_penalized", "solve_mfg_constrained", "equilibrium_residual",
    "exploitability", "realized_payoff", "trajectory_best_response",
    "fictitious_pressure", "transformed_system_residual", "uniqueness_monitor",
    "BbIterate", "ChiLink", "OptimalityResiduals", "StaticReduction",
    "StaticReductionPair", "solve_bb_constrained",
    "check_optimality_conditions", "chi_from_mfg", "effort_consistency",
    "kinetic_density", "kinetic_energy", "static_reduction_oracle_1d",
    "ConfigError", "ScenarioConfig", "NothingMovesScenario", "load_config",
    "run_scenario", "find_level", "build_nothing_moves", "build_terminal",
    "build_initial_density", "verify_nothing_moves", "negative_control_drift",
    "region_collar", "recompute_residuals",
]
