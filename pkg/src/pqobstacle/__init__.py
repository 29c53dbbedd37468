"""Obstacle problems for convex (p,q)-growth energies on structured P1
meshes, certified by convex duality."""

from .duality import (DualCertificate, check_divergence_sign, check_vi, dual_field,
                      dual_objective, duality_gap, pairing)
from .errors import ConvergenceError, ConvexityError
from .integrand import (ApproxSequenceEntry, IntegrandSpec, anisotropic_log_integrand,
                        approx_seq, bregman_gap, calibrate_h2_constant,
                        calibrate_vi_constant, check_convexity, check_growth,
                        check_h2_gap, check_vi_lemma_bounds, conjugate,
                        conjugate_with_argmax, eval_integrand, fenchel_young_residual,
                        grad_integrand, h3_constant, moreau_power_integrand,
                        power_integrand, require_convexity, tabulated_integrand,
                        truncated_power_integrand, vp_map)
from .mesh import (Mesh, cell_gradient, hat_pairing, integrate_cells, interpolate,
                   make_mesh, shifted_difference)
from .primal import (ObstacleProblem, Solution, SolveOptions, energy, energy_gradient,
                     normalize_datum, oracle_solve, project, solve)
from .regularity import (RegularityReport, besov_fit, difference_quotient_table,
                         embedding_check, exponent_iteration, harmonic_extension,
                         extension_norm_check, lavrentiev_probe, pbar,
                         predicted_integrability)
from .sweep import (SweepRecord, SweepReport, check_dual_bounds,
                    check_energy_convergence, check_limit_vi, default_competitors,
                    run_sweep)

__version__ = "0.1.0"
