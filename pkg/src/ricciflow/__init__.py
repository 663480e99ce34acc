"""Spectral simulator and verification harness for the normalized Ricci flow
on unit-volume surfaces in conformal gauge."""

from .geometry import (FlatTorus, RoundSphere, ScalarField, build_surface,
                       constant_field, zero_field, laplacian, grad_norm_sq,
                       integrate, lp_norm, h1_norm, sup_norm, dealias,
                       resample, save_field_csv, load_field_csv,
                       save_field_binary, load_field_binary, TORUS, SPHERE)
from .flow import (FlowConfig, Trajectory, BlowUpError, eval_rhs, step_rk4,
                   step_imex1, evolve, normalize_volume, conformal_volume,
                   cfl_cap, RK4, IMEX1)
from .diagnostics import (DiagnosticsRecord, volume, liouville_energy,
                          gauss_curvature, gauss_bonnet_check,
                          curvature_deviation, diagnose,
                          energy_identity_residual, weak_form_residual,
                          make_test_function, diagnostics_to_csv, subsample)
from .estimates import (EstimateReport, negative_part, F_of, psi_of,
                        abc_integrals, delta_factors, contraction_report,
                        gn_ratio, tm_ratio, exp_moment, report_to_text,
                        append_report_csv)
from .experiments import (ExperimentSpec, FitResult, random_initial_data,
                          uniqueness_experiment,
                          convergence_to_constant_curvature,
                          manufactured_convergence, inequality_campaign,
                          restart_consistency, fitted_sobolev_constant,
                          fit_line, fit_loglog)

__version__ = "0.1.0"
