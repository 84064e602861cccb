//! Norms, convergence parameter, rescaling, truncation levels, diagnostics.

pub mod convergence;
pub mod diagnostics;
pub mod linalg;
pub mod truncation;

pub use convergence::{
    asymptotic_r, convergence_r, convergence_r_with_norms, f0_norm_exact, f2_norm_closed_form, mu_closed_form, rescale,
    rescale_with_norms, system_norms, ConvergenceReport, Rescaled, SystemNorms,
};
pub use diagnostics::{
    ampere_diagnosis, column_major_permutation, complexity_accounting, vectorization_invariance_check, AmpereDiagnosis,
    ComplexityReport, InvarianceReport,
};
pub use linalg::{lognorm, spectral_norm, EigenOptions};
pub use truncation::{plan_truncation, PlanInputs, PlanOverrides, TruncationPlan};
