//! Asymptotics of singularly perturbed, weakly nonlinear relaxation transport
//! systems in the critical case.
//!
//! The crate builds the surge/boundary-function expansion of
//! `eps^2 (U_t + D U_x) = L U + eps^2 F(U)`, solves the full stiff system with
//! a reference scheme, and measures how fast the remainder shrinks with `eps`.

pub mod error;
pub mod expansion;
pub mod harness;
pub mod model;
pub mod principles;
pub mod refsolver;
pub mod spectral;

pub use error::{Error, Result};
pub use expansion::{
    assemble_un, build_boundary_terms, build_expansion, build_surge_terms, BoundaryTerms,
    ExpansionOptions, ExpansionSet, Profile,
};
pub use harness::{
    defect, emit_report, error_sweep, fit_slope, theorem_check, verify, ConvergenceReport,
    SlopeFit, SweepConfig, TheoremVerdict,
};
pub use model::{
    canonical_problem, load_problem, sample_initial, validate_initial_decay, DecayCertificate,
    GaussianBump, GridField, ModeProfile, Nonlinearity, ProblemSpec, UniformGrid,
};
pub use principles::{
    characteristic_triangle, lemma1_comparison, lemma2_positivity, lemma3_barrier,
    lemma5_nonlinear_bound, run_suites, SuiteConfig, Triangle, Verdict,
};
pub use refsolver::{
    self_convergence, solve_reference, Scheme, SolverOptions, SpaceTimeField,
};
pub use spectral::{
    check_conditions, eigendecompose, zero_mode, ConditionReport, KernelCoefficients,
    SpectralData,
};
