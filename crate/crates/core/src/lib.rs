//! Reflector-style design of refractors into negative-index media.
//!
//! A point source in a medium with `n1 > 0` emits into a cap of directions; a
//! lens made of a left-handed material (`n2 < 0`) must redirect the light so the
//! far field matches a prescribed energy distribution. With Fresnel losses
//! included, the surface is an envelope of hyperboloids (`kappa < -1`) or
//! ellipsoids (`-1 < kappa < 0`), found here by a monotone coordinate sweep
//! on the focal parameters.

// `!(a < b)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod optics;
pub mod refractor;
pub mod scalar;
pub mod solver;
pub mod sphere;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use optics::{
    check_admissible, fresnel_bound, fresnel_psi, fresnel_transmission, phi, snell_refract,
    AdmissibleSetup, FresnelBounds, MarginReport, MediumPair, Regime,
};
pub use refractor::{
    envelope_radius, quadric_normal, quadric_radius, trace_cells, CellAssignment, EnvelopePoint,
    Normalization, RefractorSolution, TargetMeasure,
};
pub use scalar::{csum, CompensatedSum, Scalar};
pub use verify::ma::{
    build_ma_workspace, ma_jacobian_check, normal_from_graph, MaConfig, MaReport, MaWorkspace, QuadricField,
    RadialField,
};
pub use verify::{energy_audit, raytrace_verify, AuditConfig, AuditReport, TraceReport};
pub use transport::{
    check_energy_budget, discretize_target, energy_budget, refractor_measure, total_energy, BudgetReport,
    Discretization, EnergyVector, SourceDensity,
};
pub use solver::{normalize_solution, solve_discrete, Problem, SolveOutcome, SolveReport, SolverConfig};
pub use sphere::{build_grid, lift_from_plane, project_to_plane, Direction, QuadratureGrid, SphericalCap, Vec3};

pub type Direction64 = Direction<f64>;
pub type Direction32 = Direction<f32>;
pub type SphericalCap64 = SphericalCap<f64>;
pub type SphericalCap32 = SphericalCap<f32>;
pub type QuadratureGrid64 = QuadratureGrid<f64>;
pub type QuadratureGrid32 = QuadratureGrid<f32>;
pub type MediumPair64 = MediumPair<f64>;
pub type MediumPair32 = MediumPair<f32>;
pub type TargetMeasure64 = TargetMeasure<f64>;
pub type TargetMeasure32 = TargetMeasure<f32>;
pub type RefractorSolution64 = RefractorSolution<f64>;
pub type RefractorSolution32 = RefractorSolution<f32>;
pub type SourceDensity64 = SourceDensity<f64>;
pub type SourceDensity32 = SourceDensity<f32>;
