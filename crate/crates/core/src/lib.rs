//! Pseudospectral simulator for gravity water waves in a rectangular tank
//! (Craig-Sulem-Zakharov surface formulation) together with a verification
//! harness for the exact identities the solver is supposed to satisfy:
//! energy conservation, a Pohozaev identity for the Dirichlet-to-Neumann
//! operator, a boundary-observability identity relating the contact-line
//! motion to the energy, and the observability inequality `B(T) >= H` for
//! band-limited initial data.
//!
//! The crate is organized around the pipeline
//! `grid -> dtn -> evolution -> identities -> observability`:
//!
//! * [`grid`]: cosine collocation on the tank cross-section, even/periodic
//!   extension, spectral differentiation and exact quadratures.
//! * [`dtn`]: harmonic extension of the surface potential under a flattening
//!   map, the Dirichlet-to-Neumann operator `G(eta)`, the trace fields
//!   `B, V`, and the Lannes shape derivative.
//! * [`evolution`]: RK4 time integration of the surface system and the
//!   conserved energy.
//! * [`identities`]: numerical evaluation of every exact identity, with
//!   residuals reported against a reference scale.
//! * [`observability`]: the band-limited initial-data experiment harness.

pub mod dtn;
pub mod evolution;
pub mod grid;
pub mod identities;
pub mod observability;
mod transforms;

pub use dtn::{
    dtn_apply, harmonic_extension, shape_derivative, surface_fields, DtnSolver, FlattenedPotential,
    SolverOptions, SurfaceFields,
};
pub use evolution::{energy, hamiltonian_gradient_check, integrate, rhs, step, SurfaceState, Trajectory};
pub use grid::{build_grid, Grid, SurfaceField, TankConfig, VolumeField};
pub use identities::{
    boundary_functional, corollary_bound, main_identity, pohozaev, theta_field, CorollaryReport,
    IdentityReport, PohozaevReport,
};
pub use observability::{
    make_initial_data, run_experiment, Envelope, InitialDataSpec, ObservabilityReport,
};

/// Errors surfaced by the solver and the verification harness.
#[derive(Debug, thiserror::Error)]
pub enum WaveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("flattening map degenerates: min dz(rho) = {min_jac:.3e} (requires eta >= -h/2)")]
    Diffeomorphism { min_jac: f64 },
    #[error(
        "elliptic solver did not reach tolerance {tol:.1e}: residual {residual:.3e} after {iterations} iterations"
    )]
    EllipticDiverged {
        residual: f64,
        iterations: usize,
        tol: f64,
    },
    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },
    #[error("trajectory diagnostics incomplete: {0}")]
    MissingDiagnostics(String),
    #[error("initial data rejected: {0}")]
    InitialData(String),
}

pub type Result<T> = std::result::Result<T, WaveError>;
