//! Spectral and geometric indices of collision and parabolic motions of the
//! α-homogeneous n-body problem.
//!
//! The pipeline runs: a [`MassSystem`] and its [`Chart`], a central
//! configuration, a McGehee trajectory, the coefficient matrices of the
//! second variation, and finally two independent index engines: a finite
//! element Morse index ([`morse`]) and a Maslov index of the stable
//! Lagrangian path ([`maslov`]).
//!
//! Everything past the ingestion boundary works in chart coordinates, where
//! the mass inner product is the Euclidean one.

// `!(x > 0.0)` style checks are deliberate: NaN must be rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config_space;
pub mod error;
pub mod forms;
pub mod inertia;
pub mod linalg;
pub mod maslov;
pub mod mcgehee;
pub mod morse;
pub mod ode;
pub mod potential;
pub mod symplectic;

pub use config_space::{build_chart, mass_inner, tensor_m, Chart, MassSystem};
pub use error::{Error, Result};
pub use forms::{
    assemble_coefficients, assemble_hamiltonian, compute_sigma0, limit_spectra, CoefficientPath,
    HamiltonianPath, LimitSpectra,
};
pub use maslov::{geometric_index, maslov_index, sigma_path_maslov, Crossing, MaslovResult};
pub use mcgehee::{Constants, Mode, Source, TrajectoryData};
pub use morse::{
    relative_morse_index, sigma_spectral_flow, spectral_index, verify_index_theorem,
    Discretization, MorseResult,
};
pub use potential::{check_bs, find_central_configuration, BsReport, CentralConfiguration};
pub use symplectic::{
    bnd_check, gap_distance, hyperbolic_splitting, propagate_stable, symplectic_similarity,
    HyperbolicSplitting, LagrangianFrame,
};
