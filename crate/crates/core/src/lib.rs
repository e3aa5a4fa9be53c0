//! Numerical core for the simplified Ericksen-Leslie system of nematic liquid
//! crystal flow in two dimensions and its Ginzburg-Landau relaxation.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. With `std` enabled the periodic linear solves use FFTs; without it
//! they fall back to conjugate gradients on the same discrete operators.
//!
//! Layout:
//! - [`manifold`]: target manifolds (S² and orthonormal frames), nearest-point
//!   projection, cutoff profile and penalty gradient.
//! - [`grid`]: collocated fields and second-order difference operators.
//! - [`flow`]: the coupled time stepper, pressure solves and the stationary
//!   Ginzburg-Landau solver.
//! - [`diagnostics`]: energies, Ericksen stress, Hopf differential,
//!   concentration sets, Pohozaev residuals and defect measures.
//! - [`experiments`]: bubble generators, sweeps and the canned demos.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod experiments;
pub mod flow;
pub mod grid;
mod linsolve;
pub mod manifold;
#[cfg(feature = "std")]
mod spectral;


pub use diagnostics::{DefectEstimate, DiagnosticsReport, EnergyReport, TestFunction};
pub use flow::{FlowSolver, Scheme, SolverConfig, SolverError, State};
pub use grid::{BoundaryData, DirectorField, Domain, Field, Grid2D, Region, WallTrace};
pub use manifold::{CutoffProfile, ManifoldKind, ManifoldSpec};

pub(crate) mod prelude {
    pub use alloc::boxed::Box;
    pub use alloc::string::String;
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}
