//! Finite-element simulator for a thermodynamically consistent coupling of
//! temperature, displacement, and an internal phase/damage variable.
//!
//! The solver advances a fully implicit time discretization whose discrete
//! solutions provably satisfy an entropy inequality, a total energy
//! inequality, and (in the irreversible mode) an energy-dissipation
//! inequality for the internal variable; the [`verify`] module re-evaluates
//! every one of those statements on each trajectory and certifies them to
//! floating-point/solver tolerance.
//!
//! Module map:
//! - [`material`] — constitutive laws: conductivity and truncations, the
//!   coefficient functions a(χ), b(χ), the mixing potential W = β̂ + γ̂, and
//!   the Yosida regularization of the rate constraint;
//! - [`mesh`] / [`assembly`] — simplicial meshes (d ∈ {1, 2}) and the
//!   discrete operators (mass, weighted elasticity/viscosity, thermal
//!   coupling, nonlinear heat operator, p-Laplacian);
//! - [`chi`] — the per-step internal-variable inclusion, solved as a convex
//!   minimization by projected semismooth Newton with exact nodal bounds;
//! - [`stepper`] — the coupled implicit step (staggered fixed point with
//!   truncation-level doubling) and the outer time loop;
//! - [`verify`] — inequality checks, constraint checks, norm monitors;
//! - [`interp`] / [`studies`] — time interpolants and the refinement,
//!   Laplacian-limit, regularization, and manufactured-solution studies;
//! - [`config`] / [`output`] — TOML run configuration with exhaustive
//!   validation, and plain-text trajectory/report persistence.

pub mod assembly;
pub mod chi;
pub mod config;
pub mod error;
pub mod interp;
pub mod material;
pub mod mesh;
pub mod output;
pub mod stepper;
pub mod studies;
pub mod verify;

pub use error::{Result, SimError};
pub use material::{MaterialParams, PotentialW};
pub use mesh::Mesh;
pub use stepper::{run_simulation, State, Trajectory};
pub use verify::{verify_trajectory, VerificationReport};
