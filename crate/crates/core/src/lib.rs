//! Certified inner estimates of the domain of attraction of equilibria of
//! non-polynomial autonomous systems.
//!
//! The pipeline has four stages:
//!
//! 1. [`approx`] encloses each transcendental term `φ(x)` in an uncertain
//!    polynomial `p(x) + u·x^γ` with `|u| ≤ b`, valid on a working box.
//! 2. [`certify::substitute`] turns the system into an uncertain polynomial
//!    system and [`certify::vertex_systems`] enumerates its extreme members.
//! 3. [`certify`] runs the Lyapunov workflows (fixed-`V` level bisection,
//!    numeric upper bound with witness, alternating `V`/multiplier search),
//!    compiling every sum-of-squares condition through [`sdp`].
//! 4. [`validate`] integrates the true dynamics to cross-check the result.
//!
//! The crate is `no_std` (with `alloc`); disable the default `std` feature to
//! build without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod approx;
pub mod boundary;
pub mod certify;
mod linalg;
mod math;
pub mod poly;
pub mod sdp;
pub mod validate;

pub use approx::{Box, ElementaryFunction, Enclosure, FunctionKind, Mesh, MeshKind};
pub use certify::{DoaCertificate, RelaxationParams, ShapeRegion, SystemDef, UncertainPolySystem};
pub use poly::{Monomial, PolyError, PolyVector, Polynomial};
pub use sdp::{SdpProblem, SdpSolution, SolveStatus, SosProgram};
