//! N-functions, Orlicz norms and an energy minimizer for Dirichlet problems
//! driven by the `Phi`-Laplacian `-div(phi(|grad u|) grad u)`.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod conjugate;
pub mod expr;
pub mod mesh;
pub mod nfunction;
pub mod norms;
pub mod quad;
pub mod registry;
pub mod solver;

pub use conjugate::SobolevConjugate;
pub use mesh::{DiscreteField, Mesh};
pub use nfunction::{NFunction, PhiSpec};
pub use registry::BuiltinPhi;
