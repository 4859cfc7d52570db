//! Numerical laboratory for jump-type Dirichlet forms on finite spaces.
//!
//! Builds finite metric measure spaces with symmetric jump kernels, their
//! generators and semigroups, gradient and pseudo-gradient calculus,
//! vertical Littlewood-Paley square functions, truncated-kernel
//! approximation sweeps, and a jump-process simulator with martingale and
//! quadratic-variation diagnostics. A harness layer estimates the Lp
//! operator constants empirically and drives everything from a CLI.

pub mod error;
pub mod field;
pub mod gradients;
pub mod harness;
pub mod mosco;
pub mod quad;
pub mod semigroup;
pub mod space;
pub mod squarefn;
pub mod stochastic;

pub use error::{Error, Result};
pub use field::Field;
pub use space::Space;
