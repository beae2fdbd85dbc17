//! Finite-energy traveling waves of the Gross-Pitaevskii equation
//!
//! ```text
//! i c d/dx1 psi + Laplacian psi + (1 - |psi|^2) psi = 0,   psi -> 1 at infinity
//! ```
//!
//! computed on truncated slabs `{-N < x1 < N}` as mountain-pass critical points
//! of the Lagrangian `I^c = E - c P`, together with the structural checks
//! that every genuine solution must pass: Pohozaev-type integral identities,
//! lifting identities, the L-infinity and non-vanishing bounds, vortex
//! winding numbers and Morse-index counts.

pub mod analysis;
pub mod field;
pub mod functionals;
pub mod gpwf;
pub mod grid;
pub mod linalg;
pub mod minimax;
pub mod morse;
pub mod onedim;
pub mod reduce;

pub use field::{Field, RealField};
pub use functionals::{FunctionalReport, Speed};
pub use grid::{Grid, TransverseBc};

/// Sound speed of the model; traveling waves exist for `0 < c < SQRT_2`.
pub const SOUND_SPEED: f64 = std::f64::consts::SQRT_2;
