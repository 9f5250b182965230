//! Numerical laboratory for the parabolic Anderson model `∂u/∂t = κΔu + ξu`
//! driven by a Poisson field of catalyst random walkers on `Z^d`.
//!
//! * [`lattice_green`]: `φ̂`, heat kernel, resolvent `R(μ)`, `r_d`, `G_a(0)`.
//! * [`spectral`]: `μ(r)`, eigenfunction, `λ̂_p`, `λ_p(0)`, bounds, regimes.
//! * [`cauchy`]: finite-box solvers for `w` and `w̄`, Volterra route, Duhamel check.
//! * [`mc`]: Feynman–Kac Monte Carlo, pinned and quenched estimators, scaling identity.
//! * [`polaron`]: radial polaron variational problem and its truncated variants.

pub mod cauchy;
pub mod error;
pub mod lattice;
pub mod lattice_green;
pub mod mc;
pub mod polaron;
pub mod quadrature;
pub mod special;
pub mod spectral;

pub use cauchy::{Boundary, BoxConfig, FieldTrace, Path, ScalarTrace, TrajectorySet};
pub use error::{PamError, Result};
pub use lattice::{Dimension, ExtReal, LatticeField, Site};
pub use lattice_green::{LatticeGreen, QuadratureConfig};
pub use mc::{CatalystField, McConfig, McEstimate};
pub use polaron::{GridSpec, PolaronResult, RadialGrid, RadialProfile, SolverOptions};
pub use spectral::{IntermittencyVerdict, Interval, ModelParams, RegimeReport};
