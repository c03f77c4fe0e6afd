//! Numerical laboratory for `N`-coupled focusing nonlinear Schrodinger systems
//!
//! `-i d_t phi_j = Lap phi_j + mu_j |phi_j|^(p-1) phi_j + sum_{i != j} beta_ij |phi_i|^((p+1)/2) |phi_j|^((p-3)/2) phi_j`
//!
//! on a periodic box approximating `R^n`, on radial functions of hyperbolic
//! space `H^n`, and (functionals only) on the sphere `S^2`.
//!
//! Everything is generic over [`num::Real`] (`f32`, `f64`); the aliases at the
//! crate root fix `f64`, which is what the documented tolerances assume.

pub mod error;
pub mod functionals;
pub mod grid;
pub mod hyperbolic;
pub mod nonlinear;
pub mod num;
pub mod params;
pub mod quad;
pub mod solver;
pub mod spectral;
pub mod sphere;
pub mod state;
pub mod variational;
pub mod virial;

pub use error::{Error, Result};
pub use grid::{GridSpec, Manifold};
pub use solver::{Classification, SolverConfig};

pub type Complex = num::C<f64>;
pub type Params = params::SystemParams<f64>;
pub type State = state::StateVector<f64>;
pub type Report = functionals::FunctionalReport<f64>;
pub type Record = solver::RunRecord<f64>;
pub type Weight = hyperbolic::WeightSpec<f64>;
