//! Simulation and verification toolkit for the slowed t-TASEP particle system
//! and the Hall-Littlewood measure dynamics it is equivalent to.
//!
//! The crate is organized around the objects the experiments need:
//!
//! - [`partition`]: integer partitions and Hall-Littlewood polynomial
//!   evaluations (branching rule, principal and Plancherel specializations).
//! - [`dynamics`]: exact continuous-time simulation of slowed t-TASEP and of
//!   the partition-valued jump process, plus the finite generator-matrix
//!   cross-check of their equivalence.
//! - [`contour`]: spectrally convergent trapezoidal quadrature on nested
//!   circles for all the moment and covariance contour integrals.
//! - [`oracles`]: exact rational evaluation of the limiting covariances
//!   `D(r,s)`, the two residue identities, and the stationary covariance
//!   recursion — the ground-truth layer the numerical modules are checked
//!   against.
//! - [`asymptotics`]: law-of-large-numbers profiles, the bulk covariance
//!   integral, and the scaled-index convergence experiment.
//! - [`sde`]: Euler-Maruyama integration of the fluctuation SDE systems,
//!   the covariance ODE, and Gaussian sampling of the interpolated path.
//! - [`acceptance`]: the end-to-end verification suite run by
//!   `hltasep verify-all` and by the `acceptance` test target.

pub mod acceptance;
pub mod asymptotics;
pub mod contour;
pub mod dynamics;
pub mod numerics;
pub mod oracles;
pub mod partition;
pub mod sde;

pub use partition::{HlParams, Partition, Rows};
