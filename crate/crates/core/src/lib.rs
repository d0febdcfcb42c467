//! Statistics on measure networks under the Gromov-Wasserstein distance.
//!
//! A measure network is a square real matrix of edge weights (any sign, any
//! symmetry, any diagonal) together with a fully supported probability
//! vector on the nodes. This crate computes locally optimal couplings
//! between networks and builds on them:
//!
//! - [`gw`]: distortion, the asymmetric gradient and the conditional-gradient solver;
//! - [`ot`]: the exact transportation simplex used as the linear subsolver;
//! - [`align`]: blow-ups that turn a coupling into a node-to-node matching;
//! - [`geodesic`]: interpolation between aligned networks;
//! - [`tangent`]: log and exp maps, the tangent inner product and injectivity radius;
//! - [`frechet`]: Frechet loss, gradient, gradient-flow means and compression;
//! - [`analysis`]: tangent vectorization, weighted tangent PCA and feature export;
//! - [`experiments`]: seeded block-model generators and sweep harnesses.
//!
//! Batch work (solver restarts, per-member solves, trials) fans out over
//! rayon when the default `parallel` feature is on.

pub mod align;
pub mod analysis;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod frechet;
pub mod geodesic;
pub mod gw;
pub mod network;
pub mod ot;
pub mod par;
pub mod tangent;

pub use align::{AlignedPair, BlowupPlan};
pub use coupling::{Coupling, SolveReport};
pub use error::{Error, Result};
pub use gw::{GwParams, InitCoupling, LineSearch};
pub use network::{Format, MeasureNetwork};
pub use tangent::TangentVector;
