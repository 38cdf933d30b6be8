//! Numerical laboratory for matrix product state (MPS) learning models.
//!
//! The crate provides:
//!
//! - [`chain`]: tensor chains — representation, scaled random
//!   initialization, exact contraction and gradients;
//! - [`ensemble`]: expansion of a small chain into its equivalent ensemble
//!   of linear networks;
//! - [`features`]: per-site feature maps and product Mercer kernels;
//! - [`ntk`]: empirical tangent kernels of finite chains and the analytic
//!   large-bond-dimension limit kernel;
//! - [`flow`]: continuous-time gradient-flow training for squared-error
//!   regression, with closed-form kernel solutions for comparison;
//! - [`born`]: Born machines over binary strings — partition function,
//!   likelihood training and closed-form probability dynamics;
//! - [`stats`]: seeded trial orchestration and the statistical estimators
//!   and goodness-of-fit tests used to verify the limit laws;
//! - [`reference`]: brute-force enumeration and finite-difference oracles
//!   that the fast paths are tested against.

pub mod born;
pub mod chain;
pub mod csvio;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod flow;
pub mod ntk;
pub mod reference;
pub mod stats;

pub use chain::{ChainSpec, Environments, SiteGrad, SiteTensor, TensorChain};
pub use error::{Error, Result};
pub use features::{FeatureMap, SiteKernel};
pub use flow::{Integrator, RegressionTask, Trajectory};
pub use ntk::{KernelMatrix, Provenance};
