//! Gaussian-process regression for high-dimensional inputs via sparse
//! convex-combination kernel learning.
//!
//! Instead of estimating one anisotropic kernel over all input dimensions,
//! the covariance is approximated by a convex combination of isotropic
//! Gaussian kernels, each restricted to a low-dimensional subset of the
//! inputs. Support kernels are picked by forward stepwise selection on the
//! directional derivative of a regularized squared-error loss, their simplex
//! weights by a multiplicative update, and the candidate pool grows
//! stage-wise under a heredity rule. The dimensions surviving in the final
//! mixture are the active variables.
//!
//! Modules:
//! - [`kernel`]: basic kernels, kernel matrices, the candidate grid
//! - [`design`]: mixtures, the regularized loss, directional derivatives
//! - [`weights`]: simplex weight optimization for a fixed support
//! - [`selector`]: forward stepwise kernel selection
//! - [`stagewise`]: heredity-driven stagewise learning
//! - [`model`]: fitted models, prediction, cross-validation, persistence
//! - [`bench`]: designs, test functions, and the experiment harness
//! - [`data`]: CSV ingestion

pub mod bench;
pub mod data;
pub mod design;
pub mod error;
pub mod kernel;
pub mod model;
pub mod selector;
pub mod stagewise;
pub mod weights;

pub use design::{Design, SolveState};
pub use error::{Error, Result};
pub use kernel::{KernelSpec, ThetaGrid};
pub use model::{default_eta_grid, fit, select_eta, FittedModel, Prediction};
pub use selector::{select_kernels, SelectionTrace, SelectorConfig};
pub use stagewise::{fit_stagewise, HeredityMode, StageConfig};
pub use weights::{optimize_weights, WeightConfig};
