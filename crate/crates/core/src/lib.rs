//! Recovery of latent variables from the distribution of observables, and
//! assignment of the unique latent value to every observation in a finite
//! population whose observed tuples are pairwise distinct.
//!
//! Two identification routes are provided:
//!
//! * [`kotlarski`] — the additive two-measurement model `X1 = X* + e1`,
//!   `X2 = X* + e2`. The latent characteristic function is recovered from a
//!   log-derivative integral of the joint characteristic function, and the
//!   full joint CF of `(X1, X2, X*)` is reconstructed from it.
//! * [`spectral3`] — the discrete three-measurement model under conditional
//!   independence. The conditional distributions and latent marginal are
//!   recovered by eigendecomposition of a pair of joint-probability matrices.
//!
//! [`assign`] maps each observed tuple back to its latent value once a model
//! is identified (posterior mode for the discrete route, within-group mean
//! for the additive route, residuals for weighted least squares). [`synth`]
//! generates populations from known components for oracles and property
//! tests, and [`io`] holds the text formats shared with the command-line
//! tool.
//!
//! Grid and batch evaluations run on the rayon thread pool when the
//! `parallel` feature (default) is enabled; every output element is reduced
//! in a fixed order, so results are identical across thread counts and with
//! the sequential fallback.

pub mod assign;
pub mod exec;
pub mod io;
pub mod kotlarski;
mod linalg;
pub mod population;
pub mod prob;
pub mod spectral3;
pub mod synth;

pub use population::{
    LatentPopulation, LatentValue, LeavesReport, ObservedPMF, ObservedTuple, PopulationError,
};
pub use prob::Prob;
