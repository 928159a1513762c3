//! A verification laboratory for sparse coding under dictionary
//! perturbation and for the two-stage transfer pipeline built on it.
//!
//! The crate is organized around the objects it certifies:
//!
//! - [`dict`] — dictionaries, the (1,2) induced norm, incoherence and
//!   conditioning diagnostics;
//! - [`lasso`] — the l1-regularized coder with KKT certificates;
//! - [`stability`] — k-margins, permissible perturbation radii, and seeded
//!   perturbation experiments against the coding stability bound;
//! - [`genmodel`] — the sparse generative sampler, the printed margin
//!   failure probability, and Monte Carlo lemma checks;
//! - [`dictlearn`] — alternating-minimization and controlled-error
//!   dictionary estimators with aligned error measurement;
//! - [`transfer`] — regularized target ERM with duality-gap certificates,
//!   the excess-risk bound evaluator, and the end-to-end pipeline.
//!
//! Every Monte Carlo routine takes a seed and derives one counter-based
//! stream per trial ([`rng`]), so reports are reproducible bit for bit.

pub mod dict;
pub mod dictlearn;
pub mod error;
pub mod genmodel;
pub mod lasso;
pub mod rng;
pub mod stability;
pub mod transfer;

pub use dict::{
    dict_distance, induced_norm_1_2, irrepresentation_margin, mu_incoherence,
    restricted_eigenvalue, Dictionary, IncoherenceReport,
};
pub use error::{Error, Result};
pub use genmodel::{GenModelParams, SampleDraw};
pub use lasso::{LassoProblem, SparseCode};
pub use stability::{MarginReport, StabilityReport};
pub use transfer::{BoundBreakdown, ExperimentReport, TransferConfig};
