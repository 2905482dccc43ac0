//! Bayesian social relations regression for fixed rank nomination surveys.
//!
//! Observed nomination scores are linked to latent real-valued relations
//! through one of four set-based likelihoods ([`LikelihoodFamily`]), and the
//! joint posterior of latent relations and model parameters is explored with
//! a constrained Gibbs sampler.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod error;
pub mod net;
pub mod posterior;
pub mod sampler;
pub mod simgen;

pub use constraints::{validate_membership, Membership, Violation};
pub use error::{Error, Result};
pub use net::{
    canonicalize_scores, out_degrees, ConstraintInterval, DesignData, EffectKind, LatentMatrix,
    LikelihoodFamily, RawCoding, ScoreMatrix, SrmParams,
};
pub use posterior::PosteriorSample;
pub use sampler::{run_chain, ChainOutput, ChainState, SamplerConfig};
