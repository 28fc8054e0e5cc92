//! Analytical quality assessment for video-analytics frames.
//!
//! Frames are scored by how likely a downstream classifier is to get them
//! wrong, not by how they look. The crate covers every stage: distortion
//! synthesis ([`distortions`]), classifier-opinion labels ([`opinion`]),
//! lightweight features ([`features`]), the quality regressor
//! ([`regressor`]), statistics and a surrogate classifier ([`evaluation`]),
//! and threshold/stride frame gating with resource accounting ([`filter`]).

pub mod error;
pub mod imaging;
pub mod rng;

pub use error::{Error, Result};
pub mod distortions;
mod jsonl;
pub mod synth;
pub mod evaluation;
pub mod opinion;
pub mod features;
pub mod regressor;
pub mod filter;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distortions.md")]
    mod distortions {}
    #[doc = include_str!("../../../book/src/opinion.md")]
    mod opinion {}
    #[doc = include_str!("../../../book/src/assessor.md")]
    mod assessor {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
