//! Terrain classification from proprioceptive signals: multi-rate
//! recordings, spectrograms, a spectrogram CNN and a selective state-space
//! classifier, leakage-free k-fold evaluation, and embedding projections.
//!
//! The guide in `book/` walks through each stage; its code blocks run as
//! doctests of this crate.

pub mod config;
pub mod dsp;
pub mod embed;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod seed;
pub mod signal;
pub mod synthetic;

pub use error::{Error, Result};

// One module per chapter so a failing snippet names its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/recordings.md")]
    mod recordings {}
    #[doc = include_str!("../../../book/src/spectrograms.md")]
    mod spectrograms {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
