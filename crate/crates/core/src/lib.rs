pub mod checkpoint;
pub mod coherence;
pub mod corpus;
pub mod distill;
pub mod embedstore;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod topicvae;
pub mod training;

pub use error::{Error, Result};

/// Guide chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/topic-model.md")]
    mod topic_model {}
    #[doc = include_str!("../../../book/src/wasserstein.md")]
    mod wasserstein {}
    #[doc = include_str!("../../../book/src/distillation.md")]
    mod distillation {}
    #[doc = include_str!("../../../book/src/coherence.md")]
    mod coherence {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
