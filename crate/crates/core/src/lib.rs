//! Contrastive clustering on a small differentiable-compute core: losses
//! over assignment features and assignment probabilities with a cluster
//! regularizer, an Adam training loop, clustering metrics, and an exact
//! mutual-information oracle for the contrastive lower bound.
//!
//! The guide under `book/` is compiled as doc-tests of this crate.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod hungarian;
pub mod losses;
pub mod metrics;
pub mod mioracle;
pub mod model;
pub mod runner;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

macro_rules! book_chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[cfg(doctest)]
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub mod $name {}
        )*
    };
}

book_chapters! {
    book_intro => "intro.md",
    book_autodiff => "autodiff.md",
    book_losses => "losses.md",
    book_training => "training.md",
    book_metrics => "metrics.md",
    book_bound => "bound.md",
    book_cli => "cli.md",
}
