//! Change detection for mining ponds in bi-temporal multispectral rasters.
//!
//! The crate covers the whole chain: raster I/O, histogram matching and
//! band stacking ([`preprocess`]), index-threshold labeling ([`autolabel`]),
//! nu-SVM classification ([`svm`]) with spatial kernels ([`spatial`]) and
//! total-variation smoothing of class probabilities ([`stv`]), metrics
//! ([`eval`]), and experiment orchestration ([`pipeline`]).

// `!(x > 0.0)` style checks are how NaN parameters get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autolabel;
pub mod error;
pub mod eval;
pub mod grid;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod spatial;
pub mod stv;
pub mod svm;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/data.md")]
    pub struct Data;
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    pub struct Preprocessing;
    #[doc = include_str!("../../../book/src/labels.md")]
    pub struct Labels;
    #[doc = include_str!("../../../book/src/classifiers.md")]
    pub struct Classifiers;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
