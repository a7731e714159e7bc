//! Exact piecewise-affine analysis and oracle lower-bound experiments for
//! Goldstein approximate stationarity.
//!
//! Functions are max-min compositions of affine atoms ([`pa_core`]). On top
//! of that sit exact δ-subdifferentials and stationarity certificates
//! ([`subdiff`]), the resisting constructions ([`constructions`]), local
//! oracles and the adaptive adversary ([`oracle`]), a small optimizer zoo
//! ([`algorithms`]) and the experiment driver ([`harness`]).

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod constructions;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod pa_core;
pub mod subdiff;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/functions.md")]
    mod functions {}
    #[doc = include_str!("../../../book/src/stationarity.md")]
    mod stationarity {}
    #[doc = include_str!("../../../book/src/constructions.md")]
    mod constructions {}
    #[doc = include_str!("../../../book/src/adversary.md")]
    mod adversary {}
    #[doc = include_str!("../../../book/src/algorithms.md")]
    mod algorithms {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
