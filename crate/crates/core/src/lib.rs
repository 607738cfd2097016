//! Digital baseband self-interference cancellation for full-duplex
//! transceivers: a linear FIR canceller, a widely linear memory
//! polynomial, and a two-stage quantize-and-look-up canceller backed by
//! a low-rank tensor — over a shared signal/dataset layer, with exact
//! per-sample operation counts and a deterministic experiment harness.
//!
//! The guide under `book/` walks through the concepts chapter by
//! chapter; every Rust block in it compiles and runs as a doc-test of
//! this crate, so the narrative and the API cannot drift apart.

pub mod complexity;
pub mod cpd;
pub mod csid;
pub mod error;
pub mod experiment;
pub mod linear;
pub mod poly;
pub mod quantize;
pub mod signal;
pub mod synth;
pub mod util;

mod lsq;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    //! The guide's code examples, run as doc-tests.

    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/linear.md")]
    mod linear {}
    #[doc = include_str!("../../../book/src/polynomial.md")]
    mod polynomial {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/tensor.md")]
    mod tensor {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/complexity.md")]
    mod complexity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
