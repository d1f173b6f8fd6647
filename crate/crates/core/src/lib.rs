// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod eval;
pub mod error;
pub mod fft;
pub mod joint;
pub mod kv;
pub mod learners;
pub mod tracking;
pub mod weights;

pub use error::{Error, Result};
