//! Semi-supervised co-training of gradient-boosted trees and a linear
//! transductive SVM, combined through an ensemble-weight solver that
//! minimizes prediction entropy on the unlabeled data.
//!
//! The pieces are usable on their own:
//!
//! * [`data`] loads CSV datasets and builds stratified label-rate splits.
//! * [`gbdt`] is a second-order gradient-boosted tree classifier.
//! * [`tsvm`] is a one-vs-rest linear transductive SVM with margin density.
//! * [`weights`] solves for the ensemble weights on the simplex.
//! * [`cotrain`] runs the full co-training loop.
//! * [`metrics`] scores predictions, measures pairwise diversity and
//!   cross-validates.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cotrain;
pub mod data;
mod error;
pub mod gbdt;
pub mod matrix;
pub mod metrics;
mod rng;
pub mod tsvm;
pub mod weights;

pub use error::{CtowError, Result};
pub use matrix::Matrix;
