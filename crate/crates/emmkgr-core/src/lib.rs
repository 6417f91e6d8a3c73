//! Core algorithms for multimodal knowledge-graph representation learning.
//!
//! Everything in this crate is pure computation over in-memory data:
//! graph construction from precomputed feature matrices, linear layer-mean
//! propagation, rotation-based relation scoring, pairwise ranking losses with
//! analytic gradients, a joint training loop, and the retrieval / evaluation
//! primitives built on top of the learned embeddings. File formats, IO, and
//! the command-line interface live in the companion `emmkgr` crate.
//!
//! The crate is `no_std` (with `alloc`) and generic over `f32`/`f64` via the
//! [`Real`] trait; production paths run in 32-bit, gradient checking in 64-bit.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datastore;
pub mod evaluator;
pub mod graph;
pub mod knn;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod recommender;
pub mod rng;
pub mod search;
pub mod sparse;
pub mod trainer;

use core::fmt::Debug;
use core::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar used throughout the crate.
pub trait Real: Float + NumAssign + Sum<Self> + Copy + Debug + 'static {
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn from_usize(x: usize) -> Self;
    fn to_f64_val(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn from_usize(x: usize) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_val(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_usize(x: usize) -> Self {
        x as f64
    }
    #[inline]
    fn to_f64_val(self) -> f64 {
        self
    }
}
