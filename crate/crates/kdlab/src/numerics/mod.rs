//! Deterministic linear algebra, stable softened softmax, and seedable
//! randomness used by every other module.

mod matrix;
mod rng;
mod softmax;

pub use matrix::{dot, l2_norm, Matrix};
pub use rng::{mix64, Rng};
pub use softmax::{log_softmax, softened_softmax};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
