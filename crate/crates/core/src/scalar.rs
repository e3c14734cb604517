//! Scalar abstraction for the scoring and metric kernels.
//!
//! Everything that is plain arithmetic over scores (IoU, cosine, the ranking
//! sum, LCS ratios, summary statistics) is written against [`Real`] so it can
//! be instantiated with `f32` or `f64`. The pipeline itself runs on `f64`;
//! see the aliases at the crate root.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point type usable by the scoring kernels.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean<F: Real>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(F::zero(), |acc, &v| acc + v);
    Some(sum / F::count(values.len()))
}

/// Population standard deviation, `None` for an empty slice.
pub fn population_std<F: Real>(values: &[F]) -> Option<F> {
    let m = mean(values)?;
    let var = values
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - m) * (v - m))
        / F::count(values.len());
    Some(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_statistics() {
        assert_eq!(mean(&[0.0_f64, 2.0]), Some(1.0));
        assert_eq!(population_std(&[0.0_f64, 2.0]), Some(1.0));
        assert_eq!(population_std(&[0.5_f32]), Some(0.0));
        assert_eq!(mean::<f64>(&[]), None);
    }
}
