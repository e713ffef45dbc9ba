//! Probability vectors: softmax and relative entropy.

use num_traits::Float;

use crate::error::{Error, Result};

/// Entries of `q` below this value are raised to it before dividing.
pub const KL_Q_FLOOR: f64 = 1e-12;
/// Accepted deviation of a probability vector's sum from one.
pub const SUM_TOL: f64 = 1e-9;

/// Max-shifted softmax.
pub fn softmax<T: Float>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum = out.iter().copied().fold(T::zero(), |a, b| a + b);
    for v in &mut out {
        *v = *v / sum;
    }
    out
}

fn check_distribution<T: Float>(p: &[T], name: &str) -> Result<()> {
    let mut sum = T::zero();
    for &v in p {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "{name} has a negative or non-finite entry"
            )));
        }
        sum = sum + v;
    }
    let tol = T::from(SUM_TOL).unwrap();
    if (sum - T::one()).abs() > tol {
        return Err(Error::InvalidDistribution(format!(
            "{name} sums to {:?}",
            sum.to_f64()
        )));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ pᵢ ln(pᵢ/qᵢ)` with `0·ln(0/q) = 0` and `q` floored at [`KL_Q_FLOOR`].
pub fn kl_divergence<T: Float>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(kl_unchecked(p, q))
}

/// [`kl_divergence`] without input validation, for internal hot loops over softmax outputs.
pub(crate) fn kl_unchecked<T: Float>(p: &[T], q: &[T]) -> T {
    let floor = T::from(KL_Q_FLOOR).unwrap();
    let mut acc = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > T::zero() {
            acc = acc + pi * (pi / qi.max(floor)).ln();
        }
    }
    // Rounding can leave a tiny negative sum for nearly identical inputs.
    acc.max(T::zero())
}

/// Total-variation distance `½ Σ |pᵢ - qᵢ|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
