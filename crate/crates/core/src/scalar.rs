use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar accepted by the encoder, loss and audit kernels.
pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Lossless-enough conversion from `f64` literals and feature values.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Little-endian byte encoding used by the binary weight and embedding blocks.
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_f64_lossy().to_le_bytes());
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln Σⱼ exp(sⱼ) − s[target]`, written as `(m − s[target]) + ln(1 + Σ exp(sⱼ − m))`
/// over the non-maximal entries so confident scores keep full relative precision.
pub(crate) fn cross_entropy<T: Real>(s: &[T], target: usize) -> T {
    let (k, m) = s
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bk, bm), (i, v)| if v > bm { (i, v) } else { (bk, bm) });
    if !m.is_finite() {
        return m - s[target];
    }
    let rest: T = s.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| (v - m).exp()).sum();
    (m - s[target]) + rest.ln_1p()
}

/// Softmax probabilities computed with the max shift.
pub(crate) fn softmax<T: Real>(xs: &[T]) -> Vec<T> {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_survives_large_inputs() {
        let v = cross_entropy(&[1000.0f64, 1000.0], 1);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let v32 = cross_entropy(&[500.0f32, -500.0], 1);
        assert!((v32 - 1000.0).abs() < 1e-3);
        // ln(1 + e^-30) is below f64 epsilon relative to 1 but must not vanish
        let tiny = cross_entropy(&[30.0f64, 0.0], 0);
        assert!((tiny / (-30f64).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0f64, -1.0, 0.5, 700.0]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
