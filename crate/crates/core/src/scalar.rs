//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the engine is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Short dtype tag written into serialized sidecars.
    const DTYPE: &'static str;
    /// Width of one element in a little-endian blob.
    const BYTES: usize;

    /// Lossy conversion from `f64`, used for constants.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// Row-major `c = alpha * a(m×k) · b(k×n) + beta * c(m×n)`.
    ///
    /// The default is a plain i-k-j loop; `f32`/`f64` dispatch to an optimized kernel.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            if beta == Self::zero() {
                row.iter_mut().for_each(|v| *v = Self::zero());
            } else if beta != Self::one() {
                row.iter_mut().for_each(|v| *v *= beta);
            }
            for p in 0..k {
                let aip = alpha * a[i * k + p];
                if aip == Self::zero() {
                    continue;
                }
                for (cv, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *cv += aip * bv;
                }
            }
        }
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }

    fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
        if m == 0 || n == 0 {
            return;
        }
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: slice lengths checked above; all three are dense row-major.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }

    fn gemm(m: usize, k: usize, n: usize, alpha: f32, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
        if m == 0 || n == 0 {
            return;
        }
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: slice lengths checked above; all three are dense row-major.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimized_gemm_matches_default_loop() {
        let a: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|v| (v as f64).sin()).collect();
        let mut fast = vec![1.0; 15];
        let mut slow = vec![1.0; 15];
        f64::gemm(3, 4, 5, 2.0, &a, &b, 0.5, &mut fast);
        for i in 0..3 {
            for j in 0..5 {
                let mut acc = 0.0;
                for p in 0..4 {
                    acc += a[i * 4 + p] * b[p * 5 + j];
                }
                slow[i * 5 + j] = 2.0 * acc + 0.5 * slow[i * 5 + j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn le_roundtrip() {
        let mut buf = Vec::new();
        1.25f64.write_le(&mut buf);
        (-3.5f32).write_le(&mut buf);
        assert_eq!(f64::read_le(&buf[..8]), 1.25);
        assert_eq!(f32::read_le(&buf[8..]), -3.5);
    }
}
