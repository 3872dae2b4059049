//! From-scratch differentiable U-Net with a concept bottleneck.
//!
//! Activations are stored channel-major with the batch inside each channel,
//! `[C][N][H][W]`, so a 3×3 convolution over a whole batch is one matrix
//! product and skip concatenation is a buffer append. Everything is generic
//! over [`Real`] so the same code runs in `f32` for training and in `f64` as a
//! finite-difference shadow.

use std::fmt::Debug;

use num_traits::Float;

pub mod adamw;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod schedule;
pub mod train;
pub mod unet;

pub use adamw::{AdamW, AdamWConfig};
pub use layers::Act;
pub use loss::{mixed_loss, LossParts};
pub use schedule::lambda_schedule;
pub use train::{predict, train, History, TrainConfig};
pub use unet::{Mode, NetConfig, Network, Output};

/// Floating-point element type of the network.
pub trait Real: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    /// `C ← α·op(A)·op(B) + β·C` on row-major matrices, `op(A)` `m×k`,
    /// `op(B)` `k×n`, `C` `m×n`. `ta`/`tb` mean the operand is stored
    /// transposed (`k×m`, `n×k`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(ta: bool, tb: bool, m: usize, n: usize, k: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).unwrap()
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    // Logical `rows×cols`; stored row-major either as is or transposed.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(ta: bool, tb: bool, m: usize, n: usize, k: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(ta, m, k);
                let (rsb, csb) = strides(tb, k, n);
                // SAFETY: lengths checked above; strides address only the
                // first m·k, k·n and m·n elements.
                unsafe {
                    $f(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(ta: bool, tb: bool, m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    let av = if ta { a[p * m + i] } else { a[i * k + p] };
                    let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                    c[i * n + j] += av * bv;
                }
            }
        }
        c
    }

    #[test]
    fn gemm_all_orientations() {
        let (m, n, k) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|v| v as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).sin()).collect();
        for ta in [false, true] {
            for tb in [false, true] {
                let mut c = vec![1.0; m * n];
                f64::gemm(ta, tb, m, n, k, 1.0, &a, &b, 0.0, &mut c);
                let want = naive(ta, tb, m, n, k, &a, &b);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
