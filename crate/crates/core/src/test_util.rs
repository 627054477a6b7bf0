//! Shared helpers for unit tests.

use crate::linalg::Matrix;

/// xorshift64* for quick randomized checks; unrelated to the simulation RNG
/// so randomized tests stay independent of the code under test.
pub(crate) struct TestRng(u64);

impl TestRng {
    pub(crate) fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    pub(crate) fn next_f64(&mut self) -> f64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        let bits = x.wrapping_mul(0x2545F4914F6CDD1D);
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [-1, 1).
    pub(crate) fn next_signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.next_signed()).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Random square matrix rescaled to the requested spectral norm.
    pub(crate) fn contractive(&mut self, n: usize, target_norm: f64) -> Matrix {
        let raw = self.matrix(n, n);
        let norm = raw.spectral_norm();
        if norm == 0.0 {
            raw
        } else {
            raw.scale(target_norm / norm)
        }
    }

    /// Random symmetric positive semidefinite matrix.
    pub(crate) fn psd(&mut self, n: usize) -> Matrix {
        let half = self.matrix(n, n);
        half.mul(&half.transpose())
    }
}
