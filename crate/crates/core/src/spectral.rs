//! Diagonal solves in the discrete Fourier basis of the periodic grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Spectral2D {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl core::fmt::Debug for Spectral2D {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Spectral2D").field("n", &self.n).finish()
    }
}

impl Spectral2D {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn transform(&self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        fft.process(buf);
        transpose(buf, n);
        fft.process(buf);
        transpose(buf, n);
    }

    /// `out = F⁻¹[F[rhs] / symbol]`, where `symbol(k, l)` is the eigenvalue
    /// for wavenumbers `k` along x and `l` along y. Modes with a zero symbol
    /// are set to zero. `rhs` and `out` may hold several interleaved
    /// components.
    pub(crate) fn solve(&self, rhs: &[f64], comps: usize, out: &mut [f64], symbol: impl Fn(usize, usize) -> f64) {
        let n = self.n;
        let nodes = n * n;
        let scale = 1.0 / nodes as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); nodes];
        for q in 0..comps {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(rhs[k * comps + q], 0.0);
            }
            self.transform(&mut buf, self.forward.as_ref());
            for l in 0..n {
                for k in 0..n {
                    let s = symbol(k, l);
                    let b = &mut buf[l * n + k];
                    *b = if s == 0.0 { Complex64::new(0.0, 0.0) } else { *b * (scale / s) };
                }
            }
            self.transform(&mut buf, self.inverse.as_ref());
            for (k, b) in buf.iter().enumerate() {
                out[k * comps + q] = b.re;
            }
        }
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            buf.swap(j * n + i, i * n + j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_symbol_round_trips() {
        let n = 8;
        let rhs: Vec<f64> = (0..2 * n * n).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; rhs.len()];
        Spectral2D::new(n).solve(&rhs, 2, &mut out, |_, _| 1.0);
        for (a, b) in rhs.iter().zip(&out) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn single_mode_is_scaled_by_its_symbol() {
        let n = 16;
        let rhs: Vec<f64> = (0..n * n)
            .map(|k| (2.0 * core::f64::consts::PI * (3 * (k % n) + 2 * (k / n)) as f64 / n as f64).cos())
            .collect();
        let mut out = vec![0.0; rhs.len()];
        Spectral2D::new(n).solve(&rhs, 1, &mut out, |k, l| if (k, l) == (3, 2) || (k, l) == (13, 14) { 4.0 } else { 1.0 });
        for (a, b) in rhs.iter().zip(&out) {
            assert!((a / 4.0 - b).abs() <= 1e-14);
        }
    }
}
