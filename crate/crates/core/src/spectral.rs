//! Row-wise Fourier differentiation in the periodic direction.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed wavenumbers `2 pi m / gamma`.
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize, gamma: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k = (0..n)
            .map(|m| {
                let mm = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * mm / gamma
            })
            .collect();
        Self { n, fwd, inv, k }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Symbol of the first derivative; zero at the Nyquist mode.
    pub fn d1_symbol(&self, m: usize) -> f64 {
        if self.n.is_multiple_of(2) && m == self.n / 2 {
            0.0
        } else {
            self.k[m]
        }
    }

    /// `k^2`, the symbol of `-d^2/dx^2` (Nyquist included).
    pub fn k2(&self, m: usize) -> f64 {
        self.k[m] * self.k[m]
    }

    /// FFT of every row of `data` (length a multiple of `n`).
    pub fn forward_rows(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse FFT of every row, returning the normalized real part.
    pub fn inverse_rows(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    fn apply_symbol(&self, spec: &[Complex64], f: impl Fn(usize, Complex64) -> Complex64) -> Vec<f64> {
        let n = self.n;
        let buf = spec.iter().enumerate().map(|(idx, &c)| f(idx % n, c)).collect();
        self.inverse_rows(buf)
    }

    /// Zeroes every row mode with wavenumber index above `n/3`.
    pub fn truncate_two_thirds(&self, data: &[f64]) -> Vec<f64> {
        let n = self.n;
        let cut = n / 3;
        let spec = self.forward_rows(data);
        self.apply_symbol(&spec, |m, c| if m.min(n - m) > cut { Complex64::new(0.0, 0.0) } else { c })
    }

    pub fn d1_from(&self, spec: &[Complex64]) -> Vec<f64> {
        self.apply_symbol(spec, |m, c| Complex64::new(-c.im, c.re) * self.d1_symbol(m))
    }

    pub fn d11_from(&self, spec: &[Complex64]) -> Vec<f64> {
        self.apply_symbol(spec, |m, c| -c * self.k2(m))
    }

    /// Row-wise first derivative.
    pub fn d1(&self, data: &[f64]) -> Vec<f64> {
        self.d1_from(&self.forward_rows(data))
    }

    /// Row-wise second derivative.
    pub fn d11(&self, data: &[f64]) -> Vec<f64> {
        self.d11_from(&self.forward_rows(data))
    }
}
