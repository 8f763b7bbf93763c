//! Real-form harmonic vectors and the time/frequency transforms between them.
//!
//! A signal truncated at harmonic `K` is stored as `[X0, Re X1, Im X1, ...,
//! Re XK, Im XK]` with peak phasors, `x(t) = X0 + Σ Re(Xk e^{jkω0t})`. The
//! transforms are dense DFT matrices over `4(K+1)` uniform samples; at the
//! sizes used here (K ≤ 32) they cost less than an FFT plan would.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::RMatrix;

/// Time samples per period for truncation order `k`.
pub fn sample_count(k: usize) -> usize {
    4 * (k + 1)
}

/// Length of a real-form harmonic vector.
pub fn real_len(k: usize) -> usize {
    2 * k + 1
}

/// Paired analysis (`D`, samples → harmonics) and synthesis (`E`) matrices.
#[derive(Debug, Clone)]
pub struct Transform {
    pub harmonics: usize,
    pub analysis: RMatrix,
    pub synthesis: RMatrix,
}

impl Transform {
    pub fn new(k: usize) -> Self {
        let nt = sample_count(k);
        let m = real_len(k);
        let mut analysis = RMatrix::zeros(m, nt);
        let mut synthesis = RMatrix::zeros(nt, m);
        let scale = 2.0 / nt as f64;
        for n in 0..nt {
            analysis[(0, n)] = 1.0 / nt as f64;
            synthesis[(n, 0)] = 1.0;
            for h in 1..=k {
                // exact index arithmetic keeps the tables symmetric in n
                let theta = 2.0 * PI * ((h * n) % nt) as f64 / nt as f64;
                let (s, c) = theta.sin_cos();
                analysis[(2 * h - 1, n)] = scale * c;
                analysis[(2 * h, n)] = -scale * s;
                synthesis[(n, 2 * h - 1)] = c;
                synthesis[(n, 2 * h)] = -s;
            }
        }
        Self {
            harmonics: k,
            analysis,
            synthesis,
        }
    }

    pub fn samples(&self) -> usize {
        self.synthesis.rows()
    }

    pub fn to_time(&self, x: &[f64]) -> Vec<f64> {
        self.synthesis.mul_vec(x)
    }

    pub fn to_freq(&self, samples: &[f64]) -> Vec<f64> {
        self.analysis.mul_vec(samples)
    }
}

/// Applies `d/dt` at fundamental angular frequency `omega` in place.
pub fn differentiate(x: &mut [f64], omega: f64) {
    x[0] = 0.0;
    for h in 1..=(x.len() - 1) / 2 {
        let w = h as f64 * omega;
        let (re, im) = (x[2 * h - 1], x[2 * h]);
        x[2 * h - 1] = -w * im;
        x[2 * h] = w * re;
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    let k = (x.len() - 1) / 2;
    let mut out = Vec::with_capacity(k + 1);
    out.push(Complex64::new(x[0], 0.0));
    for h in 1..=k {
        out.push(Complex64::new(x[2 * h - 1], x[2 * h]));
    }
    out
}

pub fn from_complex(x: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() - 1);
    out.push(x[0].re);
    for v in &x[1..] {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_inverts_synthesis() {
        let t = Transform::new(8);
        let eye = t.analysis.mul(&t.synthesis);
        for i in 0..eye.rows() {
            for j in 0..eye.cols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((eye[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cosine_and_sine_land_in_the_right_slots() {
        let t = Transform::new(3);
        let nt = t.samples();
        let v: Vec<f64> = (0..nt)
            .map(|n| {
                let th = 2.0 * PI * n as f64 / nt as f64;
                0.5 + 2.0 * th.cos() + 3.0 * (2.0 * th).sin()
            })
            .collect();
        let x = to_complex(&t.to_freq(&v));
        assert!((x[0].re - 0.5).abs() < 1e-14);
        assert!((x[1] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        // sin = Re(-j e^{jθ})
        assert!((x[2] - Complex64::new(0.0, -3.0)).norm() < 1e-14);
    }

    #[test]
    fn derivative_of_cosine() {
        let mut x = from_complex(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        differentiate(&mut x, 2.0);
        assert_eq!(x, [0.0, 0.0, 2.0]);
    }
}
