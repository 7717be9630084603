//! Two-dimensional periodic FFT on the unit square.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Integer wavenumber of FFT bin `i` out of `n`; the Nyquist bin maps to `-n/2`.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    let h = n / 2;
    if i < h {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            nx,
            ny,
            fx: p.plan_fft_forward(nx),
            fy: p.plan_fft_forward(ny),
            ix: p.plan_fft_inverse(nx),
            iy: p.plan_fft_inverse(ny),
        }
    }

    fn transform(&self, buf: &mut [Complex64], along_x: &dyn Fft<f64>, along_y: &dyn Fft<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        // rows are contiguous in y
        along_y.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = buf[i * ny + j];
            }
            along_x.process(&mut col);
            for i in 0..nx {
                buf[i * ny + j] = col[i];
            }
        }
    }

    /// Unnormalized forward transform of a real `nx × ny` array.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, self.fx.as_ref(), self.fy.as_ref());
        buf
    }

    pub fn forward_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.transform(&mut buf, self.fx.as_ref(), self.fy.as_ref());
        buf
    }

    /// Normalized inverse transform (complex result).
    pub fn inverse_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut buf, self.ix.as_ref(), self.iy.as_ref());
        let s = 1.0 / (self.nx * self.ny) as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
        buf
    }

    /// Normalized inverse transform, keeping the real part.
    pub fn inverse(&self, buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse_complex(buf).into_iter().map(|c| c.re).collect()
    }
}
