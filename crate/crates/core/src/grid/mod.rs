//! Discretization of the periodic cylinder G × (0,1), G = (0,1)².
//!
//! Horizontal directions use Fourier collocation on `x_i = i/N`; the vertical
//! direction uses Legendre–Gauss–Lobatto collocation (see [`vertical`]).

mod field;
pub mod io;
pub mod spectral;
pub mod vertical;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use field::{Field2D, Field3D};
pub use spectral::{wavenumber, Fft2};
pub use vertical::Vertical;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub vert: Vertical,
    fft: Fft2,
}

pub fn make_grid(nx: usize, ny: usize, nz: usize) -> Result<Grid> {
    if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::ResolutionTooSmall(format!(
            "horizontal resolution must be even and >= 4, got {nx}x{ny}"
        )));
    }
    if nz < 3 {
        return Err(Error::ResolutionTooSmall(format!(
            "need at least 3 vertical nodes, got {nz}"
        )));
    }
    Ok(Grid {
        nx,
        ny,
        nz,
        vert: Vertical::new(nz),
        fft: Fft2::new(nx, ny),
    })
}

impl Grid {
    /// Number of horizontal nodes.
    pub fn nh(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 / self.ny as f64
    }

    pub fn z(&self, k: usize) -> f64 {
        self.vert.nodes[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.vert.weights
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Integer wavenumbers of the horizontal bin `(i, j)`.
    pub fn k_of(&self, i: usize, j: usize) -> (i64, i64) {
        (wavenumber(i, self.nx), wavenumber(j, self.ny))
    }

    /// Angular wavenumbers 2πk along x, in FFT order.
    pub fn wavenumbers_x(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|i| 2.0 * PI * wavenumber(i, self.nx) as f64)
            .collect()
    }

    pub fn wavenumbers_y(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|j| 2.0 * PI * wavenumber(j, self.ny) as f64)
            .collect()
    }

    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        i == self.nx / 2 || j == self.ny / 2
    }

    /// Multiplier of ∂x at bin `i` (zero at the Nyquist bin).
    pub fn ikx(&self, i: usize) -> Complex64 {
        if i == self.nx / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 2.0 * PI * wavenumber(i, self.nx) as f64)
        }
    }

    pub fn iky(&self, j: usize) -> Complex64 {
        if j == self.ny / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 2.0 * PI * wavenumber(j, self.ny) as f64)
        }
    }

    /// Multiplier of −Δ_H at bin `(i, j)`: |2πk|², Nyquist included.
    pub fn ksq(&self, i: usize, j: usize) -> f64 {
        let kx = 2.0 * PI * wavenumber(i, self.nx) as f64;
        let ky = 2.0 * PI * wavenumber(j, self.ny) as f64;
        kx * kx + ky * ky
    }

    /// Multiplier of the derivative ∂^a_x ∂^b_y, a + b ≤ 2.
    pub fn deriv_symbol(&self, a: usize, b: usize, i: usize, j: usize) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let fx = match a {
            0 => one,
            1 => self.ikx(i),
            _ => {
                let k = 2.0 * PI * wavenumber(i, self.nx) as f64;
                Complex64::new(-k * k, 0.0)
            }
        };
        let fy = match b {
            0 => one,
            1 => self.iky(j),
            _ => {
                let k = 2.0 * PI * wavenumber(j, self.ny) as f64;
                Complex64::new(-k * k, 0.0)
            }
        };
        fx * fy
    }

    /// Apply a Fourier multiplier to a real horizontal slab.
    pub fn apply_symbol(&self, f: &[f64], sym: impl Fn(usize, usize) -> Complex64) -> Vec<f64> {
        let mut fh = self.fft.forward(f);
        for i in 0..self.nx {
            for j in 0..self.ny {
                fh[i * self.ny + j] *= sym(i, j);
            }
        }
        self.fft.inverse(fh)
    }

    /// ∂^a_x ∂^b_y of a slab.
    pub fn deriv(&self, f: &[f64], a: usize, b: usize) -> Vec<f64> {
        self.apply_symbol(f, |i, j| self.deriv_symbol(a, b, i, j))
    }

    /// All first and second horizontal derivatives from a single forward transform:
    /// `[∂x, ∂y, ∂xx, ∂xy, ∂yy]`.
    pub fn derivs2(&self, f: &[f64]) -> [Vec<f64>; 5] {
        let fh = self.fft.forward(f);
        let pairs = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        pairs.map(|(a, b)| {
            let mut g = fh.clone();
            for i in 0..self.nx {
                for j in 0..self.ny {
                    g[i * self.ny + j] *= self.deriv_symbol(a, b, i, j);
                }
            }
            self.fft.inverse(g)
        })
    }

    pub fn keeps_mode(&self, i: usize, j: usize) -> bool {
        let kx = wavenumber(i, self.nx).unsigned_abs() as usize;
        let ky = wavenumber(j, self.ny).unsigned_abs() as usize;
        3 * kx <= self.nx && 3 * ky <= self.ny && !self.is_nyquist(i, j)
    }

    /// 2/3-rule truncation of a slab.
    pub fn dealias(&self, f: &[f64]) -> Vec<f64> {
        self.apply_symbol(f, |i, j| {
            if self.keeps_mode(i, j) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Horizontal mean of a slab.
    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    fn check2(&self, f: &Field2D) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny {
            return Err(Error::ShapeMismatch(format!(
                "field is {}x{}, grid is {}x{}",
                f.nx, f.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    fn check3(&self, f: &Field3D) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny || f.nz != self.nz {
            return Err(Error::ShapeMismatch(format!(
                "field is {}x{}x{}, grid is {}x{}x{}",
                f.nx, f.ny, f.nz, self.nx, self.ny, self.nz
            )));
        }
        Ok(())
    }
}

pub fn vertical_average(f: &Field3D, g: &Grid) -> Result<Field2D> {
    g.check3(f)?;
    Ok(f.vertical_average(g))
}

/// Horizontal gradient of a scalar surface field.
pub fn gradient_2d(f: &Field2D, g: &Grid) -> Result<Field2D> {
    g.check2(f)?;
    if f.ncomp != 1 {
        return Err(Error::ShapeMismatch("gradient needs a scalar field".into()));
    }
    let mut out = Field2D::zeros(g, 2);
    out.comp_mut(0).copy_from_slice(&g.deriv(f.comp(0), 1, 0));
    out.comp_mut(1).copy_from_slice(&g.deriv(f.comp(0), 0, 1));
    Ok(out)
}

/// Horizontal divergence of a 2-vector surface field.
pub fn divergence_2d(v: &Field2D, g: &Grid) -> Result<Field2D> {
    g.check2(v)?;
    if v.ncomp != 2 {
        return Err(Error::ShapeMismatch("divergence needs a 2-vector field".into()));
    }
    let mut out = Field2D::zeros(g, 1);
    let a = g.deriv(v.comp(0), 1, 0);
    let b = g.deriv(v.comp(1), 0, 1);
    for ((o, x), y) in out.comp_mut(0).iter_mut().zip(&a).zip(&b) {
        *o = x + y;
    }
    Ok(out)
}

/// Horizontal gradient of a scalar 3D field, level by level.
pub fn gradient_3d(f: &Field3D, g: &Grid) -> Result<Field3D> {
    g.check3(f)?;
    if f.ncomp != 1 {
        return Err(Error::ShapeMismatch("gradient needs a scalar field".into()));
    }
    let mut out = Field3D::zeros(g, 2);
    for k in 0..g.nz {
        out.slab_mut(0, k).copy_from_slice(&g.deriv(f.slab(0, k), 1, 0));
        out.slab_mut(1, k).copy_from_slice(&g.deriv(f.slab(0, k), 0, 1));
    }
    Ok(out)
}

pub fn divergence_3d(v: &Field3D, g: &Grid) -> Result<Field3D> {
    g.check3(v)?;
    if v.ncomp != 2 {
        return Err(Error::ShapeMismatch("divergence needs a 2-vector field".into()));
    }
    let mut out = Field3D::zeros(g, 1);
    for k in 0..g.nz {
        let a = g.deriv(v.slab(0, k), 1, 0);
        let b = g.deriv(v.slab(1, k), 0, 1);
        for ((o, x), y) in out.slab_mut(0, k).iter_mut().zip(&a).zip(&b) {
            *o = x + y;
        }
    }
    Ok(out)
}

/// Vertical derivative of every column.
pub fn dz(f: &Field3D, g: &Grid) -> Result<Field3D> {
    g.check3(f)?;
    Ok(f.apply_vertical(g, &g.vert.diff))
}

/// Horizontal RMS norm of a slab computed from its Fourier coefficients.
pub fn spectral_l2(g: &Grid, f: &[f64]) -> f64 {
    let fh = g.fft().forward(f);
    let n = g.nh() as f64;
    (fh.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n)).sqrt()
}

/// Discrete horizontal H¹ norm of a slab: (Σ (1 + |2πk|²)|f̂_k|²)^{1/2} / N.
pub fn h1_slab(g: &Grid, f: &[f64]) -> f64 {
    let fh = g.fft().forward(f);
    let n = g.nh() as f64;
    let mut s = 0.0;
    for i in 0..g.nx {
        for j in 0..g.ny {
            s += (1.0 + g.ksq(i, j)) * fh[i * g.ny + j].norm_sqr();
        }
    }
    (s / (n * n)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_and_endpoints() {
        let g = make_grid(8, 8, 9).unwrap();
        assert_eq!(g.nh() * g.nz, 576);
        assert_eq!(g.z(0), 0.0);
        assert_eq!(g.z(8), 1.0);
        assert!(make_grid(8, 8, 2).is_err());
        assert!(make_grid(6, 3, 5).is_err());
        assert!(make_grid(2, 4, 5).is_err());
    }

    #[test]
    fn wavenumber_convention() {
        let g = make_grid(4, 4, 3).unwrap();
        let k = g.wavenumbers_x();
        assert_eq!(k, vec![0.0, 2.0 * PI, -4.0 * PI, -2.0 * PI]);
    }

    #[test]
    fn sine_derivative() {
        let g = make_grid(16, 8, 3).unwrap();
        let f = Field2D::from_fn(&g, 1, |_, x, _| (2.0 * PI * x).sin());
        let d = gradient_2d(&f, &g).unwrap();
        for i in 0..g.nx {
            for j in 0..g.ny {
                let e = 2.0 * PI * (2.0 * PI * g.x(i)).cos();
                assert!((d.get(0, i, j) - e).abs() < 1e-12);
                assert!(d.get(1, i, j).abs() < 1e-12);
            }
        }
        let v = Field2D::from_fn(&g, 2, |c, x, _| if c == 0 { (2.0 * PI * x).sin() } else { 0.0 });
        let dv = divergence_2d(&v, &g).unwrap();
        assert!(dv.comp(0).iter().zip(d.comp(0)).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn mixed_second_derivative() {
        let g = make_grid(8, 8, 3).unwrap();
        let f = Field2D::from_fn(&g, 1, |_, x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let [_, _, fxx, fxy, _] = g.derivs2(f.comp(0));
        for i in 0..8 {
            for j in 0..8 {
                let (x, y) = (g.x(i), g.y(j));
                let exy = -8.0 * PI * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).sin();
                let exx = -4.0 * PI * PI * (2.0 * PI * x).sin() * (4.0 * PI * y).cos();
                assert!((fxy[i * 8 + j] - exy).abs() < 1e-10);
                assert!((fxx[i * 8 + j] - exx).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn averages() {
        let g = make_grid(4, 4, 9).unwrap();
        let c = Field3D::from_fn(&g, 1, |_, _, _, _| 3.5);
        let z = Field3D::from_fn(&g, 1, |_, _, _, z| z);
        let cz = Field3D::from_fn(&g, 1, |_, _, _, z| (PI * z).cos());
        assert!((vertical_average(&c, &g).unwrap().get(0, 1, 2) - 3.5).abs() < 1e-14);
        assert!((vertical_average(&z, &g).unwrap().get(0, 0, 0) - 0.5).abs() < 1e-14);
        assert!(vertical_average(&cz, &g).unwrap().get(0, 3, 3).abs() < 1e-9);
        let other = make_grid(4, 4, 5).unwrap();
        assert!(vertical_average(&c, &other).is_err());
    }

    #[test]
    fn parseval() {
        let g = make_grid(8, 6, 3).unwrap();
        let f = Field2D::from_fn(&g, 1, |_, x, y| (x * 7.0).sin() + y * y - 0.3);
        let phys = (f.comp(0).iter().map(|v| v * v).sum::<f64>() / g.nh() as f64).sqrt();
        assert!((phys - spectral_l2(&g, f.comp(0))).abs() < 1e-12 * phys);
    }

    #[test]
    fn dealias_removes_high_modes() {
        let g = make_grid(12, 12, 3).unwrap();
        let f = Field2D::from_fn(&g, 1, |_, x, y| (2.0 * PI * x).sin() + (10.0 * PI * y).cos());
        let d = g.dealias(f.comp(0));
        for i in 0..12 {
            assert!((d[i * 12] - (2.0 * PI * g.x(i)).sin()).abs() < 1e-12);
        }
    }
}
