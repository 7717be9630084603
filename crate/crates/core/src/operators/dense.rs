//! Dense realizations built from closed-form periodic differentiation
//! matrices on the unit interval (even N, cotangent formulas).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{LameOperator, OperatorKind};
use crate::error::Result;
use crate::grid::Grid;

/// First-derivative matrix on N equispaced nodes of [0, 1).
pub fn periodic_d1(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            2.0 * PI * 0.5 * sign / (PI * d / n as f64).tan()
        }
    })
}

/// Second-derivative matrix on N equispaced nodes of [0, 1).
pub fn periodic_d2(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    let s = 4.0 * PI * PI;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            s * (-nf * nf / 12.0 - 1.0 / 6.0)
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let sn = (PI * d / nf).sin();
            -s * 0.5 * sign / (sn * sn)
        }
    })
}

/// Horizontal derivative matrices on the flattened `i * ny + j` index:
/// `[∂x, ∂y, ∂xx, ∂xy, ∂yy]`.
pub fn horizontal_matrices(g: &Grid) -> [DMatrix<f64>; 5] {
    let ix = DMatrix::<f64>::identity(g.nx, g.nx);
    let iy = DMatrix::<f64>::identity(g.ny, g.ny);
    let d1x = periodic_d1(g.nx);
    let d1y = periodic_d1(g.ny);
    let d2x = periodic_d2(g.nx);
    let d2y = periodic_d2(g.ny);
    [
        d1x.kronecker(&iy),
        ix.kronecker(&d1y),
        d2x.kronecker(&iy),
        d1x.kronecker(&d1y),
        ix.kronecker(&d2y),
    ]
}

pub(super) fn assemble(g: &Grid, lame: &LameOperator, kind: OperatorKind) -> DMatrix<f64> {
    let nh = g.nh();
    let nz = g.nz;
    let n = nz - 1;
    let [dx, dy, dxx, dxy, dyy] = horizontal_matrices(g);
    let lap = &dxx + &dyy;
    let off = match kind {
        OperatorKind::Lame => 0,
        OperatorKind::Chs { .. } => nh,
    };
    let dim = off + 2 * n * nh;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let vidx = |c: usize, k: usize, p: usize| off + (c * n + k) * nh + p;
    let gblock = |c: usize, c2: usize| -> &DMatrix<f64> {
        match (c, c2) {
            (0, 0) => &dxx,
            (1, 1) => &dyy,
            _ => &dxy,
        }
    };
    for c in 0..2 {
        for k in 0..n {
            let h = lame.hcoef[k];
            for p in 0..nh {
                let row = vidx(c, k, p);
                let m = lame.mass.get(0, k, p / g.ny, p % g.ny);
                for p2 in 0..nh {
                    a[(row, vidx(c, k, p2))] += h * lame.mu * lap[(p, p2)] / m;
                    for c2 in 0..2 {
                        a[(row, vidx(c2, k, p2))] += h * lame.mu_prime * gblock(c, c2)[(p, p2)] / m;
                    }
                }
                for q in 0..n {
                    a[(row, vidx(c, q, p))] += lame.mu * lame.lz[k * nz + q] / m;
                }
                a[(row, row)] -= lame.omega;
            }
        }
    }
    if let OperatorKind::Chs { xi_bar } = kind {
        let d = [&dx, &dy];
        for c in 0..2 {
            for k in 0..n {
                let w = g.vert.weights[k];
                for p in 0..nh {
                    for p2 in 0..nh {
                        a[(p, vidx(c, k, p2))] -= xi_bar * w * d[c][(p, p2)];
                        a[(vidx(c, k, p), p2)] -= d[c][(p, p2)];
                    }
                }
            }
        }
    }
    a
}

/// Plain-text coordinate-format export (1-based indices).
pub fn write_matrix_market(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), nnz)?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d1_differentiates_trig() {
        let n = 8;
        let d = periodic_d1(n);
        let f = DMatrix::from_fn(n, 1, |i, _| (2.0 * PI * i as f64 / n as f64).sin());
        let df = &d * &f;
        for i in 0..n {
            let e = 2.0 * PI * (2.0 * PI * i as f64 / n as f64).cos();
            assert!((df[(i, 0)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn d2_includes_nyquist() {
        let n = 6;
        let d = periodic_d2(n);
        // cos(π N x) at the nodes is (−1)^i, second derivative −(πN)²(−1)^i
        let f = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let df = &d * &f;
        let k2 = (PI * n as f64).powi(2);
        for i in 0..n {
            assert!((df[(i, 0)] + k2 * f[(i, 0)]).abs() < 1e-9);
        }
    }
}
