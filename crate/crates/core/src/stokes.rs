//! Resolvent and steady solvers for the compressible hydrostatic Stokes
//! problem, its averaged/elliptic decomposition, and spectral-bound estimates.
//!
//! With constant ξ̄ the operator block-diagonalizes over horizontal Fourier
//! bins; every solve here works bin by bin on blocks of size 1 + 2(nz−1).
//! The discrete kernel of ∇_H consists of the constant and the three
//! Nyquist-only modes of ζ, so "mean-free" surface data means free of those
//! four components.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{h1_slab, Field2D, Field3D, Grid};
use crate::operators::{assemble_chs, LameOperator, LinearOperator};
use crate::transforms::{PhysicalParams, DELTA};

#[derive(Debug, Clone, PartialEq)]
pub struct CField2 {
    pub re: Field2D,
    pub im: Field2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CField3 {
    pub re: Field3D,
    pub im: Field3D,
}

impl CField2 {
    pub fn real(f: Field2D) -> Self {
        let im = f.scaled(0.0);
        Self { re: f, im }
    }
    pub fn l2(&self) -> f64 {
        self.re.l2().hypot(self.im.l2())
    }
    pub fn h1(&self, g: &Grid) -> f64 {
        h1_slab(g, self.re.comp(0)).hypot(h1_slab(g, self.im.comp(0)))
    }
}

impl CField3 {
    pub fn real(f: Field3D) -> Self {
        let im = f.scaled(0.0);
        Self { re: f, im }
    }
    pub fn l2(&self, g: &Grid) -> f64 {
        self.re.l2(g).hypot(self.im.l2(g))
    }
    pub fn h2(&self, g: &Grid) -> f64 {
        h2_norm(g, &self.re).hypot(h2_norm(g, &self.im))
    }
}

/// Discrete H² norm: all horizontal/vertical derivatives up to order two in
/// the quadrature L² norm, horizontal ones via Fourier multipliers.
pub fn h2_norm(g: &Grid, v: &Field3D) -> f64 {
    let nz = g.nz;
    let dzv = v.apply_vertical(g, &g.vert.diff);
    let dzzv = dzv.apply_vertical(g, &g.vert.diff);
    let n2 = (g.nh() * g.nh()) as f64;
    let mut s = 0.0;
    for c in 0..v.ncomp {
        for k in 0..nz {
            let w = g.vert.weights[k];
            let f0 = g.fft().forward(v.slab(c, k));
            let f1 = g.fft().forward(dzv.slab(c, k));
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let p = i * g.ny + j;
                    let k2 = g.ksq(i, j);
                    s += w * (1.0 + k2 + k2 * k2) * f0[p].norm_sqr() / n2;
                    s += w * k2 * f1[p].norm_sqr() / n2;
                }
            }
            let a = dzv.slab(c, k);
            let b = dzzv.slab(c, k);
            s += w * (a.iter().map(|x| x * x).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>())
                / g.nh() as f64;
        }
    }
    s.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFreeDecomposition {
    pub f_m: Field2D,
    pub f_avg: f64,
}

pub fn decompose_mean(f: &Field2D) -> MeanFreeDecomposition {
    let f_avg = f.mean(0);
    MeanFreeDecomposition {
        f_m: f.map(|v| v - f_avg),
        f_avg,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventProblem {
    pub lambda: Complex64,
    pub f1: CField2,
    pub f2: CField3,
    pub xi_bar: f64,
}

impl ResolventProblem {
    pub fn real(lambda: Complex64, f1: Field2D, f2: Field3D) -> Self {
        Self {
            lambda,
            f1: CField2::real(f1),
            f2: CField3::real(f2),
            xi_bar: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub lin_tol: f64,
    pub mean_tol: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            lin_tol: 1e-8,
            mean_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSolution {
    pub zeta: CField2,
    pub v: CField3,
    /// ‖(λ − A)(ζ,V) − f‖ / ‖f‖ with the matrix-free operator.
    pub residual: f64,
}

fn kernel_bin(g: &Grid, i: usize, j: usize) -> bool {
    (i == 0 || i == g.nx / 2) && (j == 0 || j == g.ny / 2)
}

/// Forward transform of a complex field given as real and imaginary parts.
fn fwd(g: &Grid, re: &[f64], im: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
    g.fft().forward_complex(&buf)
}

fn inv(g: &Grid, buf: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
    let c = g.fft().inverse_complex(buf);
    (c.iter().map(|v| v.re).collect(), c.iter().map(|v| v.im).collect())
}

/// Size of the content of a surface field in the four kernel bins, relative
/// to the horizontal mean scale.
fn kernel_content(g: &Grid, fh: &[Complex64]) -> f64 {
    let n = g.nh() as f64;
    let mut m = 0.0f64;
    for i in [0, g.nx / 2] {
        for j in [0, g.ny / 2] {
            m = m.max(fh[i * g.ny + j].norm() / n);
        }
    }
    m
}

fn spectra_v(g: &Grid, f: &CField3) -> Vec<Vec<Complex64>> {
    let n = g.nz - 1;
    let mut out = Vec::with_capacity(2 * n);
    for c in 0..2 {
        for k in 0..n {
            out.push(fwd(g, f.re.slab(c, k), f.im.slab(c, k)));
        }
    }
    out
}

fn assemble_v(g: &Grid, spec: Vec<Vec<Complex64>>) -> CField3 {
    let n = g.nz - 1;
    let mut re = Field3D::zeros(g, 2);
    let mut im = Field3D::zeros(g, 2);
    for (s, buf) in spec.into_iter().enumerate() {
        let (c, k) = (s / n, s % n);
        let (a, b) = inv(g, buf);
        re.slab_mut(c, k).copy_from_slice(&a);
        im.slab_mut(c, k).copy_from_slice(&b);
    }
    CField3 { re, im }
}

/// Solve (λ − A_CHS)(ζ, V) = (f₁, f₂) with the reference density of the problem.
pub fn solve_resolvent(p: &ResolventProblem, g: &Grid, params: &PhysicalParams) -> Result<ResolventSolution> {
    solve_resolvent_with(p, g, params, SolverTolerances::default())
}

pub fn solve_resolvent_with(
    p: &ResolventProblem,
    g: &Grid,
    params: &PhysicalParams,
    tol: SolverTolerances,
) -> Result<ResolventSolution> {
    if p.lambda.re < 0.0 {
        return Err(Error::InvalidParams(format!("need Re λ >= 0, got {}", p.lambda)));
    }
    let op = assemble_chs(p.xi_bar, g, params)?;
    let n = g.nz - 1;
    let f1h = fwd(g, p.f1.re.comp(0), p.f1.im.comp(0));
    let f2h = spectra_v(g, &p.f2);
    let lam0 = p.lambda == Complex64::new(0.0, 0.0);
    if lam0 {
        let m = kernel_content(g, &f1h);
        if m > tol.mean_tol * (1.0 + p.f1.l2()) {
            return Err(Error::Compatibility { mean: m });
        }
    }
    let bins: Vec<(usize, usize)> = (0..g.nx).flat_map(|i| (0..g.ny).map(move |j| (i, j))).collect();
    let sols: Vec<Result<DVector<Complex64>>> = bins
        .par_iter()
        .map(|&(i, j)| {
            let pidx = i * g.ny + j;
            let mut rhs = DVector::<Complex64>::zeros(1 + 2 * n);
            rhs[0] = f1h[pidx];
            for s in 0..2 * n {
                rhs[1 + s] = f2h[s][pidx];
            }
            let mut b = -op.block(i, j)?;
            for d in 0..1 + 2 * n {
                b[(d, d)] += p.lambda;
            }
            if lam0 && kernel_bin(g, i, j) {
                // ζ̂ is fixed to zero; the velocity block decouples.
                let vb = b.view((1, 1), (2 * n, 2 * n)).into_owned();
                let x = vb
                    .lu()
                    .solve(&rhs.rows(1, 2 * n).into_owned())
                    .ok_or_else(|| Error::SolverBreakdown(format!("singular velocity block at bin ({i},{j})")))?;
                let mut out = DVector::zeros(1 + 2 * n);
                out.rows_mut(1, 2 * n).copy_from(&x);
                return Ok(out);
            }
            b.lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SolverBreakdown(format!("singular block at bin ({i},{j})")))
        })
        .collect();
    let mut zh = vec![Complex64::new(0.0, 0.0); g.nh()];
    let mut vh = vec![vec![Complex64::new(0.0, 0.0); g.nh()]; 2 * n];
    for (&(i, j), s) in bins.iter().zip(sols) {
        let s = s?;
        let pidx = i * g.ny + j;
        zh[pidx] = s[0];
        for q in 0..2 * n {
            vh[q][pidx] = s[1 + q];
        }
    }
    let (zr, zi) = inv(g, zh);
    let zeta = CField2 {
        re: Field2D::from_slabs(g, &[&zr]),
        im: Field2D::from_slabs(g, &[&zi]),
    };
    let v = assemble_v(g, vh);
    let residual = resolvent_residual(&op, p, &zeta, &v);
    if !residual.is_finite() || residual > tol.lin_tol.max(1e-6) {
        return Err(Error::SolverBreakdown(format!("resolvent residual {residual:.3e}")));
    }
    Ok(ResolventSolution { zeta, v, residual })
}

/// ‖(λ − A)(ζ,V) − f‖ / ‖f‖ in the Euclidean norm of the reduced state.
pub fn resolvent_residual(op: &LinearOperator, p: &ResolventProblem, zeta: &CField2, v: &CField3) -> f64 {
    let xr = op.pack(Some(&zeta.re), &v.re);
    let xi = op.pack(Some(&zeta.im), &v.im);
    let ar = op.apply(&xr);
    let ai = op.apply(&xi);
    let fr = op.pack(Some(&p.f1.re), &p.f2.re);
    let fi = op.pack(Some(&p.f1.im), &p.f2.im);
    let l = p.lambda;
    let mut num = 0.0;
    let mut den = 0.0;
    for q in 0..xr.len() {
        let rr = l.re * xr[q] - l.im * xi[q] - ar[q] - fr[q];
        let ri = l.re * xi[q] + l.im * xr[q] - ai[q] - fi[q];
        num += rr * rr + ri * ri;
        den += fr[q] * fr[q] + fi[q] * fi[q];
    }
    (num / den.max(1e-300)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedSolution {
    pub zeta: Field2D,
    pub v: Field3D,
    pub iterations: usize,
    pub increment: f64,
}

/// Steady (λ = 0, ξ̄ = 1) solve through the vertically averaged Stokes
/// system and the 3D elliptic problem, coupled by Picard iteration.
///
/// Multiplying the momentum equation by (1 − δz) and applying the discrete
/// vertical average gives, per Fourier bin,
///
/// ```text
/// −μΔ_H V̄ − μ'∇_H div_H V̄ + c_ζ ∇_H ζ = avg_w((1−δz) f₂) + τ(V),   div_H V̄ = f₁,
/// ```
///
/// with c_ζ = Σ_{j<N} w_j(1 − δz_j) and τ(V) = μ Σ_{j<N} w_j (1 − δz_j)(L_β V)_j,
/// the vertical-trace coupling. The elliptic problem −A_HL V = f₂ − ∇_H ζ then
/// recovers V.
pub fn solve_steady_decomposed(f1: &Field2D, f2: &Field3D, g: &Grid, params: &PhysicalParams) -> Result<DecomposedSolution> {
    solve_steady_decomposed_with(f1, f2, g, params, SolverTolerances::default(), 1e-10, 50)
}

pub fn solve_steady_decomposed_with(
    f1: &Field2D,
    f2: &Field3D,
    g: &Grid,
    params: &PhysicalParams,
    tol: SolverTolerances,
    picard_tol: f64,
    max_iter: usize,
) -> Result<DecomposedSolution> {
    let nz = g.nz;
    let n = nz - 1;
    let (mu, mup) = (params.mu, params.mu_prime);
    let f1h = g.fft().forward(f1.comp(0));
    if kernel_content(g, &f1h) > tol.mean_tol * (1.0 + f1.l2()) {
        return Err(Error::Compatibility {
            mean: kernel_content(g, &f1h),
        });
    }
    let lame = LameOperator::gamma1_const(g, mu, mup, 1.0)?;
    let wt: Vec<f64> = (0..n).map(|j| g.vert.weights[j] * (1.0 - DELTA * g.z(j))).collect();
    let c_zeta: f64 = wt.iter().sum();

    // averaged forcing
    let mut avg_f = [vec![0.0; g.nh()], vec![0.0; g.nh()]];
    for (c, a) in avg_f.iter_mut().enumerate() {
        for (j, w) in wt.iter().enumerate() {
            for (o, v) in a.iter_mut().zip(f2.slab(c, j)) {
                *o += w * v;
            }
        }
    }
    let avg_fh = [g.fft().forward(&avg_f[0]), g.fft().forward(&avg_f[1])];
    let f2h: Vec<Vec<Complex64>> = (0..2 * n).map(|s| g.fft().forward(f2.slab(s / n, s % n))).collect();

    // factor the 3D elliptic blocks once
    let bins: Vec<(usize, usize)> = (0..g.nx).flat_map(|i| (0..g.ny).map(move |j| (i, j))).collect();
    let lus: Vec<_> = bins
        .iter()
        .map(|&(i, j)| (-lame.block(g, i, j).expect("constant weight")).lu())
        .collect();

    let mut v = Field3D::zeros(g, 2);
    let mut zeta = Field2D::zeros(g, 1);
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // trace coupling from the current velocity
        let lv = {
            let no_h = LameOperator {
                mu_prime: 0.0,
                hcoef: vec![0.0; nz],
                ..lame.clone()
            };
            no_h.apply_unweighted(g, &v)
        };
        let mut tau = [vec![0.0; g.nh()], vec![0.0; g.nh()]];
        for (c, t) in tau.iter_mut().enumerate() {
            for (j, w) in wt.iter().enumerate() {
                for (o, x) in t.iter_mut().zip(lv.slab(c, j)) {
                    *o += w * x;
                }
            }
        }
        let tauh = [g.fft().forward(&tau[0]), g.fft().forward(&tau[1])];
        // averaged Stokes system, bin by bin
        let mut zh = vec![Complex64::new(0.0, 0.0); g.nh()];
        for &(i, j) in &bins {
            if kernel_bin(g, i, j) {
                continue;
            }
            let p = i * g.ny + j;
            let ik = [g.ikx(i), g.iky(j)];
            let k2 = g.ksq(i, j);
            let s = [
                [g.deriv_symbol(2, 0, i, j), g.deriv_symbol(1, 1, i, j)],
                [g.deriv_symbol(1, 1, i, j), g.deriv_symbol(0, 2, i, j)],
            ];
            let mut m = DMatrix::<Complex64>::zeros(3, 3);
            for a in 0..2 {
                for b in 0..2 {
                    m[(a, b)] = -mup * s[a][b];
                }
                m[(a, a)] += Complex64::new(mu * k2, 0.0);
                m[(a, 2)] = c_zeta * ik[a];
                m[(2, a)] = ik[a];
            }
            let rhs = DVector::from_vec(vec![avg_fh[0][p] + tauh[0][p], avg_fh[1][p] + tauh[1][p], f1h[p]]);
            let x = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SolverBreakdown(format!("averaged Stokes block ({i},{j})")))?;
            zh[p] = x[2];
        }
        let new_zeta = Field2D::from_slabs(g, &[&g.fft().inverse(zh.clone())]);
        // elliptic problem −A V = f₂ − ∇ζ
        let mut vh = vec![vec![Complex64::new(0.0, 0.0); g.nh()]; 2 * n];
        for (b, &(i, j)) in bins.iter().enumerate() {
            let p = i * g.ny + j;
            let ik = [g.ikx(i), g.iky(j)];
            let rhs = DVector::from_fn(2 * n, |s, _| f2h[s][p] - ik[s / n] * zh[p]);
            let x = lus[b]
                .solve(&rhs)
                .ok_or_else(|| Error::SolverBreakdown(format!("elliptic block ({i},{j})")))?;
            for s in 0..2 * n {
                vh[s][p] = x[s];
            }
        }
        let mut new_v = Field3D::zeros(g, 2);
        for (s, buf) in vh.into_iter().enumerate() {
            new_v.slab_mut(s / n, s % n).copy_from_slice(&g.fft().inverse(buf));
        }
        let scale = new_v.max_abs().max(new_zeta.max_abs()).max(1e-300);
        increment = new_v.sub(&v).max_abs().max(new_zeta.sub(&zeta).max_abs()) / scale;
        v = new_v;
        zeta = new_zeta;
        if increment < picard_tol || scale <= 1e-300 {
            break;
        }
    }
    if increment >= picard_tol && v.max_abs() > 0.0 {
        return Err(Error::SolverBreakdown(format!(
            "decomposed solve did not converge: increment {increment:.3e} after {iterations} iterations"
        )));
    }
    Ok(DecomposedSolution {
        zeta,
        v,
        iterations,
        increment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBound {
    pub eta0: f64,
    pub max_re: f64,
    /// Bin (as integer wavenumbers) where the rightmost eigenvalue sits.
    pub argmax_k: (i64, i64),
    pub max_im_at_bound: f64,
    pub ok: bool,
}

/// Largest grids for which the spectral bound is computed.
pub const SPECTRUM_MAX_H: usize = 64;
pub const SPECTRUM_MAX_Z: usize = 33;

/// Eigenvalues of a complex matrix via its real 2× representation; every
/// eigenvalue appears together with its conjugate.
fn eigenvalues_complex(b: &DMatrix<Complex64>) -> Vec<Complex64> {
    let m = b.nrows();
    let real = DMatrix::<f64>::from_fn(2 * m, 2 * m, |r, c| {
        let (br, bc) = (r % m, c % m);
        let z = b[(br, bc)];
        match (r < m, c < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    eigenvalues_real(real).unwrap_or_default()
}

/// Eigenvalues of a real matrix. nalgebra's Schur iteration stalls on the
/// highly degenerate spectra produced by symmetric grids, so faer is used.
fn eigenvalues_real(m: DMatrix<f64>) -> Option<Vec<Complex64>> {
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let ev = f.eigenvalues().ok()?;
    Some(ev.iter().map(|e| Complex64::new(e.re, e.im)).collect())
}

/// Spectral bound of A_CHS on the mean-free subspace, computed bin by bin (an
/// exact unitary block diagonalization of the dense realization).
///
/// Bins carrying a Nyquist index are not part of the resolved state space:
/// there ∂x vanishes while ∂xx does not, which leaves a spurious ζ mode whose
/// damping decays like N⁻². Dealiasing keeps them out of every evolution.
pub fn spectral_bound(g: &Grid, params: &PhysicalParams) -> Result<SpectralBound> {
    if g.nx > SPECTRUM_MAX_H || g.ny > SPECTRUM_MAX_H || g.nz > SPECTRUM_MAX_Z {
        return Err(Error::TooLarge(format!("spectral bound limited to {SPECTRUM_MAX_H}x{SPECTRUM_MAX_H}x{SPECTRUM_MAX_Z}")));
    }
    let op = assemble_chs(params.xi_bar, g, params)?;
    let n = g.nz - 1;
    let bins: Vec<(usize, usize)> = (0..g.nx)
        .flat_map(|i| (0..g.ny).map(move |j| (i, j)))
        .filter(|&(i, j)| !g.is_nyquist(i, j))
        .collect();
    let per_bin: Vec<Result<(f64, f64, (usize, usize))>> = bins
        .par_iter()
        .map(|&(i, j)| {
            let b = op.block(i, j)?;
            // mean bin: ζ̂ decouples with eigenvalue 0, which is deflated
            let b = if (i, j) == (0, 0) {
                b.view((1, 1), (2 * n, 2 * n)).into_owned()
            } else {
                b
            };
            let ev = eigenvalues_complex(&b);
            if ev.is_empty() {
                return Err(Error::SolverBreakdown(format!("Schur iteration failed at bin ({i},{j})")));
            }
            let best = ev
                .iter()
                .copied()
                .fold(Complex64::new(f64::NEG_INFINITY, 0.0), |a, e| if e.re > a.re { e } else { a });
            Ok((best.re, best.im, (i, j)))
        })
        .collect();
    let mut max_re = f64::NEG_INFINITY;
    let mut max_im = 0.0;
    let mut arg = (0, 0);
    for r in per_bin {
        let (re, im, ij) = r?;
        if re > max_re {
            max_re = re;
            max_im = im;
            arg = ij;
        }
    }
    Ok(SpectralBound {
        eta0: -max_re,
        max_re,
        argmax_k: g.k_of(arg.0, arg.1),
        max_im_at_bound: max_im.abs(),
        ok: max_re < 0.0,
    })
}

/// Square roots of the diagonal energy weights: 1 on ζ, (ξ̄ w_k m_k)^{1/2} on V at level k.
fn energy_scaling(op: &LinearOperator) -> Vec<f64> {
    let g = &op.grid;
    let n = g.nz - 1;
    let xi_bar = match op.kind {
        crate::operators::OperatorKind::Chs { xi_bar } => xi_bar,
        crate::operators::OperatorKind::Lame => 1.0,
    };
    let mut sc = vec![1.0; op.dim()];
    let off = op.dim() - 2 * n * g.nh();
    for c in 0..2 {
        for k in 0..n {
            for p in 0..g.nh() {
                let m = op.lame.mass.get(0, k, p / g.ny, p % g.ny);
                sc[off + (c * n + k) * g.nh() + p] = (xi_bar * g.vert.weights[k] * m).sqrt();
            }
        }
    }
    sc
}

/// Orthonormal basis (columns) of the unresolved part of the reduced CHS
/// state: the ζ mean plus every Fourier bin with a Nyquist index, in ζ and
/// in each velocity level.
pub fn unresolved_basis(g: &Grid, dim: usize) -> DMatrix<f64> {
    let nh = g.nh();
    let nslab = dim / nh;
    let (nx, ny) = (g.nx as f64, g.ny as f64);
    let mut slab_vecs: Vec<Vec<f64>> = vec![vec![1.0 / (nh as f64).sqrt(); nh]];
    let alt = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
    // (−1)^i times cos/sin of the y-modes, and the symmetric family
    for j in 0..g.ny {
        let k = wavenumber_real(j, g.ny);
        let mut v = vec![0.0; nh];
        for i in 0..g.nx {
            for jj in 0..g.ny {
                let th = std::f64::consts::TAU * k * jj as f64 / ny;
                v[i * g.ny + jj] = alt(i) * if k >= 0.0 || j == g.ny / 2 { th.cos() } else { th.sin() };
            }
        }
        slab_vecs.push(v);
    }
    for i in 0..g.nx {
        let k = wavenumber_real(i, g.nx);
        if i == g.nx / 2 {
            continue;
        }
        let mut v = vec![0.0; nh];
        for ii in 0..g.nx {
            for j in 0..g.ny {
                let th = std::f64::consts::TAU * k * ii as f64 / nx;
                v[ii * g.ny + j] = alt(j) * if k >= 0.0 { th.cos() } else { th.sin() };
            }
        }
        slab_vecs.push(v);
    }
    let mut cols = Vec::new();
    for s in 0..nslab {
        for (idx, v) in slab_vecs.iter().enumerate() {
            // the mean only counts as unresolved in the ζ slab
            if idx == 0 && s > 0 {
                continue;
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut col = DVector::<f64>::zeros(dim);
            for p in 0..nh {
                col[s * nh + p] = v[p] / nrm;
            }
            cols.push(col);
        }
    }
    DMatrix::from_columns(&cols)
}

fn wavenumber_real(i: usize, n: usize) -> f64 {
    crate::grid::wavenumber(i, n) as f64
}

/// Dense cross-check: eigenvalues of the physical-space realization of
/// A_CHS restricted to the orthogonal complement of the ζ mean and of the
/// Nyquist bins (an invariant splitting, since the realization is circulant).
pub fn spectral_bound_dense(g: &Grid, params: &PhysicalParams) -> Result<SpectralBound> {
    let op = assemble_chs(params.xi_bar, g, params)?;
    let a = op.dense()?;
    let dim = op.dim();
    let k = unresolved_basis(g, dim);
    // complement basis by Gram–Schmidt over the unit vectors
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim - k.ncols());
    let proj = &k * k.transpose();
    for e in 0..dim {
        let mut v = DVector::<f64>::zeros(dim);
        v[e] = 1.0;
        v -= &proj * &v;
        for b in &basis {
            let d = b.dot(&v);
            v.axpy(-d, b, 1.0);
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            basis.push(v / nrm);
        }
        if basis.len() == dim - k.ncols() {
            break;
        }
    }
    // energy-weight similarity: the velocity block becomes symmetric
    let sc = energy_scaling(&op);
    let a = DMatrix::from_fn(dim, dim, |r, c| a[(r, c)] * sc[r] / sc[c]);
    let q = DMatrix::from_columns(&basis);
    let r = q.transpose() * &a * &q;
    let ev = eigenvalues_real(r).ok_or_else(|| Error::SolverBreakdown("dense Schur iteration did not converge".into()))?;
    let best = ev
        .iter()
        .copied()
        .fold(Complex64::new(f64::NEG_INFINITY, 0.0), |a, e| if e.re > a.re { e } else { a });
    Ok(SpectralBound {
        eta0: -best.re,
        max_re: best.re,
        argmax_k: (0, 0),
        max_im_at_bound: best.im.abs(),
        ok: best.re < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub lambda_im: f64,
    pub ratio: f64,
    pub zeta_l2: f64,
    pub v_l2: f64,
    pub v_h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub max_ratio: f64,
    /// log–log slope of ‖V‖ against |λ| over the three largest |λ|.
    pub v_slope: f64,
    /// log–log slope of the ratio over all nonzero |λ| (growth trend).
    pub ratio_slope: f64,
    pub bounded: bool,
}

/// Smooth random right-hand side: low Fourier modes horizontally, low-degree
/// polynomials vertically, mean-free (kernel-free) surface part.
pub fn smooth_random_rhs(g: &Grid, seed: u64) -> (Field2D, Field3D) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for k1 in -2i64..=2 {
        for k2 in -2i64..=2 {
            if (k1, k2) != (0, 0) {
                modes.push((k1 as f64, k2 as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)));
            }
        }
    }
    let surf = |x: f64, y: f64, ms: &[(f64, f64, f64, f64)]| {
        ms.iter()
            .map(|(a, b, amp, ph)| amp * (std::f64::consts::TAU * (a * x + b * y) + ph).cos())
            .sum::<f64>()
    };
    let f1 = Field2D::from_fn(g, 1, |_, x, y| surf(x, y, &modes));
    let coefs: Vec<[f64; 3]> = (0..2)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let m2: Vec<Vec<(f64, f64, f64, f64)>> = (0..2)
        .map(|_| {
            modes
                .iter()
                .map(|(a, b, _, _)| (*a, *b, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    let f2 = Field3D::from_fn(g, 2, |c, x, y, z| {
        let p = coefs[c][0] + coefs[c][1] * z + coefs[c][2] * z * z;
        surf(x, y, &m2[c]) * p + 0.3 * p
    });
    (f1, f2)
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Resolvent sweep along the imaginary axis (λ = 0 included when present).
pub fn imaginary_axis_resolvent_sweep(g: &Grid, params: &PhysicalParams, lambda_im: &[f64], seed: u64) -> Result<SweepReport> {
    let (f1, f2) = smooth_random_rhs(g, seed);
    let scale = h1_slab(g, f1.comp(0)) + f2.l2(g);
    let (f1, f2) = (f1.scaled(1.0 / scale), f2.scaled(1.0 / scale));
    let rhs_norm = h1_slab(g, f1.comp(0)) + f2.l2(g);
    let mut entries = Vec::new();
    for &li in lambda_im {
        let mut p = ResolventProblem::real(Complex64::new(0.0, li), f1.clone(), f2.clone());
        p.xi_bar = params.xi_bar;
        let s = solve_resolvent(&p, g, params)?;
        let zeta_l2 = s.zeta.l2();
        let v_l2 = s.v.l2(g);
        let v_h2 = s.v.h2(g);
        entries.push(SweepEntry {
            lambda_im: li,
            ratio: (zeta_l2 + li.abs() * v_l2 + v_h2) / rhs_norm,
            zeta_l2,
            v_l2,
            v_h2,
        });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let mut big: Vec<&SweepEntry> = entries.iter().filter(|e| e.lambda_im.abs() > 0.0).collect();
    big.sort_by(|a, b| a.lambda_im.abs().partial_cmp(&b.lambda_im.abs()).unwrap());
    let tail: Vec<&SweepEntry> = big.iter().rev().take(3).copied().collect();
    let v_slope = if tail.len() >= 2 {
        let xs: Vec<f64> = tail.iter().map(|e| e.lambda_im.abs().ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|e| e.v_l2.ln()).collect();
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    // growth test: no ratio on iℝ∖{0} exceeds 3× the ratio at the smallest |λ|
    let first = big.first().map(|e| e.ratio).unwrap_or(max_ratio);
    let ratio_slope = if big.len() >= 2 {
        let xs: Vec<f64> = big.iter().map(|e| e.lambda_im.abs().ln()).collect();
        let ys: Vec<f64> = big.iter().map(|e| e.ratio.ln()).collect();
        fit_slope(&xs, &ys)
    } else {
        0.0
    };
    let bounded = entries.iter().all(|e| e.ratio.is_finite()) && big.iter().all(|e| e.ratio <= 3.0 * first) && ratio_slope <= 0.05;
    Ok(SweepReport {
        entries,
        max_ratio,
        v_slope,
        ratio_slope,
        bounded,
    })
}

/// A smooth exact pair (ζ, V) compatible with the boundary conditions and the
/// forcing f = (λ − A)(ζ, V) that reproduces it.
pub fn manufactured_resolvent(
    g: &Grid,
    params: &PhysicalParams,
    lambda: Complex64,
    xi_bar: f64,
) -> Result<(ResolventProblem, Field2D, Field3D)> {
    use std::f64::consts::TAU;
    let op = assemble_chs(xi_bar, g, params)?;
    let zeta = Field2D::from_fn(g, 1, |_, x, y| (TAU * x).cos() * (TAU * y).sin() + 0.3 * (2.0 * TAU * y).cos());
    let vel = Field3D::from_fn(g, 2, |c, x, y, z| {
        let phi = 1.0 - z * z;
        if c == 0 {
            phi * (TAU * y).sin()
        } else {
            phi * ((TAU * (x + y)).cos() + 0.5)
        }
    });
    let (az, av) = op.apply_fields(&zeta, &vel);
    let mut f2re = vel.scaled(lambda.re).sub(&av);
    let mut f2im = vel.scaled(lambda.im);
    for c in 0..2 {
        f2re.slab_mut(c, g.nz - 1).iter_mut().for_each(|s| *s = 0.0);
        f2im.slab_mut(c, g.nz - 1).iter_mut().for_each(|s| *s = 0.0);
    }
    let p = ResolventProblem {
        lambda,
        f1: CField2 {
            re: zeta.scaled(lambda.re).sub(&az),
            im: zeta.scaled(lambda.im),
        },
        f2: CField3 { re: f2re, im: f2im },
        xi_bar,
    };
    Ok((p, zeta, vel))
}
