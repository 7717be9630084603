//! Hydrostatic Lamé operators and the compressible hydrostatic Stokes block
//! operator.
//!
//! Every Lamé-type operator here has the form `A = m⁻¹ L − ω`, with a positive
//! density weight `m(x,y,z)` and
//!
//! ```text
//! L V = μ h(z) Δ_H V + μ' h(z) ∇_H div_H V + μ ∂z(β(z) ∂z V)
//! ```
//!
//! `L` is symmetric and nonpositive in the quadrature inner product, so `A` is
//! self-adjoint in the `m`-weighted one. Velocity unknowns live on the vertical
//! nodes `0..nz-1`; the top node carries the Dirichlet condition V = 0 and the
//! bottom Neumann condition is built into the vertical operator weakly.

pub mod dense;
pub mod symbol;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field2D, Field3D, Grid};
use crate::transforms::{Model, PhysicalParams, DELTA};

pub use dense::write_matrix_market;
pub use symbol::{lame_symbol_eigs, lame_symbol_eigs_scaled, symbol_ellipticity_report, EllipticityReport, SymbolEigs};

/// Largest grid for which dense realizations are built.
pub const DENSE_MAX_H: usize = 8;
pub const DENSE_MAX_Z: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryConditions {
    /// V = 0 at z = 1, ∂z V = 0 at z = 0, periodic laterally.
    DirichletTopNeumannBottom,
}

#[derive(Debug, Clone)]
pub struct LameOperator {
    pub mu: f64,
    pub mu_prime: f64,
    /// Per-level coefficient h(z_k) of the horizontal part.
    pub hcoef: Vec<f64>,
    /// β(z_k) of the vertical part.
    pub beta: Vec<f64>,
    /// Row-major `nz × nz` realization of ∂z(β ∂z ·); last row zero.
    pub lz: Vec<f64>,
    /// Density weight m > 0 (scalar field).
    pub mass: Field3D,
    pub omega: f64,
}

/// Lamé coefficients of the γ = 1 operator in transformed coordinates:
/// a = 1/((1−δz)ξ₀) and b = (1−δz)/(δ²ξ₀).
pub fn lame_coefficients_gamma1(z: f64, xi0: f64) -> (f64, f64) {
    (1.0 / ((1.0 - DELTA * z) * xi0), (1.0 - DELTA * z) / (DELTA * DELTA * xi0))
}

/// b₁(z) = (1−δz)²/δ².
pub fn b1(z: f64) -> f64 {
    let s = 1.0 - DELTA * z;
    s * s / (DELTA * DELTA)
}

impl LameOperator {
    fn build(g: &Grid, mu: f64, mu_prime: f64, hcoef: Vec<f64>, beta: Vec<f64>, mass: Field3D) -> Result<Self> {
        let m = mass.data.iter().copied().fold(f64::INFINITY, f64::min);
        if !(m > 0.0) {
            return Err(Error::NonpositiveDensity { min: m });
        }
        let lz = g.vert.divergence_form(&beta);
        Ok(Self {
            mu,
            mu_prime,
            hcoef,
            beta,
            lz,
            mass,
            omega: 0.0,
        })
    }

    /// A_HL: m = ξ₀, h = 1/(1−δz), β = (1−δz)/δ².
    pub fn gamma1(g: &Grid, mu: f64, mu_prime: f64, xi0: &Field2D) -> Result<Self> {
        let hcoef = g.vert.nodes.iter().map(|z| 1.0 / (1.0 - DELTA * z)).collect();
        let beta = g.vert.nodes.iter().map(|z| (1.0 - DELTA * z) / (DELTA * DELTA)).collect();
        Self::build(g, mu, mu_prime, hcoef, beta, Field3D::extrude(g, xi0))
    }

    /// A_HL,ξ̄ with constant reference density.
    pub fn gamma1_const(g: &Grid, mu: f64, mu_prime: f64, xi_bar: f64) -> Result<Self> {
        Self::gamma1(g, mu, mu_prime, &Field2D::constant(g, xi_bar))
    }

    /// The γ = 2 operator B = μ c Δ + μ' c ∇_H div_H with c = 1/(ξ₀ + z/2).
    pub fn gamma2(g: &Grid, mu: f64, mu_prime: f64, xi0: &Field2D) -> Result<Self> {
        let mut mass = Field3D::extrude(g, xi0);
        for k in 0..g.nz {
            let z = g.z(k);
            mass.slab_mut(0, k).iter_mut().for_each(|v| *v += 0.5 * z);
        }
        Self::build(g, mu, mu_prime, vec![1.0; g.nz], vec![1.0; g.nz], mass)
    }

    /// Lamé operator of the no-gravity model, ξ₀⁻¹(μΔ + μ'∇_H div_H).
    pub fn no_gravity(g: &Grid, mu: f64, mu_prime: f64, xi0: &Field2D) -> Result<Self> {
        Self::build(g, mu, mu_prime, vec![1.0; g.nz], vec![1.0; g.nz], Field3D::extrude(g, xi0))
    }

    pub fn for_model(g: &Grid, params: &PhysicalParams, xi0: &Field2D) -> Result<Self> {
        match params.model {
            Model::Gamma1 => Self::gamma1(g, params.mu, params.mu_prime, xi0),
            Model::Gamma2 => Self::gamma2(g, params.mu, params.mu_prime, xi0),
            Model::GeneralNoGravity => Self::no_gravity(g, params.mu, params.mu_prime, xi0),
        }
    }

    pub fn with_shift(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Mass profile m(z) when the weight does not vary horizontally.
    pub fn mass_profile(&self) -> Option<Vec<f64>> {
        let mut prof = Vec::with_capacity(self.mass.nz);
        for k in 0..self.mass.nz {
            let s = self.mass.slab(0, k);
            let v = s[0];
            if s.iter().any(|x| (x - v).abs() > 1e-14 * v.abs()) {
                return None;
            }
            prof.push(v);
        }
        Some(prof)
    }

    /// The unweighted operator L, applied with V projected onto V(z=1) = 0;
    /// the boundary level of the output is zero.
    pub fn apply_unweighted(&self, g: &Grid, v: &Field3D) -> Field3D {
        let nz = g.nz;
        let n = nz - 1;
        let nh = g.nh();
        let mut out = Field3D::zeros(g, 2);
        for k in 0..n {
            let h = self.hcoef[k];
            let f1 = g.fft().forward(v.slab(0, k));
            let f2 = g.fft().forward(v.slab(1, k));
            let mut o1 = vec![Complex64::new(0.0, 0.0); nh];
            let mut o2 = vec![Complex64::new(0.0, 0.0); nh];
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let p = i * g.ny + j;
                    let lap = -g.ksq(i, j);
                    let sxx = g.deriv_symbol(2, 0, i, j);
                    let syy = g.deriv_symbol(0, 2, i, j);
                    let sxy = g.deriv_symbol(1, 1, i, j);
                    o1[p] = h * (self.mu * lap * f1[p] + self.mu_prime * (sxx * f1[p] + sxy * f2[p]));
                    o2[p] = h * (self.mu * lap * f2[p] + self.mu_prime * (sxy * f1[p] + syy * f2[p]));
                }
            }
            out.slab_mut(0, k).copy_from_slice(&g.fft().inverse(o1));
            out.slab_mut(1, k).copy_from_slice(&g.fft().inverse(o2));
        }
        for c in 0..2 {
            for k in 0..n {
                for q in 0..n {
                    let l = self.mu * self.lz[k * nz + q];
                    if l == 0.0 {
                        continue;
                    }
                    let src = (c * nz + q) * nh;
                    let dst = (c * nz + k) * nh;
                    for p in 0..nh {
                        out.data[dst + p] += l * v.data[src + p];
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, g: &Grid, v: &Field3D) -> Field3D {
        let mut out = self.apply_unweighted(g, v);
        for (o, m) in out.data.iter_mut().zip(self.mass.data.iter().cycle()) {
            *o /= m;
        }
        if self.omega != 0.0 {
            let nz = g.nz;
            for c in 0..2 {
                for k in 0..nz - 1 {
                    let src = v.slab(c, k).to_vec();
                    for (o, s) in out.slab_mut(c, k).iter_mut().zip(src) {
                        *o -= self.omega * s;
                    }
                }
            }
        }
        out
    }

    /// Fourier block of L at bin `(i, j)` acting on `[V̂₁(z_0..z_{n-1}), V̂₂(…)]`.
    pub fn unweighted_block(&self, g: &Grid, i: usize, j: usize) -> DMatrix<Complex64> {
        let nz = g.nz;
        let n = nz - 1;
        let lap = -g.ksq(i, j);
        let s = [
            [g.deriv_symbol(2, 0, i, j), g.deriv_symbol(1, 1, i, j)],
            [g.deriv_symbol(1, 1, i, j), g.deriv_symbol(0, 2, i, j)],
        ];
        let mut b = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
        for c in 0..2 {
            for k in 0..n {
                let r = c * n + k;
                let h = self.hcoef[k];
                for c2 in 0..2 {
                    b[(r, c2 * n + k)] += h * self.mu_prime * s[c][c2];
                }
                b[(r, r)] += h * self.mu * lap;
                for q in 0..n {
                    b[(r, c * n + q)] += self.mu * self.lz[k * nz + q];
                }
            }
        }
        b
    }

    /// Fourier block of A = m⁻¹L − ω; requires a horizontally constant weight.
    pub fn block(&self, g: &Grid, i: usize, j: usize) -> Result<DMatrix<Complex64>> {
        let prof = self
            .mass_profile()
            .ok_or_else(|| Error::InvalidParams("Fourier blocks need a horizontally constant weight".into()))?;
        let n = g.nz - 1;
        let mut b = self.unweighted_block(g, i, j);
        for c in 0..2 {
            for k in 0..n {
                let r = c * n + k;
                for col in 0..2 * n {
                    b[(r, col)] /= prof[k];
                }
                b[(r, r)] -= Complex64::new(self.omega, 0.0);
            }
        }
        Ok(b)
    }
}

/// A_HL V for the γ = 1 local operator with surface density ξ₀.
pub fn apply_hydrostatic_lame(v: &Field3D, xi0: &Field2D, g: &Grid, params: &PhysicalParams) -> Result<Field3D> {
    if v.nx != g.nx || v.ny != g.ny || v.nz != g.nz || v.ncomp != 2 {
        return Err(Error::ShapeMismatch("velocity must be a 2-vector field on the grid".into()));
    }
    if xi0.nx != g.nx || xi0.ny != g.ny || xi0.ncomp != 1 {
        return Err(Error::ShapeMismatch("xi0 must be a scalar field on the grid".into()));
    }
    let op = LameOperator::gamma1(g, params.mu, params.mu_prime, xi0)?;
    Ok(op.apply(g, v))
}

/// Collocation realization of 𝒜₃ = μ(1−δz)²/δ² ∂zz − μ(1−δz)/δ ∂z on one
/// column (strong form, all nodes).
pub fn apply_a3_column(g: &Grid, mu: f64, col: &[f64]) -> Vec<f64> {
    let nz = g.nz;
    let mut d1 = vec![0.0; nz];
    g.vert.apply(&g.vert.diff, col, &mut d1);
    let mut d2 = vec![0.0; nz];
    g.vert.apply(&g.vert.diff, &d1, &mut d2);
    (0..nz)
        .map(|k| {
            let s = 1.0 - DELTA * g.z(k);
            mu * (s * s / (DELTA * DELTA) * d2[k] - s / DELTA * d1[k])
        })
        .collect()
}

/// Which operator a [`LinearOperator`] realizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Lame,
    /// A_CHS with reference density ξ̄.
    Chs { xi_bar: f64 },
}

/// An assembled operator on the reduced state vector: `[ζ (CHS only), V₁, V₂]`
/// with each velocity component stored level by level for levels `0..nz-1`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub grid: Grid,
    pub lame: LameOperator,
    pub kind: OperatorKind,
    pub bc: BoundaryConditions,
}

impl LinearOperator {
    pub fn lame(g: &Grid, lame: LameOperator) -> Self {
        Self {
            grid: g.clone(),
            lame,
            kind: OperatorKind::Lame,
            bc: BoundaryConditions::DirichletTopNeumannBottom,
        }
    }

    pub fn dim(&self) -> usize {
        let g = &self.grid;
        let nv = 2 * (g.nz - 1) * g.nh();
        match self.kind {
            OperatorKind::Lame => nv,
            OperatorKind::Chs { .. } => g.nh() + nv,
        }
    }

    fn zeta_len(&self) -> usize {
        match self.kind {
            OperatorKind::Lame => 0,
            OperatorKind::Chs { .. } => self.grid.nh(),
        }
    }

    pub fn pack(&self, zeta: Option<&Field2D>, v: &Field3D) -> Vec<f64> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(self.dim());
        if self.zeta_len() > 0 {
            out.extend_from_slice(zeta.expect("CHS state needs zeta").comp(0));
        }
        for c in 0..2 {
            for k in 0..g.nz - 1 {
                out.extend_from_slice(v.slab(c, k));
            }
        }
        out
    }

    pub fn unpack(&self, x: &[f64]) -> (Field2D, Field3D) {
        let g = &self.grid;
        let nh = g.nh();
        let off = self.zeta_len();
        let mut zeta = Field2D::zeros(g, 1);
        if off > 0 {
            zeta.comp_mut(0).copy_from_slice(&x[..nh]);
        }
        let mut v = Field3D::zeros(g, 2);
        let n = g.nz - 1;
        for c in 0..2 {
            for k in 0..n {
                let s = off + (c * n + k) * nh;
                v.slab_mut(c, k).copy_from_slice(&x[s..s + nh]);
            }
        }
        (zeta, v)
    }

    /// Matrix-free application on field arguments.
    pub fn apply_fields(&self, zeta: &Field2D, v: &Field3D) -> (Field2D, Field3D) {
        let g = &self.grid;
        let mut av = self.lame.apply(g, v);
        match self.kind {
            OperatorKind::Lame => (Field2D::zeros(g, 1), av),
            OperatorKind::Chs { xi_bar } => {
                let vbar = v.vertical_average(g);
                let div = crate::grid::divergence_2d(&vbar, g).expect("shape");
                let grad = crate::grid::gradient_2d(zeta, g).expect("shape");
                for c in 0..2 {
                    for k in 0..g.nz - 1 {
                        for (o, d) in av.slab_mut(c, k).iter_mut().zip(grad.comp(c)) {
                            *o -= d;
                        }
                    }
                }
                (div.scaled(-xi_bar), av)
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (zeta, mut v) = self.unpack(x);
        let n = self.grid.nz - 1;
        for c in 0..2 {
            v.slab_mut(c, n).iter_mut().for_each(|s| *s = 0.0);
        }
        let (z, av) = self.apply_fields(&zeta, &v);
        self.pack(Some(&z), &av)
    }

    /// Dense realization assembled from the closed-form periodic
    /// differentiation matrices (independent of the FFT path).
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let g = &self.grid;
        if g.nx > DENSE_MAX_H || g.ny > DENSE_MAX_H || g.nz > DENSE_MAX_Z {
            return Err(Error::TooLarge(format!(
                "dense realization limited to {DENSE_MAX_H}x{DENSE_MAX_H}x{DENSE_MAX_Z}, grid is {}x{}x{}",
                g.nx, g.ny, g.nz
            )));
        }
        Ok(dense::assemble(g, &self.lame, self.kind))
    }

    /// Fourier block at bin `(i, j)`; index 0 is ζ̂ for CHS.
    pub fn block(&self, i: usize, j: usize) -> Result<DMatrix<Complex64>> {
        let g = &self.grid;
        let a = self.lame.block(g, i, j)?;
        match self.kind {
            OperatorKind::Lame => Ok(a),
            OperatorKind::Chs { xi_bar } => {
                let n = g.nz - 1;
                let mut b = DMatrix::<Complex64>::zeros(1 + 2 * n, 1 + 2 * n);
                b.view_mut((1, 1), (2 * n, 2 * n)).copy_from(&a);
                let ik = [g.ikx(i), g.iky(j)];
                for c in 0..2 {
                    for k in 0..n {
                        b[(0, 1 + c * n + k)] = -xi_bar * g.vert.weights[k] * ik[c];
                        b[(1 + c * n + k, 0)] = -ik[c];
                    }
                }
                Ok(b)
            }
        }
    }
}

/// A_CHS with reference density ξ̄ and the γ = 1 Lamé block.
pub fn assemble_chs(xi_bar: f64, g: &Grid, params: &PhysicalParams) -> Result<LinearOperator> {
    if !(xi_bar > 0.0) {
        return Err(Error::InvalidParams(format!("xi_bar must be > 0, got {xi_bar}")));
    }
    let lame = LameOperator::gamma1_const(g, params.mu, params.mu_prime, xi_bar)?;
    Ok(LinearOperator {
        grid: g.clone(),
        lame,
        kind: OperatorKind::Chs { xi_bar },
        bc: BoundaryConditions::DirichletTopNeumannBottom,
    })
}

#[cfg(test)]
mod tests;
