//! Time integration in hydrostatic Lagrangian coordinates.
//!
//! State: surface density ζ(t,y) (total for local modes, perturbation of ξ̄
//! for the global mode), velocity V(t,y,z) and the flow map X(t,·). One step
//! is first-order IMEX: the linear operator implicit, F1/F2 explicit at the
//! old time with the inertia term lagged by one step.

pub mod nonlinear;

#[cfg(test)]
mod tests;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DensityBounds, InitialData, RunConfig};
use crate::diagnostics::{self, EnergyReport};
use crate::error::{Error, Result};
use crate::flowmap::{advance_lagrangian, check_invertibility, compose_2d, compose_3d, invert_map, FlowMap, FlowTolerances};
use crate::grid::{h1_slab, Field2D, Field3D, Grid};
use crate::operators::{assemble_chs, LameOperator};
use crate::transforms::{density_transformed, Model, PhysicalParams};

pub use nonlinear::{
    nonlinearity_f1, nonlinearity_f1_terms, nonlinearity_f2, nonlinearity_f2_terms, reconstruct_w, surface_density,
    EvalOptions, F1Terms, F2Terms, Mutation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    LocalGamma1,
    LocalGamma2,
    GlobalGamma1,
    GeneralNoGravity,
}

impl Mode {
    pub fn model(self) -> Model {
        match self {
            Self::LocalGamma1 | Self::GlobalGamma1 => Model::Gamma1,
            Self::LocalGamma2 => Model::Gamma2,
            Self::GeneralNoGravity => Model::GeneralNoGravity,
        }
    }

    pub fn is_global(self) -> bool {
        self == Self::GlobalGamma1
    }
}

#[derive(Debug, Clone)]
pub struct LagrangianState {
    pub zeta: Field2D,
    pub v: Field3D,
    pub fm: FlowMap,
    pub t: f64,
    pub mode: Mode,
    /// Reference surface density of the linearization (ξ̄ for the global mode).
    pub xi0: Field2D,
    /// Lagged Lagrangian ∂tV.
    pub dtv: Field3D,
    pub steps: usize,
}

impl LagrangianState {
    /// State at t = 0 with the identity map; for local modes the reference
    /// density is the initial ζ.
    pub fn new(g: &Grid, mode: Mode, zeta: Field2D, v: Field3D, params: &PhysicalParams, tol: FlowTolerances) -> Self {
        let xi0 = if mode.is_global() {
            Field2D::constant(g, params.xi_bar)
        } else {
            zeta.clone()
        };
        Self {
            zeta,
            v,
            fm: FlowMap::identity_with(g, tol),
            t: 0.0,
            mode,
            xi0,
            dtv: Field3D::zeros(g, 2),
            steps: 0,
        }
    }

    /// ξ as a total surface density.
    pub fn total_density(&self, params: &PhysicalParams) -> Field2D {
        surface_density(self, params)
    }

    pub fn is_finite(&self) -> bool {
        self.zeta.is_finite() && self.v.is_finite() && self.fm.disp.is_finite() && self.fm.grad.is_finite()
    }
}

/// Vertical shape of the preset velocities: φ(0)' = 0, φ(1) = 0.
fn phi(z: f64) -> f64 {
    1.0 - z * z
}

/// Initial state for a preset. Local modes take ξ̄ as the base density.
pub fn initial_state(g: &Grid, params: &PhysicalParams, mode: Mode, init: &InitialData, tol: FlowTolerances) -> Result<LagrangianState> {
    let base = if mode.is_global() { 0.0 } else { params.xi_bar };
    let (zeta, v) = match *init {
        InitialData::Steady => (Field2D::constant(g, base), Field3D::zeros(g, 2)),
        InitialData::FourierPerturbation {
            amplitude,
            mode: k,
            velocity_scale,
        } => {
            let theta = |i: usize, j: usize| TAU * (k[0] as f64 * g.x(i) + k[1] as f64 * g.y(j));
            let zeta = Field2D::from_fn(g, 1, |_, x, y| {
                base + amplitude * (TAU * (k[0] as f64 * x + k[1] as f64 * y)).cos()
            });
            let mut v = Field3D::zeros(g, 2);
            for kz in 0..g.nz - 1 {
                let s = velocity_scale * amplitude * phi(g.z(kz));
                for i in 0..g.nx {
                    for j in 0..g.ny {
                        let th = theta(i, j);
                        v.set(0, kz, i, j, s * th.sin());
                        v.set(1, kz, i, j, s * th.cos());
                    }
                }
            }
            (zeta, v)
        }
        InitialData::RandomSmooth {
            amplitude,
            seed,
            velocity_scale,
        } => random_smooth(g, base, amplitude, seed, velocity_scale),
    };
    let mut zeta = zeta;
    let mut v = v;
    dealias_state(g, &mut zeta, &mut v);
    if !mode.is_global() {
        let (lo, hi) = (zeta.min(), zeta.max());
        if lo < params.m1 || hi > params.m2 {
            return Err(Error::Config(format!(
                "initial density range [{lo}, {hi}] is outside [m1, m2] = [{}, {}]",
                params.m1, params.m2
            )));
        }
    } else if params.xi_bar + zeta.min() < 0.5 * params.xi_bar {
        return Err(Error::Config(format!(
            "initial density perturbation {} takes xi below xi_bar/2",
            zeta.min()
        )));
    }
    check_boundary_compatibility(g, &v)?;
    Ok(LagrangianState::new(g, mode, zeta, v, params, tol))
}

/// Initial velocity must vanish on the top boundary and have zero normal
/// derivative at the bottom.
fn check_boundary_compatibility(g: &Grid, v: &Field3D) -> Result<()> {
    let scale = v.max_abs().max(1.0);
    let top = (0..2).flat_map(|c| v.slab(c, g.nz - 1).iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let vz = v.apply_vertical(g, &g.vert.diff);
    let bottom = (0..2).flat_map(|c| vz.slab(c, 0).iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if top > 1e-12 * scale {
        return Err(Error::Config(format!("initial velocity is {top:e} on the top boundary, must vanish")));
    }
    if bottom > 1e-8 * scale {
        return Err(Error::Config(format!("initial velocity has vertical derivative {bottom:e} at the bottom, must vanish")));
    }
    Ok(())
}

/// Sum of Fourier modes with |k₁|,|k₂| ≤ 2, scaled so max |ζ − base| = amp.
fn random_smooth(g: &Grid, base: f64, amp: f64, seed: u64, vscale: f64) -> (Field2D, Field3D) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64, f64, f64)> {
        let mut terms = Vec::new();
        for k1 in -2i64..=2 {
            for k2 in -2i64..=2 {
                if (k1, k2) == (0, 0) || 3 * k1.unsigned_abs() as usize > g.nx || 3 * k2.unsigned_abs() as usize > g.ny {
                    continue;
                }
                terms.push((k1 as f64, k2 as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)));
            }
        }
        terms
    };
    let eval = |terms: &[(f64, f64, f64, f64)], x: f64, y: f64| {
        terms.iter().map(|&(a, b, c, ph)| c * (TAU * (a * x + b * y) + ph).cos()).sum::<f64>()
    };
    let tz = draw(&mut rng);
    let tv = [draw(&mut rng), draw(&mut rng)];
    let mut zeta = Field2D::from_fn(g, 1, |_, x, y| eval(&tz, x, y));
    let s = zeta.max_abs();
    if s > 0.0 {
        zeta = zeta.map(|z| base + amp * z / s);
    }
    let mut v = Field3D::zeros(g, 2);
    for c in 0..2 {
        let raw = Field2D::from_fn(g, 1, |_, x, y| eval(&tv[c], x, y));
        let s = raw.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..g.nz - 1 {
            let f = vscale * amp * phi(g.z(k)) / s;
            for (o, r) in v.slab_mut(c, k).iter_mut().zip(raw.comp(0)) {
                *o = f * r;
            }
        }
    }
    (zeta, v)
}

fn dealias_state(g: &Grid, zeta: &mut Field2D, v: &mut Field3D) {
    let d = g.dealias(zeta.comp(0));
    zeta.comp_mut(0).copy_from_slice(&d);
    for c in 0..2 {
        for k in 0..g.nz {
            let d = if k == g.nz - 1 {
                vec![0.0; g.nh()]
            } else {
                g.dealias(v.slab(c, k))
            };
            v.slab_mut(c, k).copy_from_slice(&d);
        }
    }
}

/// Eulerian fields recovered through Y = X⁻¹.
#[derive(Debug, Clone)]
pub struct EulerianFields {
    /// Total surface density ξ.
    pub xi: Field2D,
    pub v: Field3D,
    pub w: Field3D,
    /// Density in simulation coordinates.
    pub rho: Field3D,
}

pub fn pull_back(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> Result<EulerianFields> {
    let y = invert_map(g, &st.fm)?;
    let xi = compose_2d(g, &st.total_density(params), &y)?;
    let v = compose_3d(g, &st.v, &y)?;
    let w = compose_3d(g, &reconstruct_w(st, g, params)?, &y)?;
    let rho = density_transformed(&xi, g, params)?;
    Ok(EulerianFields { xi, v, w, rho })
}

type BinLu = LU<Complex64, Dyn, Dyn>;

/// Per-bin factorizations and the linear operator used by one mode.
#[derive(Debug)]
enum Implicit {
    /// (m − dt L) V = rhs by preconditioned CG in the quadrature inner product.
    Local { lame: LameOperator, precond: Vec<BinLu> },
    /// (I − dt B) per Fourier bin.
    Global { lu: Vec<BinLu> },
}

#[derive(Debug)]
pub struct Stepper {
    pub grid: Grid,
    pub params: PhysicalParams,
    pub mode: Mode,
    pub dt: f64,
    pub lin_tol: f64,
    pub max_iter: usize,
    implicit: Implicit,
    /// PCG iterations used by the last local step.
    pub last_iterations: usize,
}

impl Stepper {
    pub fn new(g: &Grid, params: &PhysicalParams, st: &LagrangianState, dt: f64, lin_tol: f64, max_iter: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
        }
        if params.model != st.mode.model() {
            return Err(Error::InvalidParams(format!("mode {:?} needs model {:?}", st.mode, st.mode.model())));
        }
        let n = g.nz - 1;
        let bins: Vec<(usize, usize)> = (0..g.nx).flat_map(|i| (0..g.ny).map(move |j| (i, j))).collect();
        let implicit = if st.mode.is_global() {
            let op = assemble_chs(params.xi_bar, g, params)?;
            let lu = bins
                .par_iter()
                .map(|&(i, j)| {
                    let mut b = op.block(i, j)?;
                    for r in 1..1 + 2 * n {
                        b[(r, 0)] /= params.xi_bar;
                    }
                    let m = DMatrix::<Complex64>::identity(1 + 2 * n, 1 + 2 * n) - b * Complex64::new(dt, 0.0);
                    Ok(m.lu())
                })
                .collect::<Result<Vec<_>>>()?;
            Implicit::Global { lu }
        } else {
            let lame = LameOperator::for_model(g, params, &st.xi0)?;
            let mbar: Vec<f64> = (0..n).map(|k| g.mean(lame.mass.slab(0, k))).collect();
            let precond = bins
                .par_iter()
                .map(|&(i, j)| {
                    let mut m = lame.unweighted_block(g, i, j) * Complex64::new(-dt, 0.0);
                    for c in 0..2 {
                        for k in 0..n {
                            m[(c * n + k, c * n + k)] += mbar[k];
                        }
                    }
                    m.lu()
                })
                .collect();
            Implicit::Local { lame, precond }
        };
        Ok(Self {
            grid: g.clone(),
            params: params.clone(),
            mode: st.mode,
            dt,
            lin_tol,
            max_iter,
            implicit,
            last_iterations: 0,
        })
    }

    /// Advance one step.
    pub fn step(&mut self, st: &LagrangianState) -> Result<LagrangianState> {
        let g = &self.grid;
        let dt = self.dt;
        let n = g.nz - 1;
        let f1 = nonlinearity_f1(st, g, &self.params)?;
        let f2 = nonlinearity_f2(st, &st.dtv, g, &self.params)?;
        let (mut zeta, mut v) = match &self.implicit {
            Implicit::Global { lu } => {
                let zh = g.fft().forward(&st.zeta.comp(0).iter().zip(f1.comp(0)).map(|(z, f)| z + dt * f).collect::<Vec<_>>());
                let vh: Vec<Vec<Complex64>> = (0..2 * n)
                    .map(|s| {
                        let (c, k) = (s / n, s % n);
                        let r: Vec<f64> = st.v.slab(c, k).iter().zip(f2.slab(c, k)).map(|(a, b)| a + dt * b).collect();
                        g.fft().forward(&r)
                    })
                    .collect();
                let sols: Vec<DVector<Complex64>> = lu
                    .par_iter()
                    .enumerate()
                    .map(|(p, f)| {
                        let mut rhs = DVector::<Complex64>::zeros(1 + 2 * n);
                        rhs[0] = zh[p];
                        for s in 0..2 * n {
                            rhs[1 + s] = vh[s][p];
                        }
                        f.solve(&rhs).unwrap_or_else(|| DVector::from_element(1 + 2 * n, Complex64::new(f64::NAN, 0.0)))
                    })
                    .collect();
                let mut zeta = Field2D::zeros(g, 1);
                let buf: Vec<Complex64> = sols.iter().map(|s| s[0]).collect();
                zeta.comp_mut(0).copy_from_slice(&g.fft().inverse(buf));
                let mut v = Field3D::zeros(g, 2);
                for s in 0..2 * n {
                    let buf: Vec<Complex64> = sols.iter().map(|x| x[1 + s]).collect();
                    v.slab_mut(s / n, s % n).copy_from_slice(&g.fft().inverse(buf));
                }
                (zeta, v)
            }
            Implicit::Local { lame, precond } => {
                let mut rhs = st.v.clone();
                rhs.axpy(dt, &f2);
                for c in 0..2 {
                    for k in 0..n {
                        let m = lame.mass.slab(0, k);
                        rhs.slab_mut(c, k).iter_mut().zip(m).for_each(|(r, m)| *r *= m);
                    }
                    rhs.slab_mut(c, n).iter_mut().for_each(|r| *r = 0.0);
                }
                let (v, iters) = pcg(g, lame, precond, dt, &rhs, &st.v, self.lin_tol, self.max_iter)?;
                self.last_iterations = iters;
                let vbar = v.vertical_average(g);
                let div: Vec<f64> = {
                    let a = g.deriv(vbar.comp(0), 1, 0);
                    let b = g.deriv(vbar.comp(1), 0, 1);
                    a.iter().zip(&b).map(|(x, y)| x + y).collect()
                };
                let prod: Vec<f64> = st.xi0.comp(0).iter().zip(&div).map(|(x, d)| x * d).collect();
                let mut lin = g.dealias(&prod);
                lin.iter_mut().for_each(|x| *x = -*x);
                if self.mode == Mode::LocalGamma2 {
                    for k in 0..n {
                        let wz = 0.5 * g.vert.weights[k] * g.z(k);
                        let a = g.deriv(v.slab(0, k), 1, 0);
                        let b = g.deriv(v.slab(1, k), 0, 1);
                        for p in 0..g.nh() {
                            lin[p] -= wz * (a[p] + b[p]);
                        }
                    }
                }
                let mut zeta = st.zeta.clone();
                for (p, z) in zeta.comp_mut(0).iter_mut().enumerate() {
                    *z += dt * (lin[p] + f1.data[p]);
                }
                (zeta, v)
            }
        };
        dealias_state(g, &mut zeta, &mut v);
        let vbar_old = st.v.vertical_average(g);
        let vbar_new = v.vertical_average(g);
        let fm = advance_lagrangian(g, &st.fm, &vbar_old, &vbar_new, dt)?;
        let dtv = v.sub(&st.v).scaled(1.0 / dt);
        Ok(LagrangianState {
            zeta,
            v,
            fm,
            t: st.t + dt,
            mode: st.mode,
            xi0: st.xi0.clone(),
            dtv,
            steps: st.steps + 1,
        })
    }
}

/// Apply the per-bin preconditioner to levels 0..n−1.
fn precondition(g: &Grid, lus: &[BinLu], r: &Field3D) -> Field3D {
    let n = g.nz - 1;
    let spec: Vec<Vec<Complex64>> = (0..2 * n).map(|s| g.fft().forward(r.slab(s / n, s % n))).collect();
    let sols: Vec<DVector<Complex64>> = lus
        .par_iter()
        .enumerate()
        .map(|(p, f)| {
            let rhs = DVector::from_iterator(2 * n, spec.iter().map(|s| s[p]));
            f.solve(&rhs).unwrap_or(rhs)
        })
        .collect();
    let mut out = Field3D::zeros(g, 2);
    for s in 0..2 * n {
        let buf: Vec<Complex64> = sols.iter().map(|x| x[s]).collect();
        out.slab_mut(s / n, s % n).copy_from_slice(&g.fft().inverse(buf));
    }
    out
}

fn implicit_apply(g: &Grid, lame: &LameOperator, dt: f64, v: &Field3D) -> Field3D {
    let mut out = lame.apply_unweighted(g, v).scaled(-dt);
    let n = g.nz - 1;
    for c in 0..2 {
        for k in 0..n {
            let m = lame.mass.slab(0, k);
            let src = v.slab(c, k);
            for ((o, m), s) in out.slab_mut(c, k).iter_mut().zip(m).zip(src) {
                *o += m * s;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn pcg(
    g: &Grid,
    lame: &LameOperator,
    lus: &[BinLu],
    dt: f64,
    b: &Field3D,
    x0: &Field3D,
    tol: f64,
    max_iter: usize,
) -> Result<(Field3D, usize)> {
    let bnorm = b.l2(g);
    if bnorm == 0.0 {
        return Ok((Field3D::zeros(g, 2), 0));
    }
    let mut x = x0.clone();
    let mut r = b.sub(&implicit_apply(g, lame, dt, &x));
    let mut z = precondition(g, lus, &r);
    let mut p = z.clone();
    let mut rz = r.dot(&z, g);
    for it in 0..=max_iter {
        let rn = r.l2(g);
        if !rn.is_finite() {
            return Err(Error::SolverBreakdown("non-finite residual in the implicit velocity solve".into()));
        }
        if rn <= tol * bnorm {
            return Ok((x, it));
        }
        if it == max_iter {
            break;
        }
        let ap = implicit_apply(g, lame, dt, &p);
        let pap = p.dot(&ap, g);
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown(format!("implicit operator lost positivity (pAp = {pap:e})")));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        z = precondition(g, lus, &r);
        let rz_new = r.dot(&z, g);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.add(&p.scaled(beta));
    }
    Err(Error::SolverBreakdown(format!(
        "PCG did not reach {tol:e} in {max_iter} iterations (residual {:e})",
        r.l2(g) / bnorm
    )))
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    PositivityLost,
    MapNoninvertible,
    Blowup,
}

impl Termination {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Completed => 0,
            Self::PositivityLost => 3,
            Self::MapNoninvertible => 4,
            Self::Blowup => 5,
        }
    }
}

/// One row of the time series. Columns are written in declaration order
/// with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    /// |mass − mass(0)| / mass(0).
    pub mass_drift: f64,
    pub energy: f64,
    pub dissipation_rate: f64,
    /// ∫₀ᵗ D, right-endpoint rule.
    pub dissipation_integral: f64,
    /// E(t) + ∫₀ᵗ D − E(0).
    pub energy_residual: f64,
    /// Discrete H¹ norm of ζ − ⟨ζ⟩.
    pub zeta_m_h1: f64,
    pub v_l2: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub min_det: f64,
    pub map_deviation: f64,
    /// See [`perturbation_amplitude`].
    pub amplitude: f64,
}

impl StepRecord {
    pub const HEADER: &'static str = "step,t,mass,mass_drift,energy,dissipation_rate,dissipation_integral,energy_residual,zeta_m_h1,v_l2,xi_min,xi_max,min_det,map_deviation,amplitude";

    pub fn csv_row(&self) -> String {
        let mut out = self.step.to_string();
        for x in [
            self.t,
            self.mass,
            self.mass_drift,
            self.energy,
            self.dissipation_rate,
            self.dissipation_integral,
            self.energy_residual,
            self.zeta_m_h1,
            self.v_l2,
            self.xi_min,
            self.xi_max,
            self.min_det,
            self.map_deviation,
            self.amplitude,
        ] {
            out.push_str(&format!(",{x:.16e}"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub termination: Termination,
    pub message: Option<String>,
    pub records: Vec<StepRecord>,
    pub warnings: Vec<String>,
    pub steps: usize,
    pub t_final: f64,
    #[serde(skip)]
    pub final_state: Option<LagrangianState>,
}

impl RunResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(StepRecord::HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    /// (t, amplitude) pairs of the recorded series.
    pub fn amplitude_series(&self) -> (Vec<f64>, Vec<f64>) {
        self.records.iter().map(|r| (r.t, r.amplitude)).unzip()
    }
}

/// Perturbation size √(‖ζ − ⟨ζ⟩‖² + c‖V‖²) with c = ξ̄² for the global mode
/// (its energy norm) and c = 1 otherwise.
pub fn perturbation_amplitude(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> f64 {
    let z = st.zeta.comp(0);
    let m = g.mean(z);
    let zz = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / g.nh() as f64;
    let c = if st.mode.is_global() { params.xi_bar * params.xi_bar } else { 1.0 };
    let vv = st.v.dot(&st.v, g);
    (zz + c * vv).sqrt()
}

fn check_bounds(st: &LagrangianState, params: &PhysicalParams, b: DensityBounds) -> Option<String> {
    let xi = st.total_density(params);
    let (lo, hi) = (xi.min(), xi.max());
    if lo < b.lower || hi > b.upper {
        Some(format!("density range [{lo:.6e}, {hi:.6e}] left [{}, {}] at t = {}", b.lower, b.upper, st.t))
    } else {
        None
    }
}

struct Tracker {
    mass0: f64,
    energy0: f64,
    dissipated: f64,
}

fn record(
    st: &LagrangianState,
    g: &Grid,
    params: &PhysicalParams,
    energy: &EnergyReport,
    tr: &Tracker,
) -> StepRecord {
    let mass = diagnostics::lagrangian_mass(st, g, params);
    let xi = st.total_density(params);
    let inv = check_invertibility(&st.fm);
    let zm: Vec<f64> = {
        let z = st.zeta.comp(0);
        let m = g.mean(z);
        z.iter().map(|x| x - m).collect()
    };
    StepRecord {
        step: st.steps,
        t: st.t,
        mass,
        mass_drift: (mass - tr.mass0).abs() / tr.mass0.abs().max(f64::MIN_POSITIVE),
        energy: energy.total(),
        dissipation_rate: energy.dissipation,
        dissipation_integral: tr.dissipated,
        energy_residual: energy.total() + tr.dissipated - tr.energy0,
        zeta_m_h1: h1_slab(g, &zm),
        v_l2: st.v.l2(g),
        xi_min: xi.min(),
        xi_max: xi.max(),
        min_det: inv.min_det,
        map_deviation: inv.supnorm_dev,
        amplitude: perturbation_amplitude(st, g, params),
    }
}

fn classify(e: &Error) -> Option<Termination> {
    match e {
        Error::MapNoninvertible { .. } | Error::SingularJacobian { .. } | Error::InversionFailed { .. } => {
            Some(Termination::MapNoninvertible)
        }
        Error::NonpositiveDensity { .. } => Some(Termination::PositivityLost),
        Error::SolverBreakdown(_) => Some(Termination::Blowup),
        _ => None,
    }
}

/// Threshold beyond which a finite state is still treated as blown up.
const BLOWUP_LIMIT: f64 = 1e8;

/// Run a configured simulation and collect the time series. Physical
/// terminal conditions end the run cleanly; configuration and I/O problems
/// are errors.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunResult> {
    run_simulation_with(cfg, |_, _| Ok(()))
}

/// [`run_simulation`] calling `observe` on every recorded state.
pub fn run_simulation_with(
    cfg: &RunConfig,
    mut observe: impl FnMut(&LagrangianState, &StepRecord) -> Result<()>,
) -> Result<RunResult> {
    cfg.validate()?;
    let g = cfg.grid()?;
    let params = &cfg.params;
    let tol = FlowTolerances {
        det_floor: cfg.tolerances.det_floor,
        inv_tol: cfg.tolerances.inv_tol,
        max_iter: 50,
    };
    let mut st = initial_state(&g, params, cfg.mode, &cfg.initial, tol)?;
    let bounds = cfg.density_bounds();
    let mut stepper = Stepper::new(&g, params, &st, cfg.dt, cfg.tolerances.lin_tol, cfg.tolerances.max_iter)?;
    let nsteps = (cfg.t_end / cfg.dt).round() as usize;
    let mut warnings = Vec::new();
    let e0 = diagnostics::energy_of_state(&st, &g, params)?;
    let mut tr = Tracker {
        mass0: diagnostics::lagrangian_mass(&st, &g, params),
        energy0: e0.total(),
        dissipated: 0.0,
    };
    let mut records = vec![record(&st, &g, params, &e0, &tr)];
    observe(&st, &records[0])?;
    let mut termination = Termination::Completed;
    let mut message = None;
    let mut cfl_warned = false;
    let h = 1.0 / g.nx.max(g.ny) as f64;
    for _ in 0..nsteps {
        let next = match stepper.step(&st) {
            Ok(s) => s,
            Err(e) => match classify(&e) {
                Some(t) => {
                    termination = t;
                    message = Some(e.to_string());
                    break;
                }
                None => return Err(e),
            },
        };
        if !next.is_finite() || next.v.max_abs() > BLOWUP_LIMIT || next.zeta.max_abs() > BLOWUP_LIMIT {
            termination = Termination::Blowup;
            message = Some(format!("non-finite or unbounded state at t = {}", next.t));
            break;
        }
        if let Some(m) = check_bounds(&next, params, bounds) {
            termination = Termination::PositivityLost;
            message = Some(m);
            st = next;
            break;
        }
        let inv = check_invertibility(&next.fm);
        if !inv.ok {
            termination = Termination::MapNoninvertible;
            message = Some(format!(
                "|grad X - I| = {:.3e}, min det = {:.3e} at t = {}",
                inv.supnorm_dev, inv.min_det, next.t
            ));
            st = next;
            break;
        }
        if !cfl_warned && cfg.dt * next.v.max_abs() > h {
            warnings.push(format!(
                "advective CFL number {:.3} exceeds 1 at t = {}",
                cfg.dt * next.v.max_abs() / h,
                next.t
            ));
            cfl_warned = true;
        }
        st = next;
        let en = match diagnostics::energy_of_state(&st, &g, params) {
            Ok(e) => e,
            Err(e) => match classify(&e) {
                Some(t) => {
                    termination = t;
                    message = Some(e.to_string());
                    break;
                }
                None => return Err(e),
            },
        };
        tr.dissipated += cfg.dt * en.dissipation;
        if st.steps % cfg.output_every == 0 || st.steps == nsteps {
            let r = record(&st, &g, params, &en, &tr);
            observe(&st, &r)?;
            records.push(r);
        }
    }
    Ok(RunResult {
        termination,
        message,
        records,
        warnings,
        steps: st.steps,
        t_final: st.t,
        final_state: Some(st),
    })
}
