//! Hand-coded nonlinearities F1, F2 and the vertical velocity in hydrostatic
//! Lagrangian coordinates.
//!
//! With Z = [∇X]⁻¹ (Z_{ka} = ∂Y_k/∂x_a) Eulerian derivatives pull back as
//! (∂_{x_a} f)∘X = Σ_k Z_{ka} ∂_k F, so
//!
//! ```text
//! Δ_Z F      = Σ_{l,k} (ZZᵀ)_{lk} ∂_l∂_k F + Σ_k (Σ_{a,l} Z_{la} ∂_l Z_{ka}) ∂_k F
//! (∇div_Z V)_i = Σ_l Z_{li} ∂_l (Σ_{k,j} Z_{kj} ∂_k V_j)
//! ```
//!
//! The linear parts subtracted are the Z = I versions with the reference
//! density as weight.

use serde::{Deserialize, Serialize};

use super::{LagrangianState, Mode};
use crate::error::{Error, Result};
use crate::grid::{Field2D, Field3D, Grid};
use crate::transforms::{PhysicalParams, DELTA};

/// Deliberate defects for exercising the oracle check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    /// Sign error in the advection term of F2.
    FlipAdvection,
    /// Sign error in the viscous remainder of F2.
    FlipViscousRemainder,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub dealias: bool,
    pub mutation: Mutation,
}

impl EvalOptions {
    pub fn production() -> Self {
        Self {
            dealias: true,
            mutation: Mutation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Terms {
    /// −(ζ − ξ₀) div V̄ (local) or −ζ div V̄ (global).
    pub density: Field2D,
    /// −ζ ∇V̄:(Zᵀ − I) (local) or −(ζ + ξ̄) ∇V̄:(Zᵀ − I) (global).
    pub cofactor: Field2D,
    /// −½ ∫ z ∇V:(Zᵀ − I) dz (γ = 2 only).
    pub moment: Field2D,
}

impl F1Terms {
    pub fn total(&self) -> Field2D {
        self.density.add(&self.cofactor).add(&self.moment)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2Terms {
    /// (visc_Z − visc_I) V / m₀.
    pub viscous: Field3D,
    /// (1 − ρ_ζ/ρ₀) ∂tV (local) or −(ζ/ξ̄) ∂tV (global), lagged.
    pub inertia: Field3D,
    /// −(ρ_ζ/ρ₀)(Ṽ·∇ + W∂z)V, pulled back.
    pub advection: Field3D,
    /// −pressure gradient / m₀ (local), −(Zᵀ − I)∇ζ/ξ̄ (global).
    pub pressure: Field3D,
}

impl F2Terms {
    pub fn total(&self) -> Field3D {
        self.viscous.add(&self.inertia).add(&self.advection).add(&self.pressure)
    }
}

/// Pointwise Z-geometry: Z_{ka} and the first derivatives ∂_l Z_{ka}.
struct Geometry {
    z: [[Vec<f64>; 2]; 2],
    dz: [[[Vec<f64>; 2]; 2]; 2],
}

impl Geometry {
    fn new(g: &Grid, st: &LagrangianState) -> Self {
        let zc = |k: usize, a: usize| st.fm.z.comp(2 * k + a).to_vec();
        let z = [[zc(0, 0), zc(0, 1)], [zc(1, 0), zc(1, 1)]];
        let d = |k: usize, a: usize, l: usize| {
            if l == 0 {
                g.deriv(&z[k][a], 1, 0)
            } else {
                g.deriv(&z[k][a], 0, 1)
            }
        };
        let dz = [
            [[d(0, 0, 0), d(0, 1, 0)], [d(1, 0, 0), d(1, 1, 0)]],
            [[d(0, 0, 1), d(0, 1, 1)], [d(1, 0, 1), d(1, 1, 1)]],
        ];
        Self { z, dz }
    }
}

/// Surface density the momentum equation is weighted with (ζ or ξ̄ + ζ).
pub fn surface_density(st: &LagrangianState, params: &PhysicalParams) -> Field2D {
    match st.mode {
        Mode::GlobalGamma1 => st.zeta.map(|z| z + params.xi_bar),
        _ => st.zeta.clone(),
    }
}

/// div_Z of a horizontal 2-vector slab pair.
fn div_z(g: &Grid, geo: &Geometry, u: [&[f64]; 2]) -> Vec<f64> {
    let d = [[g.deriv(u[0], 1, 0), g.deriv(u[0], 0, 1)], [g.deriv(u[1], 1, 0), g.deriv(u[1], 0, 1)]];
    (0..g.nh())
        .map(|p| {
            let mut s = 0.0;
            for a in 0..2 {
                for k in 0..2 {
                    s += geo.z[k][a][p] * d[a][k][p];
                }
            }
            s
        })
        .collect()
}

/// ∇U:(Zᵀ − I) = Σ_{a,k} ∂_k U_a (Z_{ka} − δ_{ka}).
fn cofactor_contraction(g: &Grid, geo: &Geometry, u: [&[f64]; 2]) -> Vec<f64> {
    let d = [[g.deriv(u[0], 1, 0), g.deriv(u[0], 0, 1)], [g.deriv(u[1], 1, 0), g.deriv(u[1], 0, 1)]];
    (0..g.nh())
        .map(|p| {
            let mut s = 0.0;
            for a in 0..2 {
                for k in 0..2 {
                    let dk = if k == a { 1.0 } else { 0.0 };
                    s += d[a][k][p] * (geo.z[k][a][p] - dk);
                }
            }
            s
        })
        .collect()
}

fn plain_div(g: &Grid, u: [&[f64]; 2]) -> Vec<f64> {
    let a = g.deriv(u[0], 1, 0);
    let b = g.deriv(u[1], 0, 1);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

fn check_density(rho: &Field2D) -> Result<()> {
    let m = rho.min();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::NonpositiveDensity { min: m });
    }
    Ok(())
}

/// Transformed vertical velocity W from the density-weighted continuity
/// equation; W = 0 at z = 0 exactly and ≈ 0 at z = 1.
pub fn reconstruct_w(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> Result<Field3D> {
    let rho = surface_density(st, params);
    check_density(&rho)?;
    let geo = Geometry::new(g, st);
    Ok(w_with(g, st, &rho, &geo))
}

fn w_with(g: &Grid, st: &LagrangianState, rho: &Field2D, geo: &Geometry) -> Field3D {
    let nz = g.nz;
    let nh = g.nh();
    let vbar = st.v.vertical_average(g);
    let mut integrand = Field3D::zeros(g, 1);
    let mut zdiv = vec![vec![0.0; nh]; nz];
    for k in 0..nz {
        let flux: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                st.v
                    .slab(c, k)
                    .iter()
                    .zip(vbar.comp(c))
                    .zip(rho.comp(0))
                    .map(|((v, m), r)| r * (v - m))
                    .collect()
            })
            .collect();
        let d = div_z(g, geo, [&flux[0], &flux[1]]);
        integrand.slab_mut(0, k).copy_from_slice(&d);
        if st.mode == Mode::LocalGamma2 {
            let dv = div_z(g, geo, [st.v.slab(0, k), st.v.slab(1, k)]);
            let z = g.z(k);
            zdiv[k] = dv.iter().map(|x| z * x).collect();
        }
    }
    if st.mode == Mode::LocalGamma2 {
        // ½ (z div V)~ : subtract the vertical average
        let mut avg = vec![0.0; nh];
        for (k, zd) in zdiv.iter().enumerate() {
            for (a, x) in avg.iter_mut().zip(zd) {
                *a += g.vert.weights[k] * x;
            }
        }
        for (k, zd) in zdiv.iter().enumerate() {
            for (p, o) in integrand.slab_mut(0, k).iter_mut().enumerate() {
                *o += 0.5 * (zd[p] - avg[p]);
            }
        }
    }
    let integ = integrand.apply_vertical(g, &g.vert.integ);
    let mut w = Field3D::zeros(g, 1);
    for k in 0..nz {
        let z = g.z(k);
        for p in 0..nh {
            let r = match st.mode {
                Mode::LocalGamma2 => rho.data[p] + 0.5 * z,
                _ => rho.data[p],
            };
            w.slab_mut(0, k)[p] = if k == 0 { 0.0 } else { -integ.slab(0, k)[p] / r };
        }
    }
    w
}

fn dealias_2d(g: &Grid, f: Field2D) -> Field2D {
    let d = g.dealias(f.comp(0));
    Field2D::from_slabs(g, &[&d])
}

fn dealias_3d(g: &Grid, mut f: Field3D) -> Field3D {
    for c in 0..f.ncomp {
        for k in 0..g.nz {
            let d = g.dealias(f.slab(c, k));
            f.slab_mut(c, k).copy_from_slice(&d);
        }
    }
    f
}

pub fn nonlinearity_f1_terms(st: &LagrangianState, g: &Grid, params: &PhysicalParams, opts: EvalOptions) -> Result<F1Terms> {
    let geo = Geometry::new(g, st);
    let vbar = st.v.vertical_average(g);
    let vb = [vbar.comp(0), vbar.comp(1)];
    let div = plain_div(g, vb);
    let cof = cofactor_contraction(g, &geo, vb);
    let zeta = st.zeta.comp(0);
    let xi0 = st.xi0.comp(0);
    let nh = g.nh();
    let mut density = Field2D::zeros(g, 1);
    let mut cofactor = Field2D::zeros(g, 1);
    let mut moment = Field2D::zeros(g, 1);
    for p in 0..nh {
        let (d, c) = match st.mode {
            Mode::GlobalGamma1 => (-zeta[p] * div[p], -(zeta[p] + params.xi_bar) * cof[p]),
            _ => (-(zeta[p] - xi0[p]) * div[p], -zeta[p] * cof[p]),
        };
        density.data[p] = d;
        cofactor.data[p] = c;
    }
    if st.mode == Mode::LocalGamma2 {
        for k in 0..g.nz - 1 {
            let c = cofactor_contraction(g, &geo, [st.v.slab(0, k), st.v.slab(1, k)]);
            let wz = g.vert.weights[k] * g.z(k);
            for p in 0..nh {
                moment.data[p] -= 0.5 * wz * c[p];
            }
        }
    }
    let mut t = F1Terms {
        density,
        cofactor,
        moment,
    };
    if opts.dealias {
        t = F1Terms {
            density: dealias_2d(g, t.density),
            cofactor: dealias_2d(g, t.cofactor),
            moment: dealias_2d(g, t.moment),
        };
    }
    Ok(t)
}

pub fn nonlinearity_f1(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> Result<Field2D> {
    Ok(nonlinearity_f1_terms(st, g, params, EvalOptions::production())?.total())
}

pub fn nonlinearity_f2_terms(
    st: &LagrangianState,
    dtv: &Field3D,
    g: &Grid,
    params: &PhysicalParams,
    opts: EvalOptions,
) -> Result<F2Terms> {
    let nz = g.nz;
    let nh = g.nh();
    let (mu, mup) = (params.mu, params.mu_prime);
    let xi_bar = params.xi_bar;
    let law = params.pressure_law();
    let rho = surface_density(st, params);
    check_density(&rho)?;
    let geo = Geometry::new(g, st);
    let w = w_with(g, st, &rho, &geo);
    let vz = st.v.apply_vertical(g, &g.vert.diff);
    let vbar = st.v.vertical_average(g);
    let zeta = st.zeta.comp(0);
    let xi0 = st.xi0.comp(0);
    let zg = [g.deriv(zeta, 1, 0), g.deriv(zeta, 0, 1)];
    let z = &geo.z;
    // (ZZᵀ)_{lk} and b_k = Σ_{a,l} Z_{la} ∂_l Z_{ka}
    let zzt: Vec<[[f64; 2]; 2]> = (0..nh)
        .map(|p| {
            let mut m = [[0.0; 2]; 2];
            for l in 0..2 {
                for k in 0..2 {
                    m[l][k] = z[l][0][p] * z[k][0][p] + z[l][1][p] * z[k][1][p];
                }
            }
            m
        })
        .collect();
    let bvec: Vec<[f64; 2]> = (0..nh)
        .map(|p| {
            let mut b = [0.0; 2];
            for (k, bk) in b.iter_mut().enumerate() {
                for a in 0..2 {
                    for l in 0..2 {
                        *bk += z[l][a][p] * geo.dz[l][k][a][p];
                    }
                }
            }
            b
        })
        .collect();
    let mut viscous = Field3D::zeros(g, 2);
    let mut inertia = Field3D::zeros(g, 2);
    let mut advection = Field3D::zeros(g, 2);
    let mut pressure = Field3D::zeros(g, 2);
    for k in 0..nz - 1 {
        let zk = g.z(k);
        let hcoef = match st.mode {
            Mode::LocalGamma1 | Mode::GlobalGamma1 => 1.0 / (1.0 - DELTA * zk),
            _ => 1.0,
        };
        // [∂1, ∂2, ∂11, ∂12, ∂22] per component
        let d: Vec<[Vec<f64>; 5]> = (0..2).map(|c| g.derivs2(st.v.slab(c, k))).collect();
        for p in 0..nh {
            let second = |c: usize, l: usize, m: usize| match (l, m) {
                (0, 0) => d[c][2][p],
                (1, 1) => d[c][4][p],
                _ => d[c][3][p],
            };
            // Eulerian first derivatives ∂_{x_a} V_c
            let mut gx = [[0.0; 2]; 2];
            for c in 0..2 {
                for a in 0..2 {
                    gx[c][a] = z[0][a][p] * d[c][0][p] + z[1][a][p] * d[c][1][p];
                }
            }
            // ∂_l (div_Z V)
            let mut ddiv = [0.0; 2];
            for (l, dd) in ddiv.iter_mut().enumerate() {
                for kk in 0..2 {
                    for j in 0..2 {
                        *dd += geo.dz[l][kk][j][p] * d[j][kk][p] + z[kk][j][p] * second(j, l, kk);
                    }
                }
            }
            let r_zeta = match st.mode {
                Mode::GlobalGamma1 => zeta[p] + xi_bar,
                Mode::LocalGamma2 => zeta[p] + 0.5 * zk,
                _ => zeta[p],
            };
            let (m0, inertia_c, adv_c) = match st.mode {
                Mode::GlobalGamma1 => (xi_bar, -zeta[p] / xi_bar, r_zeta / xi_bar),
                Mode::LocalGamma2 => {
                    let r0 = xi0[p] + 0.5 * zk;
                    (r0, 1.0 - r_zeta / r0, r_zeta / r0)
                }
                _ => (xi0[p], 1.0 - zeta[p] / xi0[p], zeta[p] / xi0[p]),
            };
            let pcoef = match st.mode {
                Mode::LocalGamma2 => 2.0 * r_zeta,
                Mode::GeneralNoGravity => law.dp(zeta[p]),
                _ => 1.0,
            };
            let wp = w.slab(0, k)[p];
            for c in 0..2 {
                let mut lap_z = 0.0;
                for l in 0..2 {
                    for kk in 0..2 {
                        lap_z += zzt[p][l][kk] * second(c, l, kk);
                    }
                    lap_z += bvec[p][l] * d[c][l][p];
                }
                let graddiv_z = z[0][c][p] * ddiv[0] + z[1][c][p] * ddiv[1];
                let lap_i = d[c][2][p] + d[c][4][p];
                let graddiv_i = if c == 0 { d[0][2][p] + d[1][3][p] } else { d[0][3][p] + d[1][4][p] };
                let mut visc = hcoef * (mu * (lap_z - lap_i) + mup * (graddiv_z - graddiv_i)) / m0;
                let vt = [st.v.slab(0, k)[p] - vbar.comp(0)[p], st.v.slab(1, k)[p] - vbar.comp(1)[p]];
                let mut adv = -adv_c * (vt[0] * gx[c][0] + vt[1] * gx[c][1] + wp * vz.slab(c, k)[p]);
                let zt_grad = z[0][c][p] * zg[0][p] + z[1][c][p] * zg[1][p];
                let pres = match st.mode {
                    Mode::GlobalGamma1 => -(zt_grad - zg[c][p]) / xi_bar,
                    _ => -pcoef * zt_grad / m0,
                };
                match opts.mutation {
                    Mutation::FlipAdvection => adv = -adv,
                    Mutation::FlipViscousRemainder => visc = -visc,
                    Mutation::None => {}
                }
                viscous.slab_mut(c, k)[p] = visc;
                inertia.slab_mut(c, k)[p] = inertia_c * dtv.slab(c, k)[p];
                advection.slab_mut(c, k)[p] = adv;
                pressure.slab_mut(c, k)[p] = pres;
            }
        }
    }
    let mut t = F2Terms {
        viscous,
        inertia,
        advection,
        pressure,
    };
    if opts.dealias {
        t = F2Terms {
            viscous: dealias_3d(g, t.viscous),
            inertia: dealias_3d(g, t.inertia),
            advection: dealias_3d(g, t.advection),
            pressure: dealias_3d(g, t.pressure),
        };
    }
    Ok(t)
}

pub fn nonlinearity_f2(st: &LagrangianState, dtv: &Field3D, g: &Grid, params: &PhysicalParams) -> Result<Field3D> {
    Ok(nonlinearity_f2_terms(st, dtv, g, params, EvalOptions::production())?.total())
}
