//! Chain-rule oracle for the Lagrangian nonlinearities.
//!
//! Manufactured Eulerian fields (trigonometric in x, y; polynomial in z) and a
//! manufactured flow map are differentiated with second-order forward-mode
//! jets. The oracle evaluates the Eulerian equations directly, forms the
//! Lagrangian time derivatives ∂tζ = ξ_t + v̄·∇ξ and ∂tV = v_t + v̄·∇v at
//! X(y), and subtracts the linear part computed from y-derivatives of the
//! composed fields. No Z matrices and no spectral derivatives are involved.

use std::f64::consts::TAU;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::evolve::{LagrangianState, Mode};
use crate::flowmap::{FlowMap, FlowTolerances};
use crate::grid::{Field2D, Field3D, Grid};
use crate::transforms::{PhysicalParams, DELTA};

/// Value, gradient and Hessian `[xx, xy, yy]` of a function of two variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub h: [f64; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 2], h: [0.0; 3] }
    }

    pub fn var(v: f64, idx: usize) -> Self {
        let mut d = [0.0; 2];
        d[idx] = 1.0;
        Self { v, d, h: [0.0; 3] }
    }

    /// φ(self) given φ, φ', φ'' at the value.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let d = self.d;
        Self {
            v: f0,
            d: [f1 * d[0], f1 * d[1]],
            h: [
                f2 * d[0] * d[0] + f1 * self.h[0],
                f2 * d[0] * d[1] + f1 * self.h[1],
                f2 * d[1] * d[1] + f1 * self.h[2],
            ],
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn laplacian(&self) -> f64 {
        self.h[0] + self.h[2]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        Jet {
            v: self.v * s,
            d: [self.d[0] * s, self.d[1] * s],
            h: [self.h[0] * s, self.h[1] * s, self.h[2] * s],
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (f, g) = (self, o);
        Jet {
            v: f.v * g.v,
            d: [f.d[0] * g.v + f.v * g.d[0], f.d[1] * g.v + f.v * g.d[1]],
            h: [
                f.h[0] * g.v + 2.0 * f.d[0] * g.d[0] + f.v * g.h[0],
                f.h[1] * g.v + f.d[0] * g.d[1] + f.d[1] * g.d[0] + f.v * g.h[1],
                f.h[2] * g.v + 2.0 * f.d[1] * g.d[1] + f.v * g.h[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// Σ amp·cos(2π(k·x) + phase).
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSum(pub Vec<(f64, f64, f64, f64)>);

impl TrigSum {
    pub fn random(rng: &mut ChaCha8Rng, amp: f64, kmax: i64, terms: usize) -> Self {
        let mut t = Vec::with_capacity(terms);
        for _ in 0..terms {
            let k1 = rng.gen_range(-kmax..=kmax) as f64;
            let k2 = rng.gen_range(-kmax..=kmax) as f64;
            t.push((k1, k2, amp * rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)));
        }
        Self(t)
    }

    pub fn eval(&self, x: [Jet; 2]) -> Jet {
        self.0.iter().fold(Jet::constant(0.0), |acc, &(k1, k2, a, ph)| {
            acc + ((x[0] * (TAU * k1) + x[1] * (TAU * k2) + Jet::constant(ph)).cos() * a)
        })
    }
}

/// Vertical profiles P₀ = 1 − z², P₁ = z²(1 − z): both vanish at z = 1 and
/// have zero slope at z = 0.
pub const NPROFILES: usize = 2;

/// (P, P', P'', ∫₀^z P, ∫₀^z sP) at z.
pub fn profile(q: usize, z: f64) -> [f64; 5] {
    match q {
        0 => [1.0 - z * z, -2.0 * z, -2.0, z - z.powi(3) / 3.0, z * z / 2.0 - z.powi(4) / 4.0],
        _ => [
            z * z * (1.0 - z),
            2.0 * z - 3.0 * z * z,
            2.0 - 6.0 * z,
            z.powi(3) / 3.0 - z.powi(4) / 4.0,
            z.powi(4) / 4.0 - z.powi(5) / 5.0,
        ],
    }
}

/// Manufactured state: surface density (total for local modes, perturbation
/// for the global mode), reference density, velocity factors h_{c,q} and a
/// periodic displacement of the flow map.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub mode: Mode,
    pub xi: TrigSum,
    pub xi0: TrigSum,
    pub vel: Vec<TrigSum>,
    pub disp: [TrigSum; 2],
    pub base: f64,
}

impl Manufactured {
    pub fn random(mode: Mode, seed: u64, amp: f64, eps: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = if mode == Mode::GlobalGamma1 { 0.0 } else { 1.0 };
        Self {
            mode,
            xi: TrigSum::random(&mut rng, amp, 2, 3),
            xi0: TrigSum::random(&mut rng, amp, 2, 3),
            vel: (0..2 * NPROFILES).map(|_| TrigSum::random(&mut rng, amp, 2, 3)).collect(),
            disp: [TrigSum::random(&mut rng, eps, 1, 2), TrigSum::random(&mut rng, eps, 1, 2)],
            base,
        }
    }

    fn vel_factor(&self, c: usize, q: usize, x: [Jet; 2]) -> Jet {
        self.vel[c * NPROFILES + q].eval(x)
    }
}

/// Lagrangian state sampled on the grid together with oracle values.
#[derive(Debug, Clone)]
pub struct OracleSample {
    pub state: LagrangianState,
    /// True Lagrangian ∂tV, passed as the lagged time derivative.
    pub dtv: Field3D,
    pub f1: Field2D,
    pub f2: Field3D,
}

struct Coeffs {
    hcoef: f64,
    vertical: [f64; 2],
}

fn coeffs(mode: Mode, z: f64) -> Coeffs {
    match mode {
        Mode::LocalGamma1 | Mode::GlobalGamma1 => Coeffs {
            hcoef: 1.0 / (1.0 - DELTA * z),
            // ∂z(β∂z·) = β'∂z + β∂zz
            vertical: [-1.0 / DELTA, (1.0 - DELTA * z) / (DELTA * DELTA)],
        },
        _ => Coeffs {
            hcoef: 1.0,
            vertical: [0.0, 1.0],
        },
    }
}

pub fn oracle_sample(man: &Manufactured, g: &Grid, params: &PhysicalParams) -> Result<OracleSample> {
    let mode = man.mode;
    let (mu, mup) = (params.mu, params.mu_prime);
    let xi_bar = params.xi_bar;
    let law = params.pressure_law();
    let nz = g.nz;
    let mut zeta = Field2D::zeros(g, 1);
    let mut xi0 = Field2D::zeros(g, 1);
    let mut disp = Field2D::zeros(g, 2);
    let mut grad = Field2D::zeros(g, 4);
    let mut v = Field3D::zeros(g, 2);
    let mut dtv = Field3D::zeros(g, 2);
    let mut f1 = Field2D::zeros(g, 1);
    let mut f2 = Field3D::zeros(g, 2);
    let pbar: Vec<f64> = (0..NPROFILES).map(|q| profile(q, 1.0)[3]).collect();
    let zbar: Vec<f64> = (0..NPROFILES).map(|q| profile(q, 1.0)[4]).collect();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let yj = [Jet::var(g.x(i), 0), Jet::var(g.y(j), 1)];
            let xmap = [yj[0] + man.disp[0].eval(yj), yj[1] + man.disp[1].eval(yj)];
            let xj = [Jet::var(xmap[0].v, 0), Jet::var(xmap[1].v, 1)];
            disp.set(0, i, j, xmap[0].v - g.x(i));
            disp.set(1, i, j, xmap[1].v - g.y(j));
            for a in 0..2 {
                for b in 0..2 {
                    grad.set(2 * a + b, i, j, xmap[a].d[b]);
                }
            }
            // Eulerian fields at x = X(y) (jets in x) and composed fields (jets in y)
            let pert_e = man.xi.eval(xj);
            let xi_e = pert_e + Jet::constant(man.base + if mode == Mode::GlobalGamma1 { xi_bar } else { 0.0 });
            let zeta_l = man.xi.eval(xmap) + Jet::constant(man.base);
            let xi0_l = man.xi0.eval(yj) + Jet::constant(1.0);
            zeta.set(0, i, j, zeta_l.v);
            xi0.set(0, i, j, xi0_l.v);
            let he: Vec<Vec<Jet>> = (0..2).map(|c| (0..NPROFILES).map(|q| man.vel_factor(c, q, xj)).collect()).collect();
            let hl: Vec<Vec<Jet>> = (0..2).map(|c| (0..NPROFILES).map(|q| man.vel_factor(c, q, xmap)).collect()).collect();
            let avg = |h: &Vec<Vec<Jet>>, c: usize, wts: &[f64]| {
                (0..NPROFILES).fold(Jet::constant(0.0), |acc, q| acc + h[c][q] * wts[q])
            };
            let vbar_e = [avg(&he, 0, &pbar), avg(&he, 1, &pbar)];
            let zmom_e = [avg(&he, 0, &zbar), avg(&he, 1, &zbar)];
            let vbar_l = [avg(&hl, 0, &pbar), avg(&hl, 1, &pbar)];
            let zmom_l = [avg(&hl, 0, &zbar), avg(&hl, 1, &zbar)];
            let div = |u: &[Jet; 2]| u[0].d[0] + u[1].d[1];

            // continuity
            let mut dt_zeta = -xi_e.v * div(&vbar_e);
            let mut lin1 = match mode {
                Mode::GlobalGamma1 => -xi_bar * div(&vbar_l),
                _ => -xi0_l.v * div(&vbar_l),
            };
            if mode == Mode::LocalGamma2 {
                dt_zeta -= 0.5 * div(&zmom_e);
                lin1 -= 0.5 * div(&zmom_l);
            }
            f1.set(0, i, j, dt_zeta - lin1);

            // momentum, level by level
            for k in 0..nz {
                let z = g.z(k);
                let pr: Vec<[f64; 5]> = (0..NPROFILES).map(|q| profile(q, z)).collect();
                let col = |h: &Vec<Vec<Jet>>, c: usize, d: usize| {
                    (0..NPROFILES).fold(Jet::constant(0.0), |acc, q| acc + h[c][q] * pr[q][d])
                };
                let ve = [col(&he, 0, 0), col(&he, 1, 0)];
                let vz = [col(&he, 0, 1).v, col(&he, 1, 1).v];
                let vzz = [col(&he, 0, 2).v, col(&he, 1, 2).v];
                let vl = [col(&hl, 0, 0), col(&hl, 1, 0)];
                let vlz = [col(&hl, 0, 1).v, col(&hl, 1, 1).v];
                let vlzz = [col(&hl, 0, 2).v, col(&hl, 1, 2).v];
                v.set(0, k, i, j, vl[0].v);
                v.set(1, k, i, j, vl[1].v);
                let cf = coeffs(mode, z);
                let rho = match mode {
                    Mode::LocalGamma2 => xi_e.v + 0.5 * z,
                    _ => xi_e.v,
                };
                // ρW = −Σ_q (∫₀^z P_q − z P̄_q) div(ξ h_q) [− ½ Σ_q (∫₀^z sP_q − z·∫sP_q) div h_q]
                let mut rho_w = 0.0;
                for q in 0..NPROFILES {
                    let flux = [xi_e * he[0][q], xi_e * he[1][q]];
                    rho_w -= (pr[q][3] - z * pbar[q]) * div(&flux);
                    if mode == Mode::LocalGamma2 {
                        rho_w -= 0.5 * (pr[q][4] - z * zbar[q]) * div(&[he[0][q], he[1][q]]);
                    }
                }
                let w = rho_w / rho;
                let grad_p = |a: usize| match mode {
                    Mode::LocalGamma2 => 2.0 * rho * xi_e.d[a],
                    Mode::GeneralNoGravity => law.dp(xi_e.v) * xi_e.d[a],
                    _ => xi_e.d[a],
                };
                let m0 = match mode {
                    Mode::GlobalGamma1 => xi_bar,
                    Mode::LocalGamma2 => xi0_l.v + 0.5 * z,
                    _ => xi0_l.v,
                };
                for c in 0..2 {
                    let graddiv_e = if c == 0 { ve[0].h[0] + ve[1].h[1] } else { ve[0].h[1] + ve[1].h[2] };
                    let visc = cf.hcoef * (mu * ve[c].laplacian() + mup * graddiv_e)
                        + mu * (cf.vertical[0] * vz[c] + cf.vertical[1] * vzz[c]);
                    let adv = ve[0].v * ve[c].d[0] + ve[1].v * ve[c].d[1] + w * vz[c];
                    let vt = (visc - grad_p(c)) / rho - adv;
                    let dtv_true = vt + vbar_e[0].v * ve[c].d[0] + vbar_e[1].v * ve[c].d[1];
                    let graddiv_l = if c == 0 { vl[0].h[0] + vl[1].h[1] } else { vl[0].h[1] + vl[1].h[2] };
                    let lin = (cf.hcoef * (mu * vl[c].laplacian() + mup * graddiv_l)
                        + mu * (cf.vertical[0] * vlz[c] + cf.vertical[1] * vlzz[c]))
                        / m0;
                    let mut rem = dtv_true - lin;
                    if mode == Mode::GlobalGamma1 {
                        rem += (man.xi.eval(xmap)).d[c] / xi_bar;
                    }
                    if k < nz - 1 {
                        dtv.set(c, k, i, j, dtv_true);
                        f2.set(c, k, i, j, rem);
                    }
                }
            }
        }
    }
    let fm = FlowMap::from_parts(disp, grad, 0.0, FlowTolerances::default())?;
    let xi0 = if mode == Mode::GlobalGamma1 {
        Field2D::constant(g, xi_bar)
    } else {
        xi0
    };
    let state = LagrangianState {
        zeta,
        v,
        fm,
        t: 0.0,
        mode,
        xi0,
        dtv: dtv.clone(),
        steps: 1,
    };
    Ok(OracleSample { state, dtv, f1, f2 })
}
