//! Mass, energy, positivity and decay-rate diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{pull_back, LagrangianState};
use crate::grid::{h1_slab, Field2D, Field3D, Grid};
use crate::transforms::{Model, PhysicalParams, DELTA};

/// ∫_Ω ρ by quadrature.
pub fn total_mass(rho: &Field3D, g: &Grid) -> f64 {
    let mut s = 0.0;
    for k in 0..g.nz {
        s += g.vert.weights[k] * g.mean(rho.slab(0, k));
    }
    s
}

/// Mass of the state measured in Lagrangian coordinates, ∫ ξ∘X det∇X dy,
/// scaled like the physical column mass (δ∫ξ for γ = 1, ∫ξ + ¼ for γ = 2).
pub fn lagrangian_mass(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> f64 {
    let xi = st.total_density(params);
    let m = xi.comp(0).iter().zip(st.fm.det.comp(0)).map(|(x, d)| x * d).sum::<f64>() / g.nh() as f64;
    match params.model {
        Model::Gamma1 => DELTA * m,
        Model::Gamma2 => m + 0.25,
        Model::GeneralNoGravity => m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub internal: f64,
    /// Instantaneous dissipation rate D ≥ 0.
    pub dissipation: f64,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal
    }
}

fn internal_density(params: &PhysicalParams, xi: f64) -> f64 {
    match params.model {
        Model::Gamma1 => xi * xi.ln() + 1.0 - xi,
        Model::Gamma2 => (xi - 1.0) * (xi - 1.0),
        Model::GeneralNoGravity => params.pressure_law().energy_density(xi),
    }
}

/// Energy and dissipation rate of Eulerian fields in simulation coordinates.
///
/// γ = 1: E = ∫½ξ|v|² + ∫(ξ log ξ + 1 − ξ), D = μ∫h|∇v|² + μ'∫h(div v)² + μ∫β|∂z v|².
/// γ = 2: kinetic weight ξ + z/2, internal (ξ − 1)², h = β = 1.
/// No gravity: internal ẽ(ξ) of the pressure law, h = β = 1.
pub fn energy(xi: &Field2D, v: &Field3D, g: &Grid, params: &PhysicalParams) -> Result<EnergyReport> {
    if xi.ncomp != 1 || v.ncomp != 2 || xi.nh() != g.nh() || v.nz != g.nz {
        return Err(Error::ShapeMismatch("energy needs a scalar surface field and a 2-vector velocity".into()));
    }
    let m = xi.min();
    if !(m > 0.0) {
        return Err(Error::NonpositiveDensity { min: m });
    }
    let nh = g.nh() as f64;
    let vz = v.apply_vertical(g, &g.vert.diff);
    let (mu, mup) = (params.mu, params.mu_prime);
    let mut kinetic = 0.0;
    let mut diss = 0.0;
    for k in 0..g.nz {
        let z = g.z(k);
        let w = g.vert.weights[k];
        let (h, beta) = match params.model {
            Model::Gamma1 => (1.0 / (1.0 - DELTA * z), (1.0 - DELTA * z) / (DELTA * DELTA)),
            _ => (1.0, 1.0),
        };
        let d: Vec<[Vec<f64>; 2]> = (0..2)
            .map(|c| [g.deriv(v.slab(c, k), 1, 0), g.deriv(v.slab(c, k), 0, 1)])
            .collect();
        let (mut ke, mut ds) = (0.0, 0.0);
        for p in 0..g.nh() {
            let rho = match params.model {
                Model::Gamma2 => xi.data[p] + 0.5 * z,
                _ => xi.data[p],
            };
            let (a, b) = (v.slab(0, k)[p], v.slab(1, k)[p]);
            ke += 0.5 * rho * (a * a + b * b);
            let grad2 = d[0][0][p].powi(2) + d[0][1][p].powi(2) + d[1][0][p].powi(2) + d[1][1][p].powi(2);
            let div = d[0][0][p] + d[1][1][p];
            let vz2 = vz.slab(0, k)[p].powi(2) + vz.slab(1, k)[p].powi(2);
            ds += mu * h * grad2 + mup * h * div * div + mu * beta * vz2;
        }
        kinetic += w * ke / nh;
        diss += w * ds / nh;
    }
    let internal = xi.comp(0).iter().map(|&x| internal_density(params, x)).sum::<f64>() / nh;
    Ok(EnergyReport {
        kinetic,
        internal,
        dissipation: diss,
    })
}

/// Energy of a Lagrangian state, evaluated on its pulled-back Eulerian fields.
pub fn energy_of_state(st: &LagrangianState, g: &Grid, params: &PhysicalParams) -> Result<EnergyReport> {
    let e = pull_back(st, g, params)?;
    energy(&e.xi, &e.v, g, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min: f64,
    pub max: f64,
    pub lower: f64,
    pub upper: f64,
    pub ok: bool,
}

pub fn positivity_report(xi: &Field2D, lower: f64, upper: f64) -> PositivityReport {
    let (min, max) = (xi.min(), xi.max());
    PositivityReport {
        min,
        max,
        lower,
        upper,
        ok: min >= lower && max <= upper,
    }
}

/// Horizontal H¹ norm of a surface field.
pub fn h1_norm_2d(g: &Grid, f: &Field2D) -> f64 {
    (0..f.ncomp).map(|c| h1_slab(g, f.comp(c)).powi(2)).sum::<f64>().sqrt()
}

/// H¹ norm of a 3D field: horizontal H¹ per level plus the vertical derivative.
pub fn h1_norm_3d(g: &Grid, f: &Field3D) -> f64 {
    let fz = f.apply_vertical(g, &g.vert.diff);
    let mut s = 0.0;
    for c in 0..f.ncomp {
        for k in 0..g.nz {
            s += g.vert.weights[k] * h1_slab(g, f.slab(c, k)).powi(2);
        }
    }
    (s + fz.dot(&fz, g)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted η in a(t) ≈ C e^{−ηt}.
    pub eta: f64,
    pub log_c: f64,
    pub r2: f64,
    pub n_samples: usize,
    pub t_skip: f64,
    /// The amplitude never increases after `t_skip` (up to 1e−12 relative).
    pub monotone: bool,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit of log a(t) on t ≥ t_skip. With `t_skip = None` the
/// first 20% of the time span is discarded.
pub fn fit_decay_rate(t: &[f64], a: &[f64], t_skip: Option<f64>) -> Result<DecayFit> {
    if t.len() != a.len() {
        return Err(Error::Fit(format!("{} times but {} amplitudes", t.len(), a.len())));
    }
    if t.is_empty() {
        return Err(Error::Fit("empty series".into()));
    }
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let skip = t_skip.unwrap_or(t0 + 0.2 * (t1 - t0));
    let pts: Vec<(f64, f64)> = t.iter().zip(a).filter(|(ti, _)| **ti >= skip).map(|(x, y)| (*x, *y)).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples after t_skip = {skip}, need {MIN_FIT_SAMPLES}",
            pts.len()
        )));
    }
    if let Some(&(ti, ai)) = pts.iter().find(|(_, y)| !(*y > 0.0 && y.is_finite())) {
        return Err(Error::Fit(format!("amplitude {ai} at t = {ti} is not positive")));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum::<f64>();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all samples at the same time".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_tot = pts.iter().map(|p| (p.1.ln() - my).powi(2)).sum::<f64>();
    let ss_res = pts.iter().map(|p| (p.1.ln() - icpt - slope * p.0).powi(2)).sum::<f64>();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    Ok(DecayFit {
        eta: -slope,
        log_c: icpt,
        r2,
        n_samples: pts.len(),
        t_skip: skip,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn fit_recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let a: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = fit_decay_rate(&t, &a, None).unwrap();
        assert!((f.eta - 0.7).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12 && f.monotone);
        assert!(fit_decay_rate(&t[..10], &a[..10], None).is_err());
        let mut bad = a.clone();
        bad[40] = 0.0;
        assert!(fit_decay_rate(&t, &bad, None).is_err());
    }

    #[test]
    fn mass_and_energy_of_rest_state() {
        let g = make_grid(8, 8, 5).unwrap();
        let p = PhysicalParams::default();
        let xi = Field2D::constant(&g, 1.0);
        let e = energy(&xi, &Field3D::zeros(&g, 2), &g, &p).unwrap();
        assert_eq!(e.total(), 0.0);
        assert_eq!(e.dissipation, 0.0);
        let rho = Field3D::from_fn(&g, 1, |_, _, _, z| 2.0 * z);
        assert!((total_mass(&rho, &g) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dissipation_of_shear() {
        // v = (sin 2πy (1 − z²), 0), μ' irrelevant: D = μ ∫ (2π)² cos² (1−z²)² + μ ∫ sin² (2z)².
        let g = make_grid(8, 8, 7).unwrap();
        let p = PhysicalParams {
            model: Model::GeneralNoGravity,
            pressure: Some(crate::transforms::PressureLaw::Linear { c: 1.0 }),
            ..PhysicalParams::default()
        };
        let v = Field3D::from_fn(&g, 2, |c, _, y, z| {
            if c == 0 {
                (std::f64::consts::TAU * y).sin() * (1.0 - z * z)
            } else {
                0.0
            }
        });
        let e = energy(&Field2D::constant(&g, 1.0), &v, &g, &p).unwrap();
        let tau2 = std::f64::consts::TAU.powi(2);
        let expect = tau2 * 0.5 * (8.0 / 15.0) + 0.5 * (4.0 / 3.0);
        assert!((e.dissipation - expect).abs() < 1e-12, "{}", e.dissipation);
        assert!((e.kinetic - 0.25 * 8.0 / 15.0).abs() < 1e-12);
    }
}
