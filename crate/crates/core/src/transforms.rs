//! Model constants, the vertical coordinate change z' = (1 − e^{−z})/δ, and
//! reconstruction of density and pressure from the surface value ξ.
//!
//! The normalization c = g = 1 is hard-coded for the two gravity cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field2D, Field3D, Grid};

/// δ = 1 − e^{−1}.
pub const DELTA: f64 = 0.632_120_558_828_557_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Gamma1,
    Gamma2,
    GeneralNoGravity,
}

/// Pressure law for the no-gravity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureLaw {
    /// P(s) = c s
    Linear { c: f64 },
    /// P(s) = κ s^γ
    Power { kappa: f64, gamma: f64 },
}

impl PressureLaw {
    pub fn p(&self, s: f64) -> f64 {
        match *self {
            Self::Linear { c } => c * s,
            Self::Power { kappa, gamma } => kappa * s.powf(gamma),
        }
    }

    pub fn dp(&self, s: f64) -> f64 {
        match *self {
            Self::Linear { c } => c,
            Self::Power { kappa, gamma } => kappa * gamma * s.powf(gamma - 1.0),
        }
    }

    /// ẽ(ξ) = ξ ∫₁^ξ P(s)/s² ds − P(1)(ξ − 1).
    pub fn energy_density(&self, xi: f64) -> f64 {
        let integral = match *self {
            Self::Linear { c } => c * xi.ln(),
            Self::Power { kappa, gamma } => {
                if (gamma - 1.0).abs() < 1e-12 {
                    kappa * xi.ln()
                } else {
                    kappa * (xi.powf(gamma - 1.0) - 1.0) / (gamma - 1.0)
                }
            }
        };
        xi * integral - self.p(1.0) * (xi - 1.0)
    }

    /// Extremes of P' sampled on [lo, hi].
    pub fn dp_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut c1 = f64::INFINITY;
        let mut c2 = f64::NEG_INFINITY;
        for i in 0..=200 {
            let s = lo + (hi - lo) * i as f64 / 200.0;
            let d = self.dp(s);
            c1 = c1.min(d);
            c2 = c2.max(d);
        }
        (c1, c2)
    }
}

fn default_xi_bar() -> f64 {
    1.0
}
fn default_m1() -> f64 {
    0.5
}
fn default_m2() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub mu: f64,
    pub mu_prime: f64,
    pub model: Model,
    #[serde(default = "default_xi_bar")]
    pub xi_bar: f64,
    #[serde(default = "default_m1")]
    pub m1: f64,
    #[serde(default = "default_m2")]
    pub m2: f64,
    #[serde(default)]
    pub pressure: Option<PressureLaw>,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            mu_prime: 1.0,
            model: Model::Gamma1,
            xi_bar: 1.0,
            m1: 0.5,
            m2: 2.0,
            pressure: None,
        }
    }
}

impl PhysicalParams {
    pub fn with_model(model: Model) -> Self {
        let pressure = match model {
            Model::GeneralNoGravity => Some(PressureLaw::Linear { c: 1.0 }),
            _ => None,
        };
        Self {
            model,
            pressure,
            ..Self::default()
        }
    }

    pub fn gravity(&self) -> f64 {
        match self.model {
            Model::GeneralNoGravity => 0.0,
            _ => 1.0,
        }
    }

    pub fn sound_speed(&self) -> f64 {
        1.0
    }

    pub fn pressure_law(&self) -> PressureLaw {
        self.pressure.unwrap_or(PressureLaw::Linear { c: 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParams(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.mu + self.mu_prime > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mu + mu_prime must be > 0, got {}",
                self.mu + self.mu_prime
            )));
        }
        if !(self.xi_bar > 0.0) {
            return Err(Error::InvalidParams("xi_bar must be > 0".into()));
        }
        if !(self.m1 > 0.0 && self.m1 <= self.m2) {
            return Err(Error::InvalidParams(format!(
                "need 0 < m1 <= m2, got m1={}, m2={}",
                self.m1, self.m2
            )));
        }
        if self.model == Model::GeneralNoGravity {
            let (c1, _) = self.pressure_law().dp_bounds(0.5 * self.m1, 2.0 * self.m2);
            if !(c1 > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "pressure law derivative must stay positive, min P' = {c1}"
                )));
            }
        } else if self.pressure.is_some() {
            return Err(Error::InvalidParams(
                "a pressure law is only used by the GeneralNoGravity model".into(),
            ));
        }
        Ok(())
    }
}

pub fn zprime_of_z(z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain { value: z });
    }
    Ok((-(-z).exp_m1()) / DELTA)
}

pub fn z_of_zprime(zp: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&zp) {
        return Err(Error::Domain { value: zp });
    }
    Ok(-(-DELTA * zp).ln_1p())
}

fn check_positive(xi: &Field2D) -> Result<()> {
    let m = xi.min();
    if !(m > 0.0) {
        return Err(Error::NonpositiveDensity { min: m });
    }
    Ok(())
}

/// Density profile factor for the given model at the grid's vertical node.
/// `z` is the physical height for Gamma1 when `physical` is true and the
/// transformed coordinate otherwise.
fn profile(model: Model, xi: f64, z: f64, physical: bool) -> f64 {
    match model {
        Model::Gamma1 if physical => xi * (-z).exp(),
        Model::Gamma1 => xi * (1.0 - DELTA * z),
        Model::Gamma2 => xi + 0.5 * z,
        Model::GeneralNoGravity => xi,
    }
}

/// Density on the grid with the vertical nodes read as physical height.
pub fn density_from_surface(xi: &Field2D, g: &Grid, params: &PhysicalParams) -> Result<Field3D> {
    density_impl(xi, g, params, true)
}

/// Density on the grid with the vertical nodes read in the simulation
/// coordinate (transformed z' for Gamma1, physical z otherwise).
pub fn density_transformed(xi: &Field2D, g: &Grid, params: &PhysicalParams) -> Result<Field3D> {
    density_impl(xi, g, params, false)
}

fn density_impl(xi: &Field2D, g: &Grid, params: &PhysicalParams, physical: bool) -> Result<Field3D> {
    check_positive(xi)?;
    let mut rho = Field3D::zeros(g, 1);
    for k in 0..g.nz {
        let z = g.z(k);
        for (r, &x) in rho.slab_mut(0, k).iter_mut().zip(xi.comp(0)) {
            *r = profile(params.model, x, z, physical);
        }
    }
    Ok(rho)
}

pub fn pressure_from_density(rho: &Field3D, params: &PhysicalParams) -> Field3D {
    match params.model {
        Model::Gamma1 => rho.scaled(params.sound_speed()),
        Model::Gamma2 => rho.map(|r| r * r),
        Model::GeneralNoGravity => {
            let law = params.pressure_law();
            rho.map(|r| law.p(r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn delta_value() {
        assert!((DELTA - (1.0 - (-1.0f64).exp())).abs() < 1e-16);
        assert!((DELTA - 0.6321205588).abs() < 1e-9);
    }

    #[test]
    fn coordinate_map() {
        assert_eq!(zprime_of_z(0.0).unwrap(), 0.0);
        assert!((zprime_of_z(1.0).unwrap() - 1.0).abs() < 1e-15);
        let half = (1.0 - (-0.5f64).exp()) / DELTA;
        assert!((zprime_of_z(0.5).unwrap() - half).abs() < 1e-15);
        assert!((half - 0.622459).abs() < 1e-6);
        assert!((z_of_zprime(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(zprime_of_z(1.5).is_err());
        assert!(z_of_zprime(-0.1).is_err());
    }

    #[test]
    fn slope_matches_derivative() {
        for i in 1..20 {
            let z = i as f64 / 20.0;
            let h = 1e-6;
            let fd = (zprime_of_z(z + h).unwrap() - zprime_of_z(z - h).unwrap()) / (2.0 * h);
            assert!((fd - (-z).exp() / DELTA).abs() < 1e-6);
        }
    }

    #[test]
    fn densities() {
        let g = make_grid(4, 4, 5).unwrap();
        let p1 = PhysicalParams::default();
        let one = Field2D::constant(&g, 1.0);
        let two = Field2D::constant(&g, 2.0);
        let r = density_from_surface(&one, &g, &p1).unwrap();
        assert_eq!(r.get(0, 0, 0, 0), 1.0);
        let r = density_from_surface(&two, &g, &p1).unwrap();
        assert!((r.get(0, 4, 1, 1) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let p2 = PhysicalParams::with_model(Model::Gamma2);
        let r = density_from_surface(&one, &g, &p2).unwrap();
        assert_eq!(r.get(0, 4, 2, 3), 1.5);
        assert_eq!(pressure_from_density(&r, &p2).get(0, 4, 0, 0), 2.25);
        assert!(density_from_surface(&Field2D::constant(&g, 0.0), &g, &p1).is_err());
    }

    #[test]
    fn transformed_profile_matches_physical() {
        for i in 0..=50 {
            let z = i as f64 / 50.0;
            let zp = zprime_of_z(z).unwrap();
            let a = profile(Model::Gamma1, 1.7, zp, false);
            let b = profile(Model::Gamma1, 1.7, z, true);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_density_is_nonnegative() {
        for law in [
            PressureLaw::Linear { c: 1.0 },
            PressureLaw::Power { kappa: 1.0, gamma: 1.4 },
        ] {
            for i in 1..100 {
                let xi = i as f64 * 0.05;
                assert!(law.energy_density(xi) >= -1e-15);
            }
            assert_eq!(law.energy_density(1.0), 0.0);
        }
        // Linear law with c = 1 reproduces ξ log ξ + 1 − ξ.
        let law = PressureLaw::Linear { c: 1.0 };
        let x: f64 = 1.3;
        assert!((law.energy_density(x) - (x * x.ln() + 1.0 - x)).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(PhysicalParams::default().validate().is_ok());
        let bad = PhysicalParams {
            mu_prime: -1.5,
            ..PhysicalParams::default()
        };
        assert!(bad.validate().is_err());
        let ng = PhysicalParams {
            pressure: Some(PressureLaw::Power { kappa: 1.0, gamma: 2.0 }),
            ..PhysicalParams::with_model(Model::GeneralNoGravity)
        };
        assert!(ng.validate().is_ok());
    }
}
