//! Versioned JSON run configuration. Unknown keys are rejected so a typo in
//! a tolerance name cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::Mode;
use crate::grid::{make_grid, Grid};
use crate::transforms::{Model, PhysicalParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Steady,
    FourierPerturbation {
        amplitude: f64,
        mode: [i64; 2],
        #[serde(default = "one")]
        velocity_scale: f64,
    },
    RandomSmooth {
        amplitude: f64,
        seed: u64,
        #[serde(default = "one")]
        velocity_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub lin_tol: f64,
    pub inv_tol: f64,
    pub det_floor: f64,
    pub mean_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lin_tol: 1e-12,
            inv_tol: 1e-10,
            det_floor: 0.1,
            mean_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Pointwise density bounds checked every step (local modes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub params: PhysicalParams,
    pub mode: Mode,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    pub initial: InitialData,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bounds: Option<DensityBounds>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write Eulerian field snapshots at each output step.
    #[serde(default)]
    pub snapshots: bool,
}

fn default_output_every() -> usize {
    1
}

impl RunConfig {
    pub fn new(grid: GridSpec, mode: Mode, dt: f64, t_end: f64, initial: InitialData) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid,
            params: PhysicalParams::with_model(mode.model()),
            mode,
            dt,
            t_end,
            output_every: 1,
            initial,
            tolerances: Tolerances::default(),
            bounds: None,
            output_dir: None,
            snapshots: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.grid.nx, self.grid.ny, self.grid.nz)
    }

    /// Density bounds in force: configured, else [M1/2, 2·M2] for local
    /// modes and [ξ̄/2, ∞) for the global mode.
    pub fn density_bounds(&self) -> DensityBounds {
        if let Some(b) = self.bounds {
            return b;
        }
        match self.mode {
            Mode::GlobalGamma1 => DensityBounds {
                lower: 0.5 * self.params.xi_bar,
                upper: f64::INFINITY,
            },
            _ => DensityBounds {
                lower: 0.5 * self.params.m1,
                upper: 2.0 * self.params.m2,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field `{field}`: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if let Err(e) = self.grid() {
            return bad("grid", e.to_string());
        }
        if let Err(e) = self.params.validate() {
            return bad("params", e.to_string());
        }
        if self.params.model != self.mode.model() {
            return bad(
                "params.model",
                format!("mode {:?} needs model {:?}, got {:?}", self.mode, self.mode.model(), self.params.model),
            );
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be >= 0, got {}", self.t_end));
        }
        if self.output_every == 0 {
            return bad("output_every", "must be >= 1".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.lin_tol", t.lin_tol),
            ("tolerances.inv_tol", t.inv_tol),
            ("tolerances.det_floor", t.det_floor),
            ("tolerances.mean_tol", t.mean_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be > 0, got {v}"));
            }
        }
        if let Some(b) = self.bounds {
            if !(b.lower > 0.0 && b.lower < b.upper) {
                return bad("bounds", format!("need 0 < lower < upper, got [{}, {}]", b.lower, b.upper));
            }
        }
        match self.initial {
            InitialData::Steady => {}
            InitialData::FourierPerturbation {
                amplitude,
                mode,
                velocity_scale,
            } => {
                if !(amplitude > 0.0) {
                    return bad("initial.amplitude", format!("must be > 0, got {amplitude}"));
                }
                if !(velocity_scale >= 0.0) {
                    return bad("initial.velocity_scale", format!("must be >= 0, got {velocity_scale}"));
                }
                if mode == [0, 0] {
                    return bad("initial.mode", "must be a nonzero wavenumber".into());
                }
                let (nx, ny) = (self.grid.nx as i64, self.grid.ny as i64);
                if 3 * mode[0].abs() > nx || 3 * mode[1].abs() > ny {
                    return bad("initial.mode", format!("{mode:?} is outside the dealiased band of a {nx}x{ny} grid"));
                }
            }
            InitialData::RandomSmooth {
                amplitude, velocity_scale, ..
            } => {
                if !(amplitude > 0.0) {
                    return bad("initial.amplitude", format!("must be > 0, got {amplitude}"));
                }
                if !(velocity_scale >= 0.0) {
                    return bad("initial.velocity_scale", format!("must be >= 0, got {velocity_scale}"));
                }
            }
        }
        if self.params.model == Model::Gamma2 && self.mode != Mode::LocalGamma2 {
            return bad("mode", "the gamma = 2 model only has a local mode".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> String {
        r#"{
  "schema_version": 1,
  "grid": {"nx": 8, "ny": 8, "nz": 5},
  "params": {"mu": 1.0, "mu_prime": 1.0, "model": "Gamma1"},
  "mode": "GlobalGamma1",
  "dt": 0.01,
  "t_end": 0.1,
  "initial": {"preset": "fourier_perturbation", "amplitude": 0.001, "mode": [1, 0]}
}"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::from_json(&base()).unwrap();
        assert_eq!(c.output_every, 1);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.density_bounds().lower, 0.5);
    }

    #[test]
    fn unknown_keys_are_errors_with_location() {
        let txt = base().replace("\"dt\": 0.01", "\"dt\": 0.01, \"lin_tol\": 1e-3");
        let e = RunConfig::from_json(&txt).unwrap_err().to_string();
        assert!(e.contains("lin_tol") && e.contains("line"), "{e}");
        let txt = base().replace("\"amplitude\": 0.001", "\"amplitude\": -1");
        let e = RunConfig::from_json(&txt).unwrap_err().to_string();
        assert!(e.contains("initial.amplitude"), "{e}");
        let txt = base().replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(RunConfig::from_json(&txt).unwrap_err().to_string().contains("schema_version"));
        let txt = base().replace("\"GlobalGamma1\"", "\"GeneralNoGravity\"");
        assert!(RunConfig::from_json(&txt).unwrap_err().to_string().contains("params.model"));
        let txt = base().replace("[1, 0]", "[3, 0]");
        assert!(RunConfig::from_json(&txt).unwrap_err().to_string().contains("initial.mode"));
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig::from_json(&base()).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&s).unwrap(), c);
    }
}
