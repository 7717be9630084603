//! The acceptance suite: eleven numerical checks of the operators, solvers
//! and the evolution, each reduced to a pass/fail with the measured numbers.

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{GridSpec, InitialData, RunConfig};
use crate::diagnostics::fit_decay_rate;
use crate::error::{Error, Result};
use crate::evolve::{nonlinearity_f1_terms, nonlinearity_f2_terms, run_simulation, EvalOptions, Mode, Mutation, RunResult, Termination};
use crate::flowmap::{advance_flow, check_invertibility, invert_map, inversion_residual, FlowMap, SpectralInterp};
use crate::grid::{make_grid, Field2D, Field3D};
use crate::operators::{assemble_chs, lame_symbol_eigs, LameOperator, LinearOperator};
use crate::oracle::{oracle_sample, Manufactured};
use crate::stokes::{
    imaginary_axis_resolvent_sweep, manufactured_resolvent, smooth_random_rhs, solve_resolvent, solve_steady_decomposed, spectral_bound,
    spectral_bound_dense, ResolventProblem,
};
use crate::transforms::{Model, PhysicalParams, PressureLaw};

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Defect injected into the production F2 for the oracle check.
    pub mutation: Mutation,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {:<22} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const CRITERIA: [(usize, &str); 11] = [
    (1, "symbol"),
    (2, "operator oracle"),
    (3, "spectral bound"),
    (4, "resolvent"),
    (5, "nonlinearity oracle"),
    (6, "conservation"),
    (7, "fixed point"),
    (8, "small-data decay"),
    (9, "positivity"),
    (10, "flow map"),
    (11, "determinism"),
];

/// Checks accumulate into a verdict plus a human-readable summary.
struct Verdict {
    ok: bool,
    notes: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self { ok: true, notes: Vec::new() }
    }

    fn check(&mut self, cond: bool, note: String) {
        if !cond {
            self.ok = false;
            self.notes.push(format!("FAILED {note}"));
        } else {
            self.notes.push(note);
        }
    }

    fn finish(self) -> (bool, String) {
        (self.ok, self.notes.join("; "))
    }
}

pub fn run_criterion(id: usize, opts: &VerifyOptions) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
    let t0 = Instant::now();
    let out = match id {
        1 => symbol(),
        2 => operator_oracle(),
        3 => spectrum().map(|(ok, d, _)| (ok, d)),
        4 => resolvent(),
        5 => nonlinearity(opts.mutation),
        6 => conservation(),
        7 => fixed_point(),
        8 => decay(),
        9 => positivity(),
        10 => flow_map(),
        11 => determinism(),
        _ => Err(Error::InvalidParams(format!("no criterion {id}"))),
    };
    let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(opts: &VerifyOptions) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|&(id, _)| run_criterion(id, opts)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn symbol() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut v = Verdict::new();
    let mut worst = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut count = 0;
    for _ in 0..5 {
        let mu = rng.gen_range(0.1..3.0);
        let mu_prime = rng.gen_range(-0.95 * mu..3.0);
        for k1 in -8i64..=8 {
            for k2 in -8i64..=8 {
                let r2 = k1 * k1 + k2 * k2;
                if r2 == 0 || r2 > 64 {
                    continue;
                }
                let e = lame_symbol_eigs((k1, k2), mu, mu_prime);
                let m = Matrix2::new(e.matrix[0][0], e.matrix[0][1], e.matrix[1][0], e.matrix[1][1]);
                let mut dense: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                dense.sort_by(f64::total_cmp);
                let mut ours = [e.lambda1, e.lambda2];
                ours.sort_by(f64::total_cmp);
                worst = worst.max(rel(ours[0], dense[0])).max(rel(ours[1], dense[1]));
                min_eig = min_eig.min(ours[0]);
                count += 1;
            }
        }
    }
    v.check(worst <= 1e-12, format!("max rel err {worst:.2e} over {count} (k, mu, mu') samples"));
    v.check(min_eig > 0.0, format!("min eigenvalue {min_eig:.3e}"));
    Ok(v.finish())
}

fn operator_oracle() -> Result<(bool, String)> {
    let g = make_grid(4, 4, 5)?;
    let xi0 = Field2D::from_fn(&g, 1, |_, x, y| 1.0 + 0.3 * (TAU * x).sin() * (TAU * y).cos());
    let ops = [
        ("A_HL", LinearOperator::lame(&g, LameOperator::gamma1(&g, 1.0, 0.7, &xi0)?)),
        ("A_CHS", assemble_chs(1.3, &g, &PhysicalParams::default())?),
    ];
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, op) in ops {
        let a = op.dense()?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let x: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = op.apply(&x);
            let yd = &a * DVector::from_column_slice(&x);
            let num = y.iter().zip(yd.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(num / yd.norm().max(1e-300));
        }
        v.check(worst <= 1e-10, format!("{name} max rel diff {worst:.2e}"));
    }
    Ok(v.finish())
}

/// Returns the verdict and the dense η₀ at (8,8,9).
pub fn spectrum() -> Result<(bool, String, f64)> {
    let params = PhysicalParams::default();
    let g8 = make_grid(8, 8, 9)?;
    let fine = spectral_bound_dense(&g8, &params)?;
    let coarse = spectral_bound_dense(&make_grid(6, 6, 7)?, &params)?;
    let mut v = Verdict::new();
    v.check(
        fine.eta0 > 0.0 && fine.max_re == -fine.eta0,
        format!("eta0(8,8,9) = {:.6} (max Re = {:.6})", fine.eta0, fine.max_re),
    );
    let drift = rel(coarse.eta0, fine.eta0);
    v.check(drift <= 0.2, format!("eta0(6,6,7) = {:.6}, rel change {drift:.3}", coarse.eta0));
    let op = assemble_chs(1.0, &g8, &params)?;
    let x = op.pack(Some(&Field2D::constant(&g8, 1.0)), &Field3D::zeros(&g8, 2));
    let ax = op.dense()? * DVector::from_column_slice(&x);
    let null = ax.amax();
    v.check(null <= 1e-13, format!("|A (1, 0)| = {null:.1e}"));
    let (ok, d) = v.finish();
    Ok((ok, d, fine.eta0))
}

fn resolvent() -> Result<(bool, String)> {
    let g = make_grid(8, 8, 9)?;
    let params = PhysicalParams::default();
    let mut v = Verdict::new();
    let mut worst = 0.0f64;
    for lambda in [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, 10.0),
        Complex64::new(0.0, 100.0),
    ] {
        let (p, zeta, vel) = manufactured_resolvent(&g, &params, lambda, 1.0)?;
        let s = solve_resolvent(&p, &g, &params)?;
        let err = s.zeta.re.sub(&zeta).max_abs().max(s.zeta.im.max_abs()).max(s.v.re.sub(&vel).max_abs()).max(s.v.im.max_abs());
        worst = worst.max(s.residual).max(err);
    }
    v.check(worst <= 1e-8, format!("manufactured residual/error {worst:.1e}"));

    let f1 = Field2D::from_fn(&g, 1, |_, x, _| 0.1 + (TAU * x).sin());
    let p = ResolventProblem::real(Complex64::new(0.0, 0.0), f1, Field3D::zeros(&g, 2));
    let rejected = matches!(solve_resolvent(&p, &g, &params), Err(Error::Compatibility { .. }));
    v.check(rejected, "mean f1 at lambda = 0 rejected".into());

    let pm = PhysicalParams {
        mu_prime: 0.5,
        ..params.clone()
    };
    let (f1, f2) = smooth_random_rhs(&g, 11);
    let mono = solve_resolvent(&ResolventProblem::real(Complex64::new(0.0, 0.0), f1.clone(), f2.clone()), &g, &pm)?;
    let dec = solve_steady_decomposed(&f1, &f2, &g, &pm)?;
    let e = (dec.zeta.sub(&mono.zeta.re).max_abs() / mono.zeta.re.max_abs())
        .max(dec.v.sub(&mono.v.re).max_abs() / mono.v.re.max_abs());
    v.check(e <= 1e-7, format!("decomposed vs monolithic {e:.1e} ({} Picard its)", dec.iterations));

    let lams: Vec<f64> = (0..6).map(|j| 10f64.powi(j)).chain([0.0]).collect();
    let sw = imaginary_axis_resolvent_sweep(&g, &params, &lams, 5)?;
    v.check(sw.bounded, format!("sweep max ratio {:.3}, ratio slope {:.3}", sw.max_ratio, sw.ratio_slope));
    v.check((sw.v_slope + 1.0).abs() <= 0.1, format!("|V| slope {:.4}", sw.v_slope));
    Ok(v.finish())
}

fn nonlinearity(mutation: Mutation) -> Result<(bool, String)> {
    let g = make_grid(24, 24, 7)?;
    let mut v = Verdict::new();
    for mode in [Mode::LocalGamma1, Mode::LocalGamma2, Mode::GlobalGamma1, Mode::GeneralNoGravity] {
        let p = PhysicalParams {
            mu_prime: 0.7,
            ..PhysicalParams::with_model(mode.model())
        };
        let mut worst = 0.0f64;
        let mut weakest_mutant = f64::INFINITY;
        for seed in 0..10 {
            let s = oracle_sample(&Manufactured::random(mode, 100 + seed, 0.05, 0.02), &g, &p)?;
            let opts = EvalOptions { dealias: false, mutation };
            let f1 = nonlinearity_f1_terms(&s.state, &g, &p, opts)?.total();
            let f2 = nonlinearity_f2_terms(&s.state, &s.dtv, &g, &p, opts)?.total();
            let e1 = f1.sub(&s.f1).max_abs() / s.f1.max_abs();
            let e2 = f2.sub(&s.f2).max_abs() / s.f2.max_abs();
            worst = worst.max(e1).max(e2);
            for m in [Mutation::FlipAdvection, Mutation::FlipViscousRemainder] {
                let mo = EvalOptions { dealias: false, mutation: m };
                let fm = nonlinearity_f2_terms(&s.state, &s.dtv, &g, &p, mo)?.total();
                weakest_mutant = weakest_mutant.min(fm.sub(&s.f2).max_abs() / s.f2.max_abs());
            }
        }
        v.check(worst <= 1e-6, format!("{mode:?} rel err {worst:.1e}"));
        v.check(weakest_mutant > 1e-6, format!("{mode:?} mutants off by >= {weakest_mutant:.1e}"));
    }
    Ok(v.finish())
}

fn run(cfg: &RunConfig) -> Result<RunResult> {
    run_simulation(cfg)
}

fn conservation() -> Result<(bool, String)> {
    let grid = GridSpec { nx: 16, ny: 16, nz: 9 };
    let init = InitialData::RandomSmooth {
        amplitude: 0.1,
        seed: 3,
        velocity_scale: 1.0,
    };
    let mut v = Verdict::new();
    let mut ng = PhysicalParams::with_model(Model::GeneralNoGravity);
    ng.pressure = Some(PressureLaw::Power { kappa: 1.0, gamma: 1.4 });
    for (mode, params) in [
        (Mode::LocalGamma1, PhysicalParams::default()),
        (Mode::GeneralNoGravity, ng),
    ] {
        let mut res = Vec::new();
        for (dt, steps) in [(1e-3, 100usize), (5e-4, 200)] {
            let mut cfg = RunConfig::new(grid, mode, dt, dt * steps as f64, init);
            cfg.params = params.clone();
            cfg.output_every = steps;
            let r = run(&cfg)?;
            if r.termination != Termination::Completed {
                return Ok((false, format!("{mode:?} run ended with {:?}", r.termination)));
            }
            res.push(*r.records.last().expect("records"));
        }
        if mode == Mode::LocalGamma1 {
            let (d1, d2) = (res[0].mass_drift, res[1].mass_drift);
            v.check(d1 <= 1e-6, format!("mass drift {d1:.2e} (100 steps, dt 1e-3)"));
            let q = d1 / d2;
            v.check((1.4..=2.6).contains(&q), format!("mass drift ratio {q:.3}"));
        }
        let q = res[0].energy_residual / res[1].energy_residual;
        v.check((1.4..=2.6).contains(&q), format!("{mode:?} energy residual ratio {q:.3} ({:.2e})", res[0].energy_residual));
    }
    Ok(v.finish())
}

fn fixed_point() -> Result<(bool, String)> {
    let cfg = RunConfig::new(GridSpec { nx: 8, ny: 8, nz: 5 }, Mode::GlobalGamma1, 0.01, 10.0, InitialData::Steady);
    let mut cfg = cfg;
    cfg.output_every = 1000;
    let r = run(&cfg)?;
    let st = r.final_state.as_ref().expect("state");
    let g = cfg.grid()?;
    let dev = st
        .zeta
        .max_abs()
        .max(st.v.max_abs())
        .max(st.fm.disp.max_abs())
        .max(check_invertibility(&st.fm).supnorm_dev)
        .max(st.zeta.l2() + st.v.l2(&g));
    let mut v = Verdict::new();
    v.check(r.steps == 1000 && r.termination == Termination::Completed, format!("{} steps, {:?}", r.steps, r.termination));
    v.check(dev <= 1e-13, format!("max deviation {dev:.1e}"));
    Ok(v.finish())
}

fn decay() -> Result<(bool, String)> {
    let eta0 = spectral_bound(&make_grid(8, 8, 9)?, &PhysicalParams::default())?.eta0;
    let mut cfg = RunConfig::new(
        GridSpec { nx: 16, ny: 16, nz: 9 },
        Mode::GlobalGamma1,
        0.01,
        20.0,
        InitialData::FourierPerturbation {
            amplitude: 1e-3,
            mode: [1, 0],
            velocity_scale: 1.0,
        },
    );
    cfg.output_every = 10;
    let r = run(&cfg)?;
    let mut v = Verdict::new();
    v.check(r.termination == Termination::Completed, format!("{:?}", r.termination));
    let (t, a) = r.amplitude_series();
    let fit = fit_decay_rate(&t, &a, None)?;
    v.check(fit.monotone, format!("monotone after t = {:.1}", fit.t_skip));
    let q = fit.eta / eta0;
    v.check((0.5..=1.5).contains(&q), format!("eta = {:.4} = {q:.3} eta0 (R2 = {:.6})", fit.eta, fit.r2));
    let lo = r.records.iter().map(|x| x.xi_min).fold(f64::INFINITY, f64::min);
    v.check(lo >= 0.5 * cfg.params.xi_bar, format!("min xi {lo:.6}"));
    Ok(v.finish())
}

fn positivity() -> Result<(bool, String)> {
    let grid = GridSpec { nx: 12, ny: 12, nz: 7 };
    let mut v = Verdict::new();
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut runs = 0;
    for mode in [Mode::LocalGamma1, Mode::LocalGamma2, Mode::GeneralNoGravity] {
        for init in [
            InitialData::RandomSmooth {
                amplitude: 0.45,
                seed: 7,
                velocity_scale: 1.0,
            },
            InitialData::FourierPerturbation {
                amplitude: 0.45,
                mode: [1, 1],
                velocity_scale: 1.0,
            },
        ] {
            let mut cfg = RunConfig::new(grid, mode, 0.01, 2.0, init);
            cfg.params.m1 = 0.5;
            cfg.params.m2 = 2.0;
            let b = cfg.density_bounds();
            let r = run(&cfg)?;
            let lo = r.records.iter().map(|x| x.xi_min).fold(f64::INFINITY, f64::min);
            let hi = r.records.iter().map(|x| x.xi_max).fold(f64::NEG_INFINITY, f64::max);
            range = (range.0.min(lo), range.1.max(hi));
            runs += 1;
            if r.termination != Termination::Completed || lo < b.lower || hi > b.upper {
                v.check(false, format!("{mode:?} {init:?}: {:?}, range [{lo}, {hi}]", r.termination));
            }
        }
    }
    v.check(true, format!("{runs} local runs within [0.25, 4]: range [{:.4}, {:.4}]", range.0, range.1));
    let stress = RunConfig::new(
        GridSpec { nx: 16, ny: 16, nz: 9 },
        Mode::GlobalGamma1,
        0.002,
        1.0,
        InitialData::FourierPerturbation {
            amplitude: 0.45,
            mode: [1, 0],
            velocity_scale: 50.0,
        },
    );
    let r = run(&stress)?;
    let finite = r.final_state.as_ref().is_some_and(|s| s.is_finite());
    v.check(
        r.termination != Termination::Completed && r.termination != Termination::Blowup && finite,
        format!("stress run: {:?} after {} steps", r.termination, r.steps),
    );
    Ok(v.finish())
}

/// ∞-norm of M − I at node p of a 4-component matrix field.
fn node_dev(m: &Field2D, p: usize) -> f64 {
    let n = m.nh();
    let r1 = (m.data[p] - 1.0).abs() + m.data[n + p].abs();
    let r2 = m.data[2 * n + p].abs() + (m.data[3 * n + p] - 1.0).abs();
    r1.max(r2)
}

fn flow_map() -> Result<(bool, String)> {
    let g = make_grid(16, 16, 3)?;
    let mut v = Verdict::new();
    let vel = |a: f64| {
        Field2D::from_fn(&g, 2, move |c, x, y| {
            if c == 0 {
                a * (TAU * y).sin()
            } else {
                0.5 * a * (TAU * x).cos()
            }
        })
    };
    // small deformation roundtrip
    let fm = advance_flow(&g, &FlowMap::identity(&g), &vel(0.2), 0.1)?;
    let y = invert_map(&g, &fm)?;
    let res = inversion_residual(&g, &fm, &y);
    v.check(res <= 1e-10, format!("roundtrip {res:.1e}"));
    // Neumann bound along a growing shear until |∇X − I| reaches 1/2
    let mut fm = FlowMap::identity(&g);
    let mut worst = 0.0f64;
    let mut reached = 0.0f64;
    for _ in 0..200 {
        fm = match advance_flow(&g, &fm, &vel(1.0), 0.005) {
            Ok(f) => f,
            Err(_) => break,
        };
        if check_invertibility(&fm).supnorm_dev > 0.5 {
            break;
        }
        for p in 0..g.nh() {
            let d = node_dev(&fm.grad, p);
            reached = reached.max(d);
            if d > 0.0 {
                worst = worst.max(node_dev(&fm.z, p) / d);
            }
        }
    }
    v.check(worst <= 2.0 && reached > 0.4, format!("max |Z-I|/|gradX-I| = {worst:.3} up to |gradX-I| = {reached:.3}"));
    // Liouville: d/dt det∇X = det∇X · (div v̄)∘X
    // compressible, so det∇X actually evolves
    let u = Field2D::from_fn(&g, 2, |c, x, y| {
        if c == 0 {
            0.3 * (TAU * x).sin() + 0.1 * (TAU * y).cos()
        } else {
            0.2 * (TAU * y).sin()
        }
    });
    let fm0 = advance_flow(&g, &FlowMap::identity(&g), &u, 0.2)?;
    let div: Vec<f64> = {
        let a = g.deriv(u.comp(0), 1, 0);
        let b = g.deriv(u.comp(1), 0, 1);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    };
    let interp = SpectralInterp::new(&g, &[&div]);
    let pos = fm0.positions(&g);
    let resid = |dt: f64| -> Result<f64> {
        let f1 = advance_flow(&g, &fm0, &u, dt)?;
        let mut m = 0.0f64;
        for p in 0..g.nh() {
            let d = interp.eval(pos.data[p], pos.data[g.nh() + p])[0];
            let r = (f1.det.data[p] - fm0.det.data[p]) / dt - fm0.det.data[p] * d;
            m = m.max(r.abs());
        }
        Ok(m)
    };
    let (r1, r2) = (resid(1e-2)?, resid(5e-3)?);
    let q = r1 / r2;
    v.check((1.6..=2.4).contains(&q), format!("Liouville residual {r1:.2e} -> {r2:.2e} (ratio {q:.2})"));
    Ok(v.finish())
}

fn determinism() -> Result<(bool, String)> {
    let mut cfg = RunConfig::new(
        GridSpec { nx: 12, ny: 12, nz: 7 },
        Mode::LocalGamma1,
        0.01,
        0.5,
        InitialData::RandomSmooth {
            amplitude: 0.2,
            seed: 42,
            velocity_scale: 1.0,
        },
    );
    cfg.output_every = 5;
    let a = run(&cfg)?.to_csv();
    let b = run(&cfg)?.to_csv();
    let mut v = Verdict::new();
    v.check(a == b && a.lines().count() > 2, format!("{} CSV bytes identical across runs", a.len()));
    Ok(v.finish())
}
