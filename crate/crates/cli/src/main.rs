use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpe_core::config::RunConfig;
use cpe_core::diagnostics::{fit_decay_rate, DecayFit};
use cpe_core::evolve::{pull_back, run_simulation_with, Mutation, RunResult};
use cpe_core::grid::io::{write_binary_2d, write_binary_3d, write_csv_2d, write_csv_3d};
use cpe_core::grid::{make_grid, Field2D, Field3D};
use cpe_core::operators::symbol_ellipticity_report;
use cpe_core::stokes::{manufactured_resolvent, smooth_random_rhs, solve_resolvent, spectral_bound, ResolventProblem};
use cpe_core::transforms::{Model, PhysicalParams};
use cpe_core::verify::{run_suite, VerifyOptions};
use cpe_core::Error;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Overrides every output directory when set.
const OUTPUT_ENV: &str = "CPE_OUTPUT_DIR";

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "cpe", version, about = "Lagrangian solver for the hydrostatic compressible primitive equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation from a JSON config.
    ///
    /// Exit codes: 0 completed, 2 bad config, 3 positivity lost,
    /// 4 flow map not invertible, 5 blowup, 1 anything else.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Decay bound of the linearized operator and symbol ellipticity.
    Spectrum {
        /// Read grid and parameters from a run config instead of flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 8)]
        ny: usize,
        #[arg(long, default_value_t = 9)]
        nz: usize,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        mu_prime: f64,
        #[arg(long, default_value_t = 1.0)]
        xi_bar: f64,
    },
    /// Solve (λ − A)(ζ, V) = f for a problem described in JSON.
    Resolvent {
        problem: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        /// Inject a defect into the production F2 (the oracle check must fail).
        #[arg(long, value_enum)]
        mutation: Option<MutationArg>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MutationArg {
    FlipAdvection,
    FlipViscousRemainder,
}

fn output_dir(flag: Option<PathBuf>, from_config: Option<&Path>, default: &str) -> PathBuf {
    if let Some(d) = std::env::var_os(OUTPUT_ENV) {
        return PathBuf::from(d);
    }
    flag.or_else(|| from_config.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from(default))
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidParams(_) | Error::Compatibility { .. } => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

#[derive(Serialize)]
struct SimSummary<'a> {
    termination: &'a str,
    exit_code: u8,
    message: Option<&'a str>,
    warnings: &'a [String],
    steps: usize,
    t_final: f64,
    decay_fit: Option<DecayFit>,
    decay_fit_error: Option<String>,
    config: &'a RunConfig,
}

fn simulate(path: &Path, out: Option<PathBuf>) -> Result<u8, Error> {
    let cfg = RunConfig::load(path)?;
    let dir = output_dir(out, cfg.output_dir.as_deref(), "cpe-out");
    fs::create_dir_all(&dir)?;
    let g = cfg.grid()?;
    let snap_dir = dir.join("snapshots");
    if cfg.snapshots {
        fs::create_dir_all(&snap_dir)?;
    }
    let res: RunResult = run_simulation_with(&cfg, |st, rec| {
        if cfg.snapshots {
            let e = pull_back(st, &g, &cfg.params)?;
            let stem = |name: &str| snap_dir.join(format!("step{:07}_{name}", rec.step));
            write_binary_2d(&stem("xi"), &e.xi)?;
            write_binary_3d(&stem("v"), &e.v)?;
            write_binary_3d(&stem("w"), &e.w)?;
        }
        Ok(())
    })?;
    fs::write(dir.join("diagnostics.csv"), res.to_csv())?;
    let (t, a) = res.amplitude_series();
    let (decay_fit, decay_fit_error) = match fit_decay_rate(&t, &a, None) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let code = res.termination.exit_code() as u8;
    let term = serde_json::to_value(res.termination)?;
    let summary = SimSummary {
        termination: term.as_str().unwrap_or("unknown"),
        exit_code: code,
        message: res.message.as_deref(),
        warnings: &res.warnings,
        steps: res.steps,
        t_final: res.t_final,
        decay_fit,
        decay_fit_error,
        config: &cfg,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    eprintln!(
        "{}: {} steps to t = {} ({})",
        summary.termination,
        res.steps,
        res.t_final,
        dir.display()
    );
    Ok(code)
}

#[derive(Serialize)]
struct SpectrumReport {
    ok: bool,
    eta0: Option<f64>,
    max_re: Option<f64>,
    argmax_k: Option<(i64, i64)>,
    min_symbol_eigenvalue: f64,
    message: String,
}

fn spectrum(grid: (usize, usize, usize), params: PhysicalParams) -> Result<u8, Error> {
    let g = make_grid(grid.0, grid.1, grid.2)?;
    let kmax = (grid.0.max(grid.1) / 2) as i64;
    let ell = symbol_ellipticity_report(params.mu, params.mu_prime, kmax);
    let min_eig = ell.min_lambda1.min(ell.min_lambda2);
    let report = if !ell.ok {
        SpectrumReport {
            ok: false,
            eta0: None,
            max_re: None,
            argmax_k: None,
            min_symbol_eigenvalue: min_eig,
            message: ell.message,
        }
    } else {
        let b = spectral_bound(&g, &params)?;
        SpectrumReport {
            ok: b.ok,
            eta0: Some(b.eta0),
            max_re: Some(b.max_re),
            argmax_k: Some(b.argmax_k),
            min_symbol_eigenvalue: min_eig,
            message: if b.ok {
                format!("linearized operator decays at rate {:.6}", b.eta0)
            } else {
                format!("spectrum reaches Re = {:e}, no decay bound", b.max_re)
            },
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.ok { 0 } else { EXIT_OTHER })
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Rhs {
    Zero,
    SmoothRandom { seed: u64 },
    Manufactured,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolventSpec {
    grid: cpe_core::config::GridSpec,
    #[serde(default = "default_params")]
    params: PhysicalParams,
    /// [Re λ, Im λ]
    lambda: [f64; 2],
    rhs: Rhs,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

fn default_params() -> PhysicalParams {
    PhysicalParams::with_model(Model::Gamma1)
}

#[derive(Serialize)]
struct ResolventReport {
    lambda: [f64; 2],
    residual: f64,
    zeta_l2: f64,
    v_l2: f64,
    /// Max error against the exact solution (manufactured right-hand side only).
    error: Option<f64>,
}

fn resolvent(path: &Path, out: Option<PathBuf>) -> Result<u8, Error> {
    let text = fs::read_to_string(path)?;
    let spec: ResolventSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    spec.params.validate()?;
    let g = make_grid(spec.grid.nx, spec.grid.ny, spec.grid.nz)?;
    let lambda = Complex64::new(spec.lambda[0], spec.lambda[1]);
    let xi_bar = spec.params.xi_bar;
    let (problem, exact) = match spec.rhs {
        Rhs::Zero => {
            let mut p = ResolventProblem::real(lambda, Field2D::zeros(&g, 1), Field3D::zeros(&g, 2));
            p.xi_bar = xi_bar;
            (p, None)
        }
        Rhs::SmoothRandom { seed } => {
            let (f1, f2) = smooth_random_rhs(&g, seed);
            let mut p = ResolventProblem::real(lambda, f1, f2);
            p.xi_bar = xi_bar;
            (p, None)
        }
        Rhs::Manufactured => {
            let (p, z, v) = manufactured_resolvent(&g, &spec.params, lambda, xi_bar)?;
            (p, Some((z, v)))
        }
    };
    let sol = solve_resolvent(&problem, &g, &spec.params)?;
    let dir = output_dir(out, spec.output_dir.as_deref(), "cpe-resolvent");
    fs::create_dir_all(&dir)?;
    write_csv_2d(&dir.join("zeta_re.csv"), &g, &sol.zeta.re)?;
    write_csv_2d(&dir.join("zeta_im.csv"), &g, &sol.zeta.im)?;
    write_csv_3d(&dir.join("v_re.csv"), &g, &sol.v.re)?;
    write_csv_3d(&dir.join("v_im.csv"), &g, &sol.v.im)?;
    let error = exact.map(|(z, v)| {
        sol.zeta
            .re
            .sub(&z)
            .max_abs()
            .max(sol.zeta.im.max_abs())
            .max(sol.v.re.sub(&v).max_abs())
            .max(sol.v.im.max_abs())
    });
    let report = ResolventReport {
        lambda: spec.lambda,
        residual: sol.residual,
        zeta_l2: (sol.zeta.re.l2().powi(2) + sol.zeta.im.l2().powi(2)).sqrt(),
        v_l2: (sol.v.re.l2(&g).powi(2) + sol.v.im.l2(&g).powi(2)).sqrt(),
        error,
    };
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(dir.join("report.json"), &json)?;
    println!("{json}");
    Ok(0)
}

fn verify(mutation: Option<MutationArg>) -> u8 {
    let opts = VerifyOptions {
        mutation: match mutation {
            None => Mutation::None,
            Some(MutationArg::FlipAdvection) => Mutation::FlipAdvection,
            Some(MutationArg::FlipViscousRemainder) => Mutation::FlipViscousRemainder,
        },
    };
    let results = run_suite(&opts);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        0
    } else {
        EXIT_OTHER
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Cmd::Simulate { config, output_dir } => simulate(&config, output_dir),
        Cmd::Spectrum {
            config,
            nx,
            ny,
            nz,
            mu,
            mu_prime,
            xi_bar,
        } => match config {
            Some(p) => RunConfig::load(&p).and_then(|c| spectrum((c.grid.nx, c.grid.ny, c.grid.nz), c.params)),
            None => {
                let params = PhysicalParams {
                    mu,
                    mu_prime,
                    xi_bar,
                    ..PhysicalParams::default()
                };
                spectrum((nx, ny, nz), params)
            }
        },
        Cmd::Resolvent { problem, output_dir } => resolvent(&problem, output_dir),
        Cmd::Verify { mutation } => Ok(verify(mutation)),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
