use approx::assert_relative_eq;
use cpe_core::config::{GridSpec, InitialData, RunConfig};
use cpe_core::diagnostics::fit_decay_rate;
use cpe_core::evolve::{Mode, Mutation};
use cpe_core::grid::{make_grid, Field2D, Field3D};
use cpe_core::operators::{assemble_chs, lame_symbol_eigs};
use cpe_core::oracle::Jet;
use cpe_core::stokes::{solve_resolvent, ResolventProblem};
use cpe_core::transforms::PhysicalParams;
use cpe_core::verify::{run_criterion, VerifyOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_linear(
        seed in prop::collection::vec(-1.0f64..1.0, 64),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let g = make_grid(4, 4, 5).unwrap();
        let op = assemble_chs(1.2, &g, &PhysicalParams::default()).unwrap();
        let n = op.dim();
        let x: Vec<f64> = (0..n).map(|i| seed[i % 64] * ((i / 64) as f64 + 1.0).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| seed[(7 * i + 3) % 64]).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = op.apply(&combo);
        let (ax, ay) = (op.apply(&x), op.apply(&y));
        let rhs: Vec<f64> = ax.iter().zip(&ay).map(|(p, q)| a * p + b * q).collect();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(p, q)| p - q).collect();
        prop_assert!(norm(&diff) <= 1e-11 * (1.0 + norm(&rhs)));
    }

    #[test]
    fn symbol_is_positive_for_admissible_viscosities(
        mu in 0.05f64..5.0,
        frac in -0.95f64..5.0,
        k1 in -8i64..=8,
        k2 in -8i64..=8,
    ) {
        prop_assume!(k1 != 0 || k2 != 0);
        let e = lame_symbol_eigs((k1, k2), mu, frac * mu);
        prop_assert!(e.lambda1 > 0.0 && e.lambda2 > 0.0);
        let m = e.matrix;
        // trace and determinant of the 2x2 symbol match its eigenvalues
        assert_relative_eq!(m[0][0] + m[1][1], e.lambda1 + e.lambda2, max_relative = 1e-12);
        assert_relative_eq!(m[0][0] * m[1][1] - m[0][1] * m[1][0], e.lambda1 * e.lambda2, max_relative = 1e-10);
    }

    #[test]
    fn jet_rules_agree_with_closed_forms(x in -2.0f64..2.0, y in 0.3f64..2.0) {
        let (jx, jy) = (Jet::var(x, 0), Jet::var(y, 1));
        // f = sin(x) * y^{3/2} / y
        let f = jx.sin() * jy.powf(1.5) * jy.recip();
        let exact_v = x.sin() * y.sqrt();
        assert_relative_eq!(f.v, exact_v, epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(f.d[0], x.cos() * y.sqrt(), epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(f.d[1], 0.5 * x.sin() / y.sqrt(), epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(f.h[0], -x.sin() * y.sqrt(), epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(f.h[1], 0.5 * x.cos() / y.sqrt(), epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(f.h[2], -0.25 * x.sin() * y.powf(-1.5), epsilon = 1e-12, max_relative = 1e-12);
        let c = jx.cos() - jx.cos();
        prop_assert_eq!(c.v, 0.0);
    }

    #[test]
    fn decay_fit_recovers_exponentials(eta in 0.01f64..3.0, c in 1e-6f64..1e3, n in 14usize..80) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
        let a: Vec<f64> = t.iter().map(|t| c * (-eta * t).exp()).collect();
        let f = fit_decay_rate(&t, &a, None).unwrap();
        assert_relative_eq!(f.eta, eta, max_relative = 1e-9);
        prop_assert!(f.monotone && f.r2 > 1.0 - 1e-9);
    }

    #[test]
    fn config_roundtrips_through_json(
        nx in 3usize..6,
        dt in 1e-4f64..0.1,
        steps in 1usize..100,
        every in 1usize..10,
        amplitude in 1e-4f64..0.3,
        seed in any::<u64>(),
        which in 0usize..3,
    ) {
        let initial = match which {
            0 => InitialData::Steady,
            1 => InitialData::FourierPerturbation { amplitude, mode: [1, 0], velocity_scale: 0.5 },
            _ => InitialData::RandomSmooth { amplitude, seed, velocity_scale: 1.0 },
        };
        let mut cfg = RunConfig::new(GridSpec { nx: 2 * nx, ny: 2 * nx, nz: 5 }, Mode::LocalGamma1, dt, dt * steps as f64, initial);
        cfg.output_every = every;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn resolvent_solution_is_unique(omega in -50.0f64..50.0, re in 0.0f64..5.0, s in -1.0f64..1.0) {
        // (λ − A)x = 0 has only the trivial solution off the spectrum, and
        // the solution map is linear in the data.
        let g = make_grid(4, 4, 5).unwrap();
        let params = PhysicalParams::default();
        let lambda = Complex64::new(re, omega);
        prop_assume!(lambda.norm() > 1e-3);
        let zero = solve_resolvent(&ResolventProblem::real(lambda, Field2D::zeros(&g, 1), Field3D::zeros(&g, 2)), &g, &params).unwrap();
        prop_assert_eq!(zero.zeta.re.max_abs() + zero.v.re.max_abs() + zero.zeta.im.max_abs() + zero.v.im.max_abs(), 0.0);
        let f1 = Field2D::from_fn(&g, 1, |_, x, y| s + (6.283185307179586 * x).sin() * y);
        let f2 = Field3D::from_fn(&g, 2, |c, x, _, z| if c == 0 { (1.0 - z * z) * x } else { 0.0 });
        let one = solve_resolvent(&ResolventProblem::real(lambda, f1.clone(), f2.clone()), &g, &params).unwrap();
        let two = solve_resolvent(&ResolventProblem::real(lambda, f1.scaled(2.0), f2.scaled(2.0)), &g, &params).unwrap();
        let d = two.v.re.sub(&one.v.re.scaled(2.0)).max_abs() + two.zeta.re.sub(&one.zeta.re.scaled(2.0)).max_abs();
        prop_assert!(d <= 1e-9 * (1.0 + one.v.re.max_abs() + one.zeta.re.max_abs()), "nonlinear solution map: {}", d);
    }
}

#[test]
fn injected_sign_error_fails_the_oracle_criterion() {
    for m in [Mutation::FlipAdvection, Mutation::FlipViscousRemainder] {
        let r = run_criterion(5, &VerifyOptions { mutation: m });
        assert!(!r.passed, "{m:?} went unnoticed: {}", r.detail);
    }
}
