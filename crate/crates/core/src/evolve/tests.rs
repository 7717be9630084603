use super::*;
use crate::config::GridSpec;
use crate::grid::make_grid;
use crate::oracle::{oracle_sample, Manufactured};

const MODES: [Mode; 4] = [Mode::LocalGamma1, Mode::LocalGamma2, Mode::GlobalGamma1, Mode::GeneralNoGravity];

fn params_for(mode: Mode) -> PhysicalParams {
    PhysicalParams {
        mu_prime: 0.7,
        ..PhysicalParams::with_model(mode.model())
    }
}

fn rel_err2(a: &Field2D, b: &Field2D) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1e-300)
}

fn rel_err3(a: &Field3D, b: &Field3D) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1e-300)
}

fn raw() -> EvalOptions {
    EvalOptions {
        dealias: false,
        mutation: Mutation::None,
    }
}

#[test]
fn nonlinearities_match_chain_rule_oracle() {
    let g = make_grid(24, 24, 7).unwrap();
    for mode in MODES {
        let p = params_for(mode);
        for seed in 0..3 {
            let man = Manufactured::random(mode, seed, 0.05, 0.02);
            let s = oracle_sample(&man, &g, &p).unwrap();
            let f1 = nonlinearity_f1_terms(&s.state, &g, &p, raw()).unwrap().total();
            let f2 = nonlinearity_f2_terms(&s.state, &s.dtv, &g, &p, raw()).unwrap().total();
            let (e1, e2) = (rel_err2(&f1, &s.f1), rel_err3(&f2, &s.f2));
            assert!(e1 < 1e-6 && e2 < 1e-6, "{mode:?} seed {seed}: F1 {e1:e}, F2 {e2:e}");
        }
    }
}

#[test]
fn mutations_are_detected() {
    let g = make_grid(24, 24, 7).unwrap();
    for mode in MODES {
        let p = params_for(mode);
        let man = Manufactured::random(mode, 11, 0.05, 0.02);
        let s = oracle_sample(&man, &g, &p).unwrap();
        for m in [Mutation::FlipAdvection, Mutation::FlipViscousRemainder] {
            let opts = EvalOptions {
                dealias: false,
                mutation: m,
            };
            let f2 = nonlinearity_f2_terms(&s.state, &s.dtv, &g, &p, opts).unwrap().total();
            let e = rel_err3(&f2, &s.f2);
            assert!(e > 1e-4, "{mode:?} {m:?} went unnoticed ({e:e})");
        }
    }
}

#[test]
fn w_vanishes_at_both_ends() {
    let g = make_grid(16, 16, 7).unwrap();
    for mode in MODES {
        let p = params_for(mode);
        let s = oracle_sample(&Manufactured::random(mode, 5, 0.05, 0.02), &g, &p).unwrap();
        let w = reconstruct_w(&s.state, &g, &p).unwrap();
        let scale = s.state.v.max_abs();
        assert_eq!(w.slab(0, 0).iter().fold(0.0f64, |m, x| m.max(x.abs())), 0.0);
        let top = w.slab(0, g.nz - 1).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(top < 1e-12 * scale.max(1.0), "{mode:?}: W(1) = {top:e}");
    }
}

#[test]
fn rest_state_is_a_fixed_point() {
    let g = make_grid(8, 8, 5).unwrap();
    for mode in MODES {
        let p = params_for(mode);
        let st = initial_state(&g, &p, mode, &InitialData::Steady, FlowTolerances::default()).unwrap();
        let mut stepper = Stepper::new(&g, &p, &st, 0.01, 1e-12, 100).unwrap();
        let mut s = st.clone();
        for _ in 0..20 {
            s = stepper.step(&s).unwrap();
        }
        assert!(s.v.max_abs() == 0.0 && s.zeta.sub(&st.zeta).max_abs() == 0.0, "{mode:?}");
    }
}

#[test]
fn implicit_step_solves_its_system() {
    // With F = 0 (rest density, zero map) a local step is a pure implicit solve.
    let g = make_grid(8, 8, 7).unwrap();
    let p = params_for(Mode::LocalGamma1);
    let init = InitialData::FourierPerturbation {
        amplitude: 0.1,
        mode: [1, 1],
        velocity_scale: 1.0,
    };
    let st = initial_state(&g, &p, Mode::LocalGamma1, &init, FlowTolerances::default()).unwrap();
    let mut stepper = Stepper::new(&g, &p, &st, 0.05, 1e-12, 200).unwrap();
    let next = stepper.step(&st).unwrap();
    assert!(stepper.last_iterations > 0 && stepper.last_iterations < 60);
    // ζ changes only through −ξ₀ div V̄ and F1 = 0 at t = 0 with the identity map
    assert!(next.zeta.sub(&st.zeta).max_abs() > 0.0);
    assert!(next.fm.t == 0.05);
}

#[test]
fn local_and_global_agree_on_constant_background() {
    // On ξ₀ ≡ ξ̄ = 1 the local γ = 1 mode and the global mode share the
    // linearization, so one step from the same data is identical up to the
    // handling of ζ (total vs perturbation).
    let g = make_grid(8, 8, 5).unwrap();
    let p = PhysicalParams::default();
    let mut v = Field3D::zeros(&g, 2);
    for k in 0..g.nz - 1 {
        for i in 0..g.nx {
            for j in 0..g.ny {
                v.set(0, k, i, j, 1e-3 * (TAU * g.y(j)).sin() * (1.0 - g.z(k).powi(2)));
            }
        }
    }
    let local = LagrangianState::new(&g, Mode::LocalGamma1, Field2D::constant(&g, 1.0), v.clone(), &p, FlowTolerances::default());
    let global = LagrangianState::new(&g, Mode::GlobalGamma1, Field2D::zeros(&g, 1), v, &p, FlowTolerances::default());
    let a = Stepper::new(&g, &p, &local, 0.01, 1e-14, 200).unwrap().step(&local).unwrap();
    let b = Stepper::new(&g, &p, &global, 0.01, 1e-14, 200).unwrap().step(&global).unwrap();
    assert!(a.v.sub(&b.v).max_abs() < 1e-12);
    assert!(a.zeta.map(|z| z - 1.0).sub(&b.zeta).max_abs() < 1e-12);
}

#[test]
fn run_records_and_terminates() {
    let mut cfg = RunConfig::new(
        GridSpec { nx: 8, ny: 8, nz: 5 },
        Mode::GlobalGamma1,
        0.01,
        0.1,
        InitialData::FourierPerturbation {
            amplitude: 1e-3,
            mode: [1, 0],
            velocity_scale: 1.0,
        },
    );
    cfg.output_every = 5;
    let r = run_simulation(&cfg).unwrap();
    assert_eq!(r.termination, Termination::Completed);
    assert_eq!(r.steps, 10);
    assert_eq!(r.records.len(), 3);
    assert!(r.records[2].amplitude < r.records[0].amplitude);
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with(StepRecord::HEADER));
}

#[test]
fn presets_respect_density_window() {
    let g = make_grid(8, 8, 5).unwrap();
    let p = PhysicalParams::default();
    let big = InitialData::FourierPerturbation {
        amplitude: 0.9,
        mode: [1, 0],
        velocity_scale: 1.0,
    };
    assert!(initial_state(&g, &p, Mode::LocalGamma1, &big, FlowTolerances::default()).is_err());
    let r = InitialData::RandomSmooth {
        amplitude: 0.3,
        seed: 9,
        velocity_scale: 1.0,
    };
    let s = initial_state(&g, &p, Mode::LocalGamma1, &r, FlowTolerances::default()).unwrap();
    assert!(s.zeta.min() >= 0.69 && s.zeta.max() <= 1.31);
    let s2 = initial_state(&g, &p, Mode::LocalGamma1, &r, FlowTolerances::default()).unwrap();
    assert_eq!(s.zeta, s2.zeta);
}
