use std::f64::consts::PI;

use choreo::integrate::*;
use choreo::model::*;
use choreo::vertical::VerticalProblem;
use proptest::prelude::*;

fn harmonic_return_error(method: Method, dt: f64) -> f64 {
    let sys = Harmonic { dim: 1, omega: 1.0 };
    // Fixed steps: no near-wall refinement.
    let cfg = IntegratorConfig { dv_tol: f64::INFINITY, ..IntegratorConfig::new(method, dt) };
    let start = PhaseState::new(vec![1.0], vec![0.0]);
    let mut s = start.clone();
    let n = (2.0 * PI / dt).round() as usize;
    let h = 2.0 * PI / n as f64;
    for _ in 0..n {
        step_smooth(&sys, &mut s, &cfg, h, 0.5).unwrap();
    }
    ((s.q[0] - 1.0).powi(2) + s.p[0].powi(2)).sqrt()
}

#[test]
fn harmonic_period_return() {
    assert!(harmonic_return_error(Method::SplittingOrder2, 1e-3) < 1e-6);
    assert!(harmonic_return_error(Method::SplittingOrder4, 1e-2) < 1e-8);
}

#[test]
fn convergence_orders() {
    let r2 = harmonic_return_error(Method::SplittingOrder2, 2e-2) / harmonic_return_error(Method::SplittingOrder2, 1e-2);
    assert!((r2 - 4.0).abs() < 0.4, "order-2 ratio {r2}");
    let r4 = harmonic_return_error(Method::SplittingOrder4, 0.1) / harmonic_return_error(Method::SplittingOrder4, 0.05);
    assert!((r4 - 16.0).abs() < 1.6, "order-4 ratio {r4}");
}

#[test]
fn free_particle_is_exact() {
    let spec = SystemSpec::new(
        1,
        2,
        0.0,
        InteractionPotential::cosine(1.0),
        ConfinementPotential { alpha: 2.0, axes: vec![Axis::free(); 2] },
    )
    .unwrap();
    let s0 = PhaseState::new(vec![0.5, -1.0], vec![0.3, 0.7]);
    let cfg = IntegratorConfig::new(Method::SplittingOrder4, 0.25);
    let mut s = s0.clone();
    for _ in 0..40 {
        s = step(&spec, &s, &cfg).unwrap();
    }
    assert!((s.q[0] - (0.5 + 0.3 * 10.0)).abs() < 1e-12);
    assert!((s.q[1] - (-1.0 + 0.7 * 10.0)).abs() < 1e-12);
    assert_eq!(s.p, s0.p);
}

fn sawtooth_spec() -> SystemSpec {
    SystemSpec::new(1, 1, 0.0, InteractionPotential::cosine(1.0), ConfinementPotential::sine_box(2.0, &[PI])).unwrap()
}

#[test]
fn event_driven_follows_sawtooth() {
    let spec = sawtooth_spec();
    let s0 = PhaseState::new(vec![0.5], vec![1.0]);
    let cfg = IntegratorConfig::new(Method::EventDriven, 0.1);
    let mut s = s0.clone();
    for k in 1..=100 {
        s = step(&spec, &s, &cfg).unwrap();
        let t = 0.1 * k as f64;
        let (want, flips) = fold_into_box(0.5 + t, PI);
        assert!((s.q[0] - want).abs() < 1e-12, "t={t}");
        assert_eq!(s.p[0], if flips % 2 == 0 { 1.0 } else { -1.0 });
    }
}

#[test]
fn observers_run_once_per_stride() {
    let sys = Harmonic { dim: 2, omega: 1.3 };
    let cfg = IntegratorConfig::new(Method::SplittingOrder2, 0.01);
    for (horizon, stride) in [(10.0, 0.5), (10.0, 0.3), (3.0, 0.07)] {
        let mut count = 0usize;
        let mut counter = |_: &PhaseState, _: f64| count += 1;
        let mut mon = EnergyMonitor::default();
        let s = PhaseState::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        integrate_system(&sys, &s, &cfg, horizon, HorizonOpts { stride, store: false }, &mut [&mut counter, &mut mon])
            .unwrap();
        let want = (horizon / stride as f64).ceil() as usize;
        assert_eq!(count, want);
        assert_eq!(mon.count, want);
    }
}

#[test]
fn vertical_energy_drift_over_long_run() {
    let prob = VerticalProblem::standard(1e-3, 4.0).unwrap();
    let orbit = prob.solve_vertical_orbit().unwrap();
    let spec = SystemSpec::new(1, 1, 1e-3, InteractionPotential::cosine(0.0), ConfinementPotential::sine_box(4.0, &[PI]))
        .unwrap();
    let (q, p) = orbit.state(0.7);
    let s0 = PhaseState::new(vec![q], vec![p]);
    let dt = orbit.period / 2000.0;
    let cfg = IntegratorConfig::new(Method::SplittingOrder4, dt);
    let mut mon = EnergyMonitor::default();
    integrate_horizon(&spec, &s0, &cfg, 1e5 * dt, HorizonOpts { stride: 10.0 * dt, store: false }, &mut [&mut mon])
        .unwrap();
    assert!(mon.max_rel_drift < 1e-6, "drift {}", mon.max_rel_drift);
}

#[test]
fn circle_crossings_of_a_harmonic_orbit() {
    // q = cos t, p = -sin t crosses q = 0 at t = pi/2 (downward) and 3 pi/2 (upward).
    let sys = Harmonic { dim: 1, omega: 1.0 };
    let cfg = IntegratorConfig::new(Method::SplittingOrder4, 1e-2);
    let s = PhaseState::new(vec![1.0], vec![0.0]);
    let traj = integrate_system(&sys, &s, &cfg, 2.0 * PI - 0.1, HorizonOpts { stride: 0.25, store: true }, &mut [])
        .unwrap();
    let sec = LinearSection { cq: vec![1.0], cp: vec![0.0], offset: 0.0 };
    let hits = poincare_crossings(&sys, &cfg, &traj, &sec).unwrap();
    assert_eq!(hits.len(), 2);
    assert!((hits[0].t - PI / 2.0).abs() < 1e-8);
    assert_eq!(hits[0].direction, -1);
    assert!((hits[1].t - 3.0 * PI / 2.0).abs() < 1e-8);
    assert_eq!(hits[1].direction, 1);
    for h in &hits {
        assert!(h.state.q[0].abs() < 1e-12);
    }
}

#[test]
fn nonpositive_step_is_rejected() {
    let spec = sawtooth_spec();
    let s = PhaseState::new(vec![1.0], vec![1.0]);
    assert!(step(&spec, &s, &IntegratorConfig::new(Method::SplittingOrder2, 0.0)).is_err());
    assert!(step(&spec, &s, &IntegratorConfig::new(Method::SplittingOrder2, -1.0)).is_err());
}

proptest! {
    #[test]
    fn splitting_is_reversible(q in -2.0f64..2.0, p in -2.0f64..2.0, steps in 1usize..200) {
        let sys = Harmonic { dim: 1, omega: 1.7 };
        let cfg = IntegratorConfig::new(Method::SplittingOrder4, 0.05);
        let mut s = PhaseState::new(vec![q], vec![p]);
        for _ in 0..steps {
            step_smooth(&sys, &mut s, &cfg, 0.05, 1.0).unwrap();
        }
        s.p[0] = -s.p[0];
        for _ in 0..steps {
            step_smooth(&sys, &mut s, &cfg, 0.05, 1.0).unwrap();
        }
        prop_assert!((s.q[0] - q).abs() < 1e-11);
        prop_assert!((s.p[0] + p).abs() < 1e-11);
    }

    #[test]
    fn event_driven_keeps_speed_and_box(q in 0.01f64..3.1, p in -5.0f64..5.0, t in 0.0f64..50.0) {
        let spec = sawtooth_spec();
        let s = step(&spec, &PhaseState::new(vec![q], vec![p]), &IntegratorConfig::new(Method::EventDriven, t.max(1e-9))).unwrap();
        prop_assert_eq!(s.p[0].abs(), p.abs());
        prop_assert!(s.q[0] >= 0.0 && s.q[0] <= PI);
    }
}
