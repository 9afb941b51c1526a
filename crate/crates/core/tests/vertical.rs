use std::f64::consts::PI;

use choreo::vertical::*;
use proptest::prelude::*;

#[test]
fn zero_coupling_periods() {
    let p = VerticalProblem::standard(0.0, 4.0).unwrap();
    assert!((p.period(0.5).unwrap() - 2.0 * PI).abs() < 1e-14);
    assert!((p.period(2.0).unwrap() - PI).abs() < 1e-14);
}

#[test]
fn period_decreases_with_energy() {
    for alpha in [2.0, 4.0, 8.0] {
        let p = VerticalProblem::standard(1e-3, alpha).unwrap();
        let energies: Vec<f64> = (1..20).map(|k| 0.1 * k as f64).collect();
        let periods: Vec<f64> = energies.iter().map(|e| p.period(*e).unwrap()).collect();
        assert!(periods.windows(2).all(|w| w[1] < w[0]), "alpha {alpha}");
        assert!(p.anharmonicity(0.5).unwrap() > 0.0);
    }
}

#[test]
fn turning_point_scaling() {
    // Near the wall delta q^{-2} = 1/2 gives q_min = sqrt(2 delta).
    let p = VerticalProblem::standard(1e-8, 2.0).unwrap();
    let (lo, hi) = p.turning_points(0.5).unwrap();
    let ratio = lo / 1e-8f64.sqrt();
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.02, "ratio {ratio}");
    assert!((lo + hi - PI).abs() < 1e-12);
}

#[test]
fn orbit_tends_to_sawtooth() {
    let o = VerticalProblem::standard(1e-6, 4.0).unwrap().solve_vertical_orbit().unwrap();
    assert!((o.q(PI / 2.0) - PI / 2.0).abs() < 1e-3);
    assert!((o.q(1.0) - 1.0).abs() < 1e-2);
}

#[test]
fn omega_converges_monotonically() {
    let deltas = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let t = omega0_convergence(&deltas, 4.0).unwrap();
    assert!(t.monotone);
    assert!(t.omegas.iter().all(|w| *w > 1.0));
    assert!((t.slope - 0.25).abs() < 0.1, "slope {}", t.slope);
}

#[test]
fn action_increases_with_energy() {
    let p = VerticalProblem::standard(1e-3, 4.0).unwrap();
    let a: Vec<f64> = [0.2, 0.5, 1.0, 2.0].iter().map(|e| p.action(*e).unwrap()).collect();
    assert!(a.windows(2).all(|w| w[1] > w[0]));
    // dI/dE = 1/omega.
    let h = 1e-4;
    let di = (p.action(0.5 + h).unwrap() - p.action(0.5 - h).unwrap()) / (2.0 * h);
    assert!((di - 1.0 / p.omega(0.5).unwrap()).abs() < 1e-6);
}

#[test]
fn invalid_problems_are_rejected() {
    assert!(VerticalProblem::standard(-1.0, 4.0).is_err());
    assert!(VerticalProblem::standard(1e-3, 0.0).is_err());
}

proptest! {
    #[test]
    fn orbit_energy_and_symmetries(theta in -10.0f64..10.0, logd in -6.0f64..-2.0) {
        let o = VerticalProblem::standard(10f64.powf(logd), 4.0).unwrap().solve_vertical_orbit().unwrap();
        prop_assert!((o.energy_at(theta) - 0.5).abs() < 1e-10);
        prop_assert!((o.q(theta) - o.q(-theta)).abs() < 1e-12);
        prop_assert!((o.q(PI - theta) - (PI - o.q(theta))).abs() < 1e-12);
        prop_assert!((o.q(theta + 2.0 * PI) - o.q(theta)).abs() < 1e-12);
        prop_assert!(o.q(theta) >= o.q_min - 1e-14 && o.q(theta) <= o.q_max + 1e-14);
    }

    #[test]
    fn phase_of_inverts_state(theta in 0.0f64..(2.0 * PI)) {
        let o = VerticalProblem::standard(1e-3, 4.0).unwrap().solve_vertical_orbit().unwrap();
        let (q, p) = o.state(theta);
        let back = o.phase_of(q, p);
        let diff = (back - theta).abs();
        prop_assert!(diff < 1e-9 || (diff - 2.0 * PI).abs() < 1e-9);
    }
}
