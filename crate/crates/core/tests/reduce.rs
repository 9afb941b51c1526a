use std::f64::consts::PI;

use choreo::average::{AveragedPotential, AveragedSystem, Side};
use choreo::model::*;
use choreo::reduce::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn dense_eigs(m: DMatrix<f64>) -> Vec<f64> {
    sorted(SymmetricEigen::new(m).eigenvalues.iter().cloned().collect())
}

fn inv_sq_system(n: usize) -> AveragedSystem {
    AveragedSystem::new(n, AveragedPotential::sawtooth(PI, InteractionPotential::shifted_inverse_square(1.0, 0.1)), None)
}

#[test]
fn frame_rows() {
    let f = ReductionFrame::new(2).unwrap();
    let s = 1.0 / 2f64.sqrt();
    let want = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
    assert!((&f.r - want).norm() < 1e-15);
    for n in 2..=8 {
        let f = ReductionFrame::new(n).unwrap();
        assert!((&f.r * f.r.transpose() - DMatrix::identity(n, n)).norm() < 1e-14);
        for k in 1..n {
            assert!(f.r.row(k).sum().abs() < 1e-14);
        }
    }
}

#[test]
fn total_action_is_first_reduced_momentum() {
    let f = ReductionFrame::new(5).unwrap();
    let actions = [0.3, 1.1, -0.4, 2.0, 0.7];
    let (_, _, p, _) = f.to_reduced(&[0.0; 5], &actions);
    assert!((p - actions.iter().sum::<f64>()).abs() < 1e-14);
}

#[test]
fn two_cosine_particles_sit_in_antiphase() {
    let sys = AveragedSystem::new(2, AveragedPotential::sawtooth(PI, InteractionPotential::cosine(1.0)), None);
    let m = minimize_averaged(&sys, &MinimizeOptions::default()).unwrap();
    let gap = (m.theta[0] - m.theta[1]).rem_euclid(2.0 * PI);
    assert!((gap - PI).abs() < 1e-9, "gap {gap}");
    assert!(m.simultaneous_impacts);
    assert!(m.grad_norm < 1e-9);
    assert!(m.theta.iter().sum::<f64>().abs() < 1e-9);
    assert!(m.eigenvalues.iter().all(|l| *l >= -1e-12));
}

#[test]
fn equidistant_phases_are_stationary() {
    for n in 2..=6 {
        let sys = inv_sq_system(n);
        let theta: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let (_, g, _) = sys.full(&theta, &[]).unwrap();
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-10, "n={n}");
    }
}

#[test]
fn two_particle_spectrum() {
    let e = hessian_spectrum(&inv_sq_system(2), &[0.0, PI], &[], SpectrumMode::Dense).unwrap();
    assert!(e[0].abs() < 1e-13);
    assert!((e[1] - 4.0 / (0.1 + PI * PI).powi(2)).abs() < 1e-12);
    assert!((e[1] - 0.040244).abs() < 1e-6);
}

#[test]
fn three_particle_pairing() {
    let sys = inv_sq_system(3);
    let theta = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
    let w2 = sys.avg.deriv(2.0 * PI / 3.0, &[], 2, Side::Right).unwrap();
    let e = sorted(hessian_spectrum(&sys, &theta, &[], SpectrumMode::Circulant).unwrap());
    assert!(e[0].abs() < 1e-14);
    assert!((e[1] - 3.0 * w2).abs() < 1e-12 && (e[2] - 3.0 * w2).abs() < 1e-12);
}

#[test]
fn circulant_formula_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=8 {
        for _ in 0..20 {
            let u = random_circulant_data(n, &mut rng);
            let formula = circulant_eigenvalues(&u);
            for j in 1..n {
                assert_eq!(formula[j], formula[n - j]);
            }
            let a = sorted(formula);
            let b = dense_eigs(circulant_matrix(&u));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn circulant_and_dense_hessians_agree_on_the_system() {
    for n in 2..=8 {
        let sys = inv_sq_system(n);
        let theta: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let a = sorted(hessian_spectrum(&sys, &theta, &[], SpectrumMode::Circulant).unwrap());
        let b = sorted(hessian_spectrum(&sys, &theta, &[], SpectrumMode::Dense).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "n={n}: {x} vs {y}");
        }
    }
    assert!(hessian_spectrum(&inv_sq_system(3), &[0.0, 1.0, 2.0], &[], SpectrumMode::Circulant).is_err());
}

#[test]
fn resonance_scan_examples() {
    assert!(resonance_scan(&[1.0, 2f64.sqrt()], 4, 1e-9).relations.is_empty());
    let r = resonance_scan(&[1.0, 1.0], 4, 1e-9);
    assert!(r.relations.iter().any(|(m, _)| m == &vec![1, -1]));
    for (m, res) in &r.relations {
        assert!(*res < 1e-9);
        assert!(m.iter().skip(1).map(|x| x.abs()).sum::<i64>() <= 4);
    }
}

#[test]
fn equidistant_frequencies_show_forced_pairing() {
    for n in 3..=6 {
        let sys = inv_sq_system(n);
        let theta: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let l = hessian_spectrum(&sys, &theta, &[], SpectrumMode::Circulant).unwrap();
        let omega: Vec<f64> = l[1..].iter().map(|x| x.abs().sqrt()).collect();
        let r = resonance_scan(&omega, 4, 1e-12);
        let mut want = vec![0i64; n - 1];
        want[0] = 1;
        want[n - 2] = -1;
        assert!(r.relations.iter().any(|(m, _)| *m == want), "n={n}");
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let conf = ConfinementPotential::sine_box(8.0, &[PI, PI]);
    let sys = AveragedSystem::new(
        3,
        AveragedPotential::sawtooth(PI, InteractionPotential::shifted_inverse_square(1.0, 0.1)),
        Some(&conf),
    );
    let theta = [0.3, 2.2, 4.0];
    let xi = [0.9, 1.6, 2.3];
    let (_, g, h) = sys.full(&theta, &xi).unwrap();
    let k = 1e-4;
    let grad_at = |i: usize, s: f64| {
        let mut t = theta.to_vec();
        let mut x = xi.to_vec();
        if i < 3 {
            t[i] += s;
        } else {
            x[i - 3] += s;
        }
        sys.full(&t, &x).unwrap().1
    };
    for i in 0..6 {
        let (gp, gm) = (grad_at(i, k), grad_at(i, -k));
        for j in 0..6 {
            let fd = (gp[j] - gm[j]) / (2.0 * k);
            assert!((fd - h[(j, i)]).abs() < 1e-6 * h[(j, i)].abs().max(1.0), "({j},{i}): {fd} vs {}", h[(j, i)]);
        }
        let v = |s: f64| {
            let mut t = theta.to_vec();
            let mut x = xi.to_vec();
            if i < 3 {
                t[i] += s;
            } else {
                x[i - 3] += s;
            }
            sys.value(&t, &x).unwrap()
        };
        let fd = (v(k) - v(-k)) / (2.0 * k);
        assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn frame_round_trip(theta in prop::collection::vec(-5.0f64..5.0, 2..8), seed in 0u64..100) {
        let n = theta.len();
        let f = ReductionFrame::new(n).unwrap();
        let action: Vec<f64> = (0..n).map(|k| (seed as f64 + k as f64).sin()).collect();
        let (phi, psi, p, j) = f.to_reduced(&theta, &action);
        let (t2, a2) = f.from_reduced(phi, &psi, p, &j);
        for k in 0..n {
            prop_assert!((t2[k] - theta[k]).abs() < 1e-13);
            prop_assert!((a2[k] - action[k]).abs() < 1e-13);
        }
        // The pairing sum theta . I is preserved.
        let lhs: f64 = theta.iter().zip(&action).map(|(a, b)| a * b).sum();
        let rhs = phi * p + psi.iter().zip(&j).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn reduced_potential_ignores_global_phase(psi in prop::array::uniform2(-2.0f64..2.0), phi in -10.0f64..10.0) {
        let sys = inv_sq_system(3);
        let a = reduced_value(&sys, &psi, &[], 0.0).unwrap();
        let b = reduced_value(&sys, &psi, &[], phi).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}
