use std::f64::consts::PI;
use std::sync::Arc;

use choreo::average::*;
use choreo::model::*;
use choreo::vertical::VerticalProblem;
use proptest::prelude::*;

fn cos_avg() -> AveragedPotential {
    AveragedPotential::sawtooth(PI, InteractionPotential::cosine(1.0))
}

fn closed_form(v: f64) -> f64 {
    ((PI - v) * v.cos() + v.sin()) / PI
}

#[test]
fn sawtooth_cosine_closed_form() {
    let avg = cos_avg();
    assert!((avg.value(PI / 2.0, &[]).unwrap() - 1.0 / PI).abs() < 1e-14);
    assert!((avg.value(0.0, &[]).unwrap() - 1.0).abs() < 1e-14);
    assert!(avg.value(PI, &[]).unwrap().abs() < 1e-14);
    for k in 0..=200 {
        let v = PI * k as f64 / 200.0;
        assert!((avg.value(v, &[]).unwrap() - closed_form(v)).abs() < 1e-12);
    }
}

#[test]
fn generic_quadrature_matches_closed_form() {
    let gen = AveragedPotential::along(Arc::new(SawTooth { length: PI }), InteractionPotential::cosine(1.0));
    for k in 1..50 {
        let v = 0.06 * k as f64;
        assert!((gen.value(v, &[]).unwrap() - closed_form(v)).abs() < 1e-11, "v={v}");
    }
}

#[test]
fn first_and_second_derivatives() {
    let avg = cos_avg();
    for k in 0..=100 {
        let v = PI * k as f64 / 100.0;
        let d1 = avg.deriv(v, &[], 1, Side::Right).unwrap();
        assert!((d1 + (PI - v) * v.sin() / PI).abs() < 1e-12);
    }
    assert!(avg.deriv(0.0, &[], 1, Side::Auto).unwrap().abs() < 1e-14);
    assert!(avg.deriv(PI, &[], 1, Side::Auto).unwrap().abs() < 1e-14);
    assert!((avg.deriv(0.0, &[], 2, Side::Auto).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn c2_but_not_c3_at_matching_phases() {
    let avg = cos_avg();
    for v in [0.0, PI] {
        for k in [1, 2] {
            let l = avg.deriv(v, &[], k, Side::Left).unwrap();
            let r = avg.deriv(v, &[], k, Side::Right).unwrap();
            assert!((l - r).abs() < 1e-8, "order {k} at {v}");
        }
    }
    let r3 = avg.deriv(0.0, &[], 3, Side::Right).unwrap();
    let l3 = avg.deriv(0.0, &[], 3, Side::Left).unwrap();
    assert!((r3 - 2.0 / PI).abs() < 1e-10, "{r3}");
    assert!(((r3 - l3).abs() - 4.0 / PI).abs() < 1e-10);
    assert!(avg.deriv(0.0, &[], 3, Side::Auto).is_err());
}

#[test]
fn pair_sum_examples() {
    let sys = AveragedSystem::new(2, cos_avg(), None);
    let u = sys.value(&[0.3, 1.2], &[]).unwrap();
    assert!((u - 2.0 * closed_form(0.9)).abs() < 1e-13);
    assert!(sys.value(&[PI, 0.0], &[]).unwrap().abs() < 1e-13);
}

#[test]
fn collision_examples() {
    let saw = SawTooth { length: PI };
    let hit = collision_test(&[0.4, 0.4], &[1.0, 1.0], &saw, 0.0);
    assert!(hit.collides);
    assert!(hit.time.abs() < 1e-12 && hit.min_distance == 0.0);
    let cross = collision_test(&[0.0, 1.3, 2.9], &[0.5, 0.5, 0.5], &saw, 1e-9);
    assert!(cross.collides);
    let apart = collision_test(&[0.0, 1.3], &[0.0, 1.0], &saw, 0.0);
    assert!(!apart.collides);
    assert!((apart.min_distance - 1.0).abs() < 1e-12);
}

#[test]
fn gamma_beta_examples() {
    let sq = InteractionPotential::new(InteractionKind::QuarticTest { c2: 1.0, c4: 0.0 }, 0.0);
    let (g0, b0) = gamma_beta_pair(&sq, &[0.0], false, 1.0).unwrap();
    assert!((g0 - 2.0).abs() < 1e-14 && (b0 + 2.0).abs() < 1e-14);
    let (gp, bp) = gamma_beta_pair(&sq, &[0.0], true, 1.0).unwrap();
    assert!((gp + 2.0).abs() < 1e-13 && (bp - 2.0).abs() < 1e-13);

    let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
    let (g, _) = gamma_beta_pair(&w, &[0.0], true, 1.0).unwrap();
    let want = 2.0 / (0.1 + PI * PI).powi(2);
    assert!((g - want).abs() < 1e-15);
    assert!((g - 0.020122).abs() < 5e-7);

    let table = gamma_beta(&w, &[0.0, 0.7, 1.5], &[0.0, PI, 0.0], 1, 1.0).unwrap();
    assert!((&table.gamma - table.gamma.transpose()).norm() < 1e-15);
    assert!((&table.beta - table.beta.transpose()).norm() < 1e-15);
    assert!(gamma_beta(&w, &[0.0, 1.0], &[0.0, 1.0], 1, 1.0).is_err());
}

#[test]
fn gamma_at_zero_is_second_derivative_of_average() {
    let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
    let z = [0.8];
    let (g, _) = gamma_beta_pair(&w, &z, false, 1.0).unwrap();
    let avg = AveragedPotential::sawtooth(PI, w);
    let d2 = avg.deriv(0.0, &z, 2, Side::Auto).unwrap();
    assert!((g - d2).abs() < 1e-8);
}

#[test]
fn k_alpha_values() {
    let k2 = k_alpha(2.0).unwrap();
    assert!((k2 - 3.0 * 2f64.sqrt() * PI / 8.0).abs() < 1e-8);
    for a in [1.0, 2.0, 4.0, 8.0] {
        assert!(k_alpha(a).unwrap() > 0.0);
    }
    let q0 = 2f64.powf(0.25);
    let a = k_alpha_split(4.0, 8.0 * q0).unwrap();
    let b = k_alpha_split(4.0, 4.0 * q0).unwrap();
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn fourth_derivative_signs_flip_between_phases() {
    let w = InteractionPotential::new(InteractionKind::QuarticTest { c2: 1.0, c4: 0.0 }, 0.0);
    let deltas = [1e-6, 1e-5];
    let at_pi = scaling_probe(4.0, &deltas, true, &w, &[1.0]).unwrap();
    let at_zero = scaling_probe(4.0, &deltas, false, &w, &[1.0]).unwrap();
    assert!(at_pi.fourth[0] > 0.0 && at_zero.fourth[0] < 0.0);
}

#[test]
fn small_coupling_is_c2_close_to_sawtooth() {
    let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
    let z = [0.5];
    let saw = AveragedPotential::sawtooth(PI, w.clone());
    let mut prev = f64::INFINITY;
    for d in [1e-4, 1e-6, 1e-8] {
        let avg = AveragedPotential::box_vertical(&VerticalProblem::standard(d, 4.0).unwrap(), w.clone()).unwrap();
        let mut gap: f64 = 0.0;
        for v in [0.4, 1.3, 2.5, PI] {
            for k in 0..=2 {
                let a = avg.deriv(v, &z, k, Side::Right).unwrap();
                let b = saw.deriv(v, &z, k, Side::Right).unwrap();
                gap = gap.max((a - b).abs());
            }
        }
        // Two decades of delta should shrink the gap at least like delta^{1/5}.
        assert!(gap < prev * 100f64.powf(-0.2), "delta {d}: {gap}");
        prev = gap;
    }
}

proptest! {
    #[test]
    fn even_and_periodic(v in -7.0f64..7.0, z in -1.0f64..1.0) {
        let avg = AveragedPotential::sawtooth(PI, InteractionPotential::shifted_inverse_square(1.0, 0.1));
        let a = avg.value(v, &[z]).unwrap();
        prop_assert!((a - avg.value(-v, &[z]).unwrap()).abs() < 1e-12);
        prop_assert!((a - avg.value(2.0 * PI - v, &[z]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn derivative_identity(v in 0.0f64..PI) {
        let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
        let d = w.vertical_derivs(v, &[0.0]).unwrap();
        let avg = AveragedPotential::sawtooth(PI, w);
        let d1 = avg.deriv(v, &[0.0], 1, Side::Right).unwrap();
        prop_assert!((d1 - (1.0 - v / PI) * d[1]).abs() < 1e-10);
    }

    #[test]
    fn translation_and_permutation(c in -5.0f64..5.0, t in prop::array::uniform3(0.0f64..6.0)) {
        let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
        let conf = ConfinementPotential::sine_box(8.0, &[PI, PI]);
        let sys = AveragedSystem::new(3, AveragedPotential::sawtooth(PI, w), Some(&conf));
        let xi = [0.8, 1.5, 2.2];
        let u = sys.value(&t, &xi).unwrap();
        let shifted: Vec<f64> = t.iter().map(|x| x + c).collect();
        prop_assert!((u - sys.value(&shifted, &xi).unwrap()).abs() < 1e-12 * u.abs().max(1.0));
        let perm_t = [t[2], t[0], t[1]];
        let perm_x = [xi[2], xi[0], xi[1]];
        prop_assert!((u - sys.value(&perm_t, &perm_x).unwrap()).abs() < 1e-14 * u.abs().max(1.0));
    }
}
