use std::f64::consts::PI;

use choreo::nondeg::*;
use choreo::reduce::ReductionFrame;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn simple(w1: f64) -> TwistData {
    TwistData::new(1.0, vec![0.0], DMatrix::from_element(1, 1, 1.0), vec![1.0, w1]).unwrap()
}

#[test]
fn two_dimensional_determinants() {
    let w1 = 2f64.sqrt();
    let r = twist_check(&simple(w1));
    assert!((r.det_a - 1.0).abs() < 1e-15);
    let cof = det3([[0.0, 1.0, w1], [1.0, 1.0, 0.0], [w1, 0.0, 1.0]]);
    assert!((r.det_a_omega - cof).abs() < 1e-14);
    assert!((cof + 1.0 + w1 * w1).abs() < 1e-14);
    assert!(r.twist && r.isoenergetic);
}

#[test]
fn simple_identity_example() {
    let c = det_m_identity_check(&simple(2f64.sqrt()), &ReductionFrame::new(2).unwrap()).unwrap();
    assert!((c.det_m - c.rhs).abs() < 1e-12 * c.rhs.abs().max(1.0));
}

#[test]
fn identity_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.random_range(2..=5);
        let d = rng.random_range(2..=4);
        let td = TwistData::random(d, &mut rng);
        let c = det_m_identity_check(&td, &ReductionFrame::new(n).unwrap()).unwrap();
        assert!(!c.skipped);
        assert!(c.residual < 1e-10, "N={n} d={d}: {}", c.residual);
    }
}

#[test]
fn billiard_relation_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let d = rng.random_range(2..=4);
        let td = TwistData::random(d, &mut rng);
        assert!(billiard_relation_residual(&td) < 1e-12);
    }
}

#[test]
fn singular_twist_is_flagged() {
    let td = TwistData::new(1.0, vec![2.0], DMatrix::from_element(1, 1, 4.0), vec![1.0, 0.5]).unwrap();
    let r = twist_check(&td);
    assert!(r.det_a.abs() < 1e-14);
    assert!(!r.twist);
    let c = det_m_identity_check(&td, &ReductionFrame::new(3).unwrap()).unwrap();
    assert!(c.det_m.abs() < 1e-12 && c.rhs.abs() < 1e-12);
}

#[test]
fn s_matrix_spot_value() {
    let td = TwistData::new(1.0, vec![3.0], DMatrix::from_element(1, 1, 1.0), vec![1.0, 2.0]).unwrap();
    assert!((td.s_matrix(2)[(0, 0)] - 4.0).abs() < 1e-15);
}

#[test]
fn single_particle_keeps_only_the_transverse_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let td = TwistData::random(3, &mut rng);
    let frame = ReductionFrame::new(1).unwrap();
    let m = build_m(&td, &frame).unwrap();
    assert_eq!(m.m.shape(), (2, 2));
    assert!((&m.m - (&td.a_hat - td.s_matrix(1))).amax() < 1e-15);
    assert!(det_m_identity_check(&td, &frame).unwrap().skipped);
}

#[test]
fn malformed_data_is_rejected() {
    assert!(TwistData::new(1.0, vec![0.0, 1.0], DMatrix::identity(1, 1), vec![1.0, 1.0]).is_err());
    assert!(TwistData::new(1.0, vec![0.0], DMatrix::identity(1, 1), vec![0.0, 1.0]).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    assert!(TwistData::new(1.0, vec![0.0, 0.0], asym, vec![1.0, 1.0, 1.0]).is_err());
}

#[test]
fn timeone_action_hessian_is_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, d) in [(2, 2), (3, 3), (4, 2)] {
        let td = TwistData::random(d, &mut rng);
        let frame = ReductionFrame::new(n).unwrap();
        let nu = nu_vector(&td, 1e-4).unwrap();
        let h = assemble_timeone(&td, &frame, nu, 0.7, |psi: &[f64]| psi.iter().map(|x| x.cos()).sum()).unwrap();
        let j = vec![0.1; n - 1];
        let i_hat = vec![0.2; n * (d - 1)];
        let psi = vec![0.3; n - 1];
        let fd = h.action_hessian_fd(&j, &psi, &i_hat, 1e-3);
        let m = build_m(&td, &frame).unwrap().m;
        assert!((&fd - &m).amax() < 1e-8 * m.amax().max(1.0), "N={n} d={d}");
    }
}

#[test]
fn timeone_without_offsets_is_the_averaged_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let td = TwistData::random(3, &mut rng);
    let frame = ReductionFrame::new(3).unwrap();
    let pot = |psi: &[f64]| psi[0].sin() + 0.5 * psi[1].cos();
    let h = assemble_timeone(&td, &frame, vec![0.0; 2], 0.0, pot).unwrap();
    let j = [0.4, -0.9];
    let psi = [1.1, 0.2];
    let want = td.a / 6.0 * (0.16 + 0.81) + pot(&psi);
    assert!((h.eval(&j, &psi, &[0.0; 6]) - want).abs() < 1e-14);
}

proptest! {
    #[test]
    fn identity_survives_rescaling(seed in 0u64..500, c in 0.1f64..10.0, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let td = TwistData::random(3, &mut rng);
        let scaled = TwistData::new(
            c * td.a,
            td.b.iter().map(|x| c * x).collect(),
            &td.a_hat * c,
            td.omega.iter().map(|x| c * x).collect(),
        ).unwrap();
        let frame = ReductionFrame::new(n).unwrap();
        prop_assert!(det_m_identity_check(&scaled, &frame).unwrap().residual < 1e-10);
    }

    #[test]
    fn m_is_symmetric_with_expected_size(seed in 0u64..500, n in 2usize..6, d in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let td = TwistData::random(d, &mut rng);
        let s = td.s_matrix(n);
        prop_assert_eq!(&s, &s.transpose());
        let m = build_m(&td, &ReductionFrame::new(n).unwrap()).unwrap().m;
        let size = n - 1 + n * (d - 1);
        prop_assert_eq!(m.shape(), (size, size));
        prop_assert_eq!(&m, &m.transpose());
    }

    #[test]
    fn nu_in_range(seed in 0u64..500, logd in -10.0f64..-1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let td = TwistData::random(4, &mut rng);
        for v in nu_vector(&td, 10f64.powf(logd)).unwrap() {
            prop_assert!((0.0..2.0 * PI).contains(&v));
        }
    }
}
