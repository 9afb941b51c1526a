use std::f64::consts::PI;

use choreo::billiard::*;
use proptest::prelude::*;

fn curved(k_layer: f64) -> LayerConfig {
    LayerConfig {
        alpha: 2.0,
        p0: vec![0.6, -0.8],
        wall: WallModel::Curved { curvature: 1.0 },
        delta: 1e-16,
        k_layer,
        dt: 1e-3,
        max_time: 1e4,
    }
}

#[test]
fn circle_square_orbit_closes() {
    let c = BilliardDomain::circle(1.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (mut x, mut v) = (vec![1.0, 0.0], vec![-s, s]);
    for _ in 0..4 {
        let b = billiard_map(&c, &x, &v).unwrap();
        // Every chord of the square subtends the same angle with the normal.
        let n = [-b.point[0], -b.point[1]];
        let cos_in = -(v[0] * n[0] + v[1] * n[1]);
        assert!((cos_in - s).abs() < 1e-12);
        x = b.point;
        v = b.velocity;
    }
    assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
}

#[test]
fn box_vertical_ray() {
    let b = BilliardDomain::Box { lengths: vec![PI, PI] };
    let up = billiard_map(&b, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
    assert_eq!(up.point, vec![1.0, PI]);
    assert_eq!(up.velocity, vec![0.0, -1.0]);
    let down = billiard_map(&b, &up.point, &up.velocity).unwrap();
    assert_eq!(down.point, vec![1.0, 0.0]);
}

#[test]
fn ellipse_diameters() {
    let e = BilliardDomain::ellipse(2.0, 1.0);
    let minor = find_periodic(&e, 2, &[PI / 2.0 + 0.1, 3.0 * PI / 2.0 - 0.05]).unwrap();
    assert_eq!(minor.classification, OrbitClass::Elliptic);
    assert!((minor.length - 4.0).abs() < 1e-10);
    assert!(minor.trace.abs() < 2.0);
    let major = find_periodic(&e, 2, &[0.1, PI + 0.05]).unwrap();
    assert_eq!(major.classification, OrbitClass::Hyperbolic);
    assert!((major.length - 8.0).abs() < 1e-10);
    for o in [&minor, &major] {
        assert!(o.reflection_residual < 1e-10);
        assert!((o.multiplier_product() - 1.0).abs() < 1e-8);
        assert!(o.min_impact_angle_deg > 5.0);
    }
}

#[test]
fn circle_diameter_is_parabolic() {
    let o = find_periodic(&BilliardDomain::circle(1.0), 2, &[0.1, PI + 0.05]).unwrap();
    assert_eq!(o.classification, OrbitClass::Parabolic);
    assert!(o.degenerate);
    assert!((o.trace.abs() - 2.0).abs() < 1e-6);
    assert!((o.length - 4.0).abs() < 1e-10);
}

#[test]
fn superellipse_orbit_obeys_reflection() {
    let d = BilliardDomain::Superellipse { semi: vec![2.0, 1.0], exponent: 4.0 };
    let o = find_periodic(&d, 2, &[PI / 2.0 + 0.05, 3.0 * PI / 2.0]).unwrap();
    assert!(o.reflection_residual < 1e-10);
    assert!((o.multiplier_product() - 1.0).abs() < 1e-8);
}

#[test]
fn bad_inputs_are_rejected() {
    let e = BilliardDomain::ellipse(2.0, 1.0);
    assert!(find_periodic(&e, 1, &[0.0]).is_err());
    assert!(BilliardDomain::ellipse(-1.0, 1.0).validate().is_err());
    // Outward direction at the boundary.
    assert!(billiard_map(&e, &[2.0, 0.0], &[1.0, 0.0]).is_err());
}

#[test]
fn flat_wall_layer() {
    let cfg = LayerConfig {
        alpha: 2.0,
        p0: vec![0.3, -0.9],
        wall: WallModel::Flat,
        delta: 1e-8,
        k_layer: 8.0,
        dt: 1e-3,
        max_time: 1e4,
    };
    let r = boundary_layer_run(&cfg).unwrap();
    assert!((r.exit_momentum[0] - 0.3).abs() < 1e-12);
    assert!((r.exit_momentum[1] + r.entry_momentum[1]).abs() < 1e-10);
    assert!(r.max_rel_energy_error < 1e-10);
}

#[test]
fn flat_wall_turning_point() {
    let cfg = LayerConfig {
        alpha: 2.0,
        p0: vec![0.0, -1.0],
        wall: WallModel::Flat,
        delta: 1e-8,
        k_layer: 8.0,
        dt: 1e-3,
        max_time: 1e4,
    };
    let r = boundary_layer_run(&cfg).unwrap();
    assert!((r.turning_qbar - 2f64.sqrt()).abs() < 1e-8, "{}", r.turning_qbar);
}

#[test]
fn curved_wall_deviation_shrinks_with_depth() {
    let depths = [2.0, 4.0, 8.0, 16.0];
    let (slope, devs) = layer_depth_slope(&curved(2.0), &depths).unwrap();
    assert!(devs.windows(2).all(|w| w[1] < w[0]));
    assert!((slope + 2.0).abs() < 0.5, "slope {slope}");
}

#[test]
fn layer_rejects_outgoing_momentum() {
    let mut cfg = curved(4.0);
    cfg.p0 = vec![0.6, 0.8];
    assert!(boundary_layer_run(&cfg).is_err());
}

proptest! {
    #[test]
    fn reflection_preserves_speed(tau in 0.0f64..(2.0 * PI), ang in 0.2f64..(PI - 0.2)) {
        let e = BilliardDomain::ellipse(2.0, 1.0);
        let (x, _) = e.boundary_point(tau).unwrap();
        let n = e.normal(&x);
        // Rotate the inward normal by an angle inside (-pi/2, pi/2).
        let a = ang - PI / 2.0;
        let inward = [-n[0], -n[1]];
        let v = [inward[0] * a.cos() - inward[1] * a.sin(), inward[0] * a.sin() + inward[1] * a.cos()];
        let b = billiard_map(&e, &x, &v).unwrap();
        let s0 = v[0].hypot(v[1]);
        let s1 = b.velocity[0].hypot(b.velocity[1]);
        prop_assert!((s1 - s0).abs() < 1e-14);
        prop_assert!(e.q(&b.point).abs() < 1e-12);
    }
}
