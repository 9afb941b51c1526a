use std::f64::consts::PI;
use std::path::Path;

use choreo::cli::scenario::{circulant, simulate};
use choreo::cli::*;
use choreo::ChoreoError;

fn config(name: &str) -> Config {
    Config::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn single_tone_peak() {
    let x: Vec<f64> = (0..1 << 14).map(|i| (2.0 * PI * 0.1 * i as f64).sin()).collect();
    let p = freq_extract(&x, 1.0, 3).unwrap();
    assert!((p[0].frequency - 0.1).abs() < 1e-4);
    assert!((p[0].amplitude - 1.0).abs() < 0.05);
}

#[test]
fn two_tones_ordered_by_amplitude() {
    let x: Vec<f64> = (0..1 << 14)
        .map(|i| {
            let t = i as f64 * 0.5;
            0.4 * (2.0 * PI * 0.05 * t).cos() + (2.0 * PI * 0.3 * t).sin()
        })
        .collect();
    let p = freq_extract(&x, 2.0, 2).unwrap();
    assert_eq!(p.len(), 2);
    assert!((p[0].frequency - 0.3).abs() < 1e-4);
    assert!((p[1].frequency - 0.05).abs() < 1e-4);
}

#[test]
fn constant_and_short_series() {
    assert!(freq_extract(&vec![3.0; 1 << 12], 1.0, 3).unwrap().is_empty());
    assert!(matches!(freq_extract(&[1.0; 100], 1.0, 3), Err(ChoreoError::InvalidInput(_))));
}

#[test]
fn sinusoid_fit_on_a_few_cycles() {
    let t: Vec<f64> = (0..3000).map(|i| i as f64 * 0.01).collect();
    let x: Vec<f64> = t.iter().map(|s| 0.2 + 1.5 * (2.0 * PI * 0.11 * s + 0.4).cos()).collect();
    let f = fit_sinusoid(&t, &x, 0.02, 1.0).unwrap();
    assert!((f.frequency - 0.11).abs() < 1e-9);
    assert!((f.amplitude - 1.5).abs() < 1e-8 && (f.offset - 0.2).abs() < 1e-8);
    assert!(f.rms < 1e-8);
}

#[test]
fn config_errors() {
    assert!(matches!(Config::from_toml("scenario = \"nope\""), Err(ChoreoError::Config(_))));
    assert!(matches!(Config::from_toml("scenario = \"fpu-circulant\"\nbogus = 1"), Err(ChoreoError::Config(_))));
    let weak = "scenario = \"box-simultaneous\"\n[system]\nalpha = 4.0";
    assert!(matches!(Config::from_toml(weak), Err(ChoreoError::Config(_))));
    let bad_dt = "scenario = \"smooth-choreo\"\n[run]\ndt = -1.0";
    assert!(matches!(Config::from_toml(bad_dt), Err(ChoreoError::Config(_))));
}

#[test]
fn shipped_configs_parse() {
    for f in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")).unwrap() {
        let p = f.unwrap().path();
        Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn grid_sweep_is_complete_and_deterministic() {
    let mut cfg = Config::new(ScenarioKind::FpuCirculant);
    cfg.system.n = 3;
    cfg.system.d = 1;
    cfg.system.interaction = choreo::model::InteractionPotential::shifted_inverse_square(1.0, 0.1);
    cfg.sweep.delta = vec![1e-3, 1e-4, 1e-5];
    cfg.sweep.alpha = vec![2.0, 4.0, 8.0];
    let a = sweep(&cfg);
    assert_eq!(a.len(), 9);
    assert!(a.iter().enumerate().all(|(i, r)| r.index == i && r.result.is_some()));
    assert_eq!(a[1].params["alpha"], 4.0);
    assert_eq!(a[3].params["delta"], 1e-4);
    let b = sweep(&cfg);
    let text = |v: &[SweepRecord]| v.iter().map(|r| serde_json::to_string(r).unwrap()).collect::<Vec<_>>();
    assert_eq!(text(&a), text(&b));
}

#[test]
fn failing_cell_does_not_stop_the_sweep() {
    let mut cfg = Config::new(ScenarioKind::FpuCirculant);
    cfg.system.n = 3;
    cfg.system.d = 1;
    cfg.system.interaction = choreo::model::InteractionPotential::shifted_inverse_square(1.0, 0.1);
    cfg.sweep.alpha = vec![-1.0, 4.0];
    let r = sweep(&cfg);
    assert_eq!(r.len(), 2);
    assert!(r[0].result.is_none() && r[0].error.is_some());
    assert!(r[1].result.is_some(), "{:?}", r[1].error);
}

#[test]
fn sweep_slope_matches_scaling_probe() {
    let cfg = config("scaling_sweep.toml");
    let (slope, _) = sweep_slope(&sweep(&cfg)).unwrap();
    let s = &cfg.scaling;
    let direct = choreo::average::scaling_probe(s.alpha, &cfg.sweep.delta, s.at_pi, &cfg.system.interaction, &s.zeta)
        .unwrap();
    assert!((slope - direct.slope).abs() < 1e-12);
}

#[test]
fn exact_sawtooth_run_has_no_deviation() {
    let (r, _) = simulate(&config("sawtooth_exact.toml")).unwrap();
    assert!(r.max_deviation < 1e-12, "{}", r.max_deviation);
    assert!(r.energy_drift < 1e-14);
}

#[test]
fn five_particle_circulant_pairs() {
    let r = circulant(&config("fpu_circulant.toml")).unwrap();
    assert!(r.passed);
    assert_eq!(r.pairs.len(), 2);
    for p in &r.pairs {
        assert_eq!(p.j + p.partner, 5);
        assert_eq!(p.lambda_j, p.lambda_partner);
    }
}

#[test]
fn provenance_tracks_config() {
    let a = Config::new(ScenarioKind::FpuCirculant);
    let mut b = a.clone();
    assert_eq!(Provenance::of(&a), Provenance::of(&b));
    b.seed = 1;
    assert_ne!(Provenance::of(&a).config_sha256, Provenance::of(&b).config_sha256);
}

#[test]
fn frequency_ratio_tends_to_one_with_amplitude() {
    let mut gaps = Vec::new();
    for amp in [4e-2, 2e-2, 1e-2] {
        let mut cfg = Config::new(ScenarioKind::BoxSimultaneous);
        cfg.run.amplitude = amp;
        let (r, _) = simulate(&cfg).unwrap();
        assert!(r.passed, "amplitude {amp}");
        let ratio = r.slowest_psi().and_then(|m| m.ratio).unwrap();
        gaps.push((ratio - 1.0).abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
}
