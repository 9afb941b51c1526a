//! End-to-end scenario runs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Config, PerturbMode, ScenarioKind};
use super::freq::{fit_sinusoid, freq_extract, Peak, MIN_SAMPLES};
use crate::average::{scaling_probe, AveragedPotential, AveragedSystem, ScalingReport, Side};
use crate::billiard::{find_periodic, BilliardDomain, BilliardOrbit};
use crate::error::{ChoreoError, Result};
use crate::integrate::{integrate_horizon, EnergyMonitor, HorizonOpts, IntegratorConfig, Observer, Trajectory};
use crate::model::{PhaseState, SystemSpec};
use crate::nondeg::{billiard_relation_residual, det_m_identity_check, twist_check, TwistData, TwistReport};
use crate::reduce::{
    hessian_spectrum, minimize_averaged, MinimizeOptions, MinimumReport, ReductionFrame, SpectrumMode,
};
use crate::vertical::{VerticalOrbit, VerticalProblem};

/// Predicted and measured frequency of one linear mode of the slow dynamics.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModeCheck {
    /// `psi` for phase-dominated modes, `xi` for transverse ones.
    pub label: String,
    /// Reduced Hessian eigenvalue after mass scaling.
    pub eigenvalue: f64,
    /// Angular frequency of the linearized averaged dynamics.
    pub predicted: f64,
    pub measured: Option<f64>,
    pub ratio: Option<f64>,
    /// Largest excursion of the modal coordinate.
    pub excursion: f64,
    pub excited: bool,
}

/// Outcome of a long simulation near an averaged-potential minimum.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StabilityReport {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    pub amplitude: f64,
    pub horizon: f64,
    pub fast_periods: f64,
    pub omega0: f64,
    pub anharmonicity: f64,
    pub theta_min: Vec<f64>,
    pub xi_min: Vec<f64>,
    pub minimum_value: f64,
    pub simultaneous_impacts: bool,
    pub max_psi_deviation: f64,
    pub max_xi_deviation: f64,
    /// Largest Euclidean distance from the minimum in `(psi, xi)`.
    pub max_deviation: f64,
    pub min_pair_distance: f64,
    pub core_radius: f64,
    pub energy_drift: f64,
    pub modes: Vec<ModeCheck>,
    /// Spectral peaks (angular) of the excited modal coordinate.
    pub fft_peaks: Vec<Peak>,
    pub samples: usize,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl StabilityReport {
    /// The excited phase mode with the smallest prediction.
    pub fn slowest_psi(&self) -> Option<&ModeCheck> {
        self.modes
            .iter()
            .filter(|m| m.label == "psi" && m.excited)
            .min_by(|a, b| a.predicted.partial_cmp(&b.predicted).unwrap())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CirculantPair {
    pub j: usize,
    pub partner: usize,
    pub lambda_j: f64,
    pub lambda_partner: f64,
}

/// Closed-form circulant spectrum against a dense solve.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CirculantReport {
    pub n: usize,
    pub theta: Vec<f64>,
    /// Indexed by Fourier mode `j`.
    pub formula: Vec<f64>,
    /// Ascending.
    pub dense: Vec<f64>,
    pub max_abs_diff: f64,
    pub pairs: Vec<CirculantPair>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub start: Vec<f64>,
    pub orbit: Option<BilliardOrbit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilliardReport {
    pub domain: BilliardDomain,
    pub orbits: Vec<OrbitRecord>,
    /// The action-space twist of the billiard map is not evaluated.
    pub twist_checked: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum ScenarioResult {
    Stability(Box<StabilityReport>),
    Circulant(CirculantReport),
    Billiard(BilliardReport),
    Scaling(ScalingReport),
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        match self {
            ScenarioResult::Stability(r) => r.passed,
            ScenarioResult::Circulant(r) => r.passed,
            ScenarioResult::Billiard(r) => r.passed,
            ScenarioResult::Scaling(r) => !r.fit_warning,
        }
    }
}

pub fn run_scenario(cfg: &Config) -> Result<ScenarioResult> {
    cfg.validate()?;
    match cfg.scenario {
        ScenarioKind::SmoothChoreo | ScenarioKind::BoxNonsimultaneous | ScenarioKind::BoxSimultaneous => {
            Ok(ScenarioResult::Stability(Box::new(simulate(cfg)?.0)))
        }
        ScenarioKind::FpuCirculant => Ok(ScenarioResult::Circulant(circulant(cfg)?)),
        ScenarioKind::BilliardEllipse => Ok(ScenarioResult::Billiard(billiards(cfg)?)),
        ScenarioKind::ScalingProbe => {
            let s = &cfg.scaling;
            Ok(ScenarioResult::Scaling(scaling_probe(s.alpha, &s.deltas, s.at_pi, &cfg.system.interaction, &s.zeta)?))
        }
    }
}

/// Vertical orbit, averaged system and its minimum for a box configuration.
pub struct Averaged {
    pub spec: SystemSpec,
    pub orbit: VerticalOrbit,
    pub system: AveragedSystem,
    pub minimum: MinimumReport,
}

fn default_xi0(cfg: &Config) -> Vec<f64> {
    let n = cfg.system.n;
    let m = cfg.system.d - 1;
    if !cfg.run.xi0.is_empty() {
        return cfg.run.xi0.clone();
    }
    let conf = cfg.confinement();
    let mut xi = vec![0.0; n * m];
    for k in 0..n {
        for i in 0..m {
            let ax = &conf.axes[i];
            xi[k * m + i] = ax.center();
            if i == 0 {
                xi[k * m] += (k as f64 - 0.5 * (n as f64 - 1.0)) * ax.length / (n as f64 + 1.0);
            }
        }
    }
    xi
}

pub fn averaged_minimum(cfg: &Config) -> Result<Averaged> {
    let spec = cfg.system_spec()?;
    let conf = cfg.confinement();
    let delta = cfg.system.delta;
    let problem = VerticalProblem::from_confinement(delta, &conf)?;
    let orbit = problem.solve_vertical_orbit()?;
    let w = cfg.system.interaction.clone();
    let avg = if delta == 0.0 {
        AveragedPotential::sawtooth(conf.vertical().length, w)
    } else {
        AveragedPotential::box_vertical(&problem, w)?
    };
    let system = AveragedSystem::new(cfg.system.n, avg, Some(&conf));
    let xi0 = default_xi0(cfg);
    let mut opts = MinimizeOptions { seed: cfg.seed, xi0: xi0.clone(), ..Default::default() };
    if !cfg.run.phases.is_empty() {
        opts.starts = vec![(cfg.run.phases.clone(), xi0)];
    }
    let minimum = minimize_averaged(&system, &opts)?;
    Ok(Averaged { spec, orbit, system, minimum })
}

/// Normal modes of the linearized averaged dynamics in mass-scaled
/// coordinates: `(eigenvalues, eigenvectors, scaling diagonal)`.
fn normal_modes(min: &MinimumReport, n: usize, a: f64) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let k = min.hessian.nrows();
    let np = n - 1;
    let scale: Vec<f64> = (0..k).map(|i| if i < np { (a / n as f64).sqrt() } else { 1.0 }).collect();
    let m = DMatrix::from_fn(k, k, |i, j| scale[i] * min.hessian[(i, j)] * scale[j]);
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|x, y| eig.eigenvalues[*x].partial_cmp(&eig.eigenvalues[*y]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs, scale)
}

/// Periodic antiderivative with zero mean of the mean-free part of `f`,
/// sampled on a uniform grid of step `h`.
fn antiderivative(f: &[f64], h: f64) -> Vec<f64> {
    let k = f.len();
    let mean = f.iter().sum::<f64>() / k as f64;
    let mut g = vec![0.0; k];
    for i in 1..k {
        g[i] = g[i - 1] + 0.5 * h * (f[i - 1] + f[i] - 2.0 * mean);
    }
    let gm = g.iter().sum::<f64>() / k as f64;
    g.iter_mut().for_each(|x| *x -= gm);
    g
}

/// First-order fast corrections that put the mean motion, rather than the
/// instantaneous state, on the averaged minimum.
struct FastCorrection {
    /// Vertical energy offsets.
    energy: Vec<f64>,
    /// Transverse position and velocity offsets, row-major `N x m`.
    xi: Vec<f64>,
    xi_dot: Vec<f64>,
}

/// Integrates the interaction forcing along one unperturbed fast period.
/// With `s = omega0 t` the vertical action obeys `dI/ds = -delta F / omega0`
/// and the transverse positions `d^2 xi/ds^2 = -delta G / omega0^2`.
fn fast_correction(spec: &SystemSpec, orbit: &VerticalOrbit, theta: &[f64], xi: &[f64]) -> Result<FastCorrection> {
    let n = spec.n;
    let d = spec.d;
    let m = d - 1;
    let samples = 1024;
    let w = orbit.omega0;
    let mut vert = vec![vec![0.0; samples]; n];
    let mut trans = vec![vec![0.0; samples]; n * m];
    let mut diff = vec![0.0; d];
    for s in 0..samples {
        let shift = 2.0 * PI * s as f64 / samples as f64;
        let states: Vec<(f64, f64)> = theta.iter().map(|t| orbit.state(t + shift)).collect();
        for a in 0..n {
            let mut f = 0.0;
            for b in 0..n {
                if a == b {
                    continue;
                }
                for i in 0..m {
                    diff[i] = xi[a * m + i] - xi[b * m + i];
                }
                diff[m] = states[a].0 - states[b].0;
                let (_, g) = spec.interaction.value_grad(&diff)?;
                f += 2.0 * g[m];
                for i in 0..m {
                    trans[a * m + i][s] += 2.0 * g[i];
                }
            }
            vert[a][s] = f * states[a].1 / w;
        }
    }
    let h = 2.0 * PI / samples as f64;
    let delta = spec.delta;
    let energy = vert.iter().map(|f| -delta * antiderivative(f, h)[0]).collect();
    let mut xi_c = Vec::with_capacity(n * m);
    let mut xi_dot = Vec::with_capacity(n * m);
    for f in &trans {
        let g1 = antiderivative(f, h);
        let g2 = antiderivative(&g1, h);
        xi_c.push(-delta / (w * w) * g2[0]);
        xi_dot.push(-delta / w * g1[0]);
    }
    Ok(FastCorrection { energy, xi: xi_c, xi_dot })
}

/// Angular frequency of a slow oscillation sampled every `stride`.
fn measure(times: &[f64], x: &[f64], stride: f64) -> Option<(f64, Vec<Peak>)> {
    let span = times.last()? - times.first()?;
    if span <= 0.0 {
        return None;
    }
    let peaks = if x.len() >= MIN_SAMPLES { freq_extract(x, 1.0 / stride, 3).ok()? } else { Vec::new() };
    let fit = match peaks.first() {
        Some(p) if p.frequency * span >= 20.0 => {
            fit_sinusoid(times, x, p.frequency - 2.0 / span, p.frequency + 2.0 / span).ok()?
        }
        _ => fit_sinusoid(times, x, 0.5 / span, (30.0 / span).min(0.5 / stride)).ok()?,
    };
    let ang = peaks.iter().map(|p| Peak { frequency: 2.0 * PI * p.frequency, amplitude: p.amplitude }).collect();
    Some((2.0 * PI * fit.frequency, ang))
}

fn unwrap_near(prev: f64, raw: f64) -> f64 {
    prev + (raw - prev + PI).rem_euclid(2.0 * PI) - PI
}

/// Runs a box scenario: averaged minimum, perturbed full-system start, long
/// integration and slow-frequency comparison.
pub fn simulate(cfg: &Config) -> Result<(StabilityReport, Trajectory)> {
    let Averaged { spec, orbit, system: _, minimum } = averaged_minimum(cfg)?;
    let n = spec.n;
    let d = spec.d;
    let m = d - 1;
    let np = n - 1;
    let delta = spec.delta;
    let a = orbit.anharmonicity;
    let frame = ReductionFrame::new(n)?;
    let run = &cfg.run;
    let mut notes = Vec::new();

    let (vals, vecs, scale) = normal_modes(&minimum, n, a);
    let k = vals.len();
    let vmax = vals.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    let psi_weight = |c: usize| (0..np).map(|i| vecs[(i, c)].powi(2)).sum::<f64>();
    let chosen = (0..k)
        .filter(|&c| vals[c] > 1e-10 * vmax)
        .find(|&c| run.mode == PerturbMode::Slowest || psi_weight(c) > 0.5);
    if vals.iter().any(|v| *v < -1e-8 * vmax) {
        notes.push("reduced Hessian is not positive definite at the minimum".into());
    }
    let mut disp = vec![0.0; k];
    if let Some(c) = chosen {
        for i in 0..k {
            disp[i] = scale[i] * vecs[(i, c)];
        }
        let norm = disp.iter().map(|x| x * x).sum::<f64>().sqrt();
        disp.iter_mut().for_each(|x| *x *= run.amplitude / norm);
    } else if run.amplitude > 0.0 {
        notes.push("no positive mode to excite".into());
    }

    let shift = frame.theta_of_psi(&disp[..np]);
    let theta0: Vec<f64> = minimum.theta.iter().zip(&shift).map(|(t, s)| t + s).collect();
    let xi0: Vec<f64> = minimum.xi.iter().zip(&disp[np..]).map(|(x, s)| x + s).collect();
    let corr = if run.averaging_correction && delta > 0.0 {
        fast_correction(&spec, &orbit, &theta0, &xi0)?
    } else {
        FastCorrection { energy: vec![0.0; n], xi: vec![0.0; n * m], xi_dot: vec![0.0; n * m] }
    };
    let mut q = vec![0.0; n * d];
    let mut p = vec![0.0; n * d];
    for b in 0..n {
        let (qv, pv) = orbit.state(theta0[b]);
        let kinetic = 2.0 * (orbit.energy + corr.energy[b] - orbit.problem.potential(qv));
        if !(kinetic >= 0.0) {
            return Err(ChoreoError::InvalidInput("energy offset leaves no vertical kinetic energy".into()));
        }
        for i in 0..m {
            q[b * d + i] = xi0[b * m + i] + corr.xi[b * m + i];
            p[b * d + i] = corr.xi_dot[b * m + i];
        }
        q[b * d + m] = qv;
        p[b * d + m] = pv.signum() * kinetic.sqrt();
    }
    let state = PhaseState::new(q, p);
    spec.check_domain(&state.q)?;

    let horizon = run.horizon_periods * orbit.period;
    let stride = run.sample_interval;
    let icfg = IntegratorConfig::new(run.method, run.dt);
    let mut times = Vec::new();
    let mut phases: Vec<Vec<f64>> = Vec::new();
    let mut xis: Vec<Vec<f64>> = Vec::new();
    let mut min_dist = f64::INFINITY;
    let mut monitor = EnergyMonitor::default();
    let traj = {
        let mut record = |s: &PhaseState, _e: f64| {
            times.push(s.t);
            let raw: Vec<f64> = (0..n).map(|b| orbit.phase_of(s.q[b * d + m], s.p[b * d + m])).collect();
            let next = match phases.last() {
                None => raw.iter().zip(&theta0).map(|(r, t)| unwrap_near(*t, *r)).collect(),
                Some(prev) => raw.iter().zip(prev).map(|(r, t)| unwrap_near(*t, *r)).collect(),
            };
            phases.push(next);
            xis.push((0..n).flat_map(|b| s.q[b * d..b * d + m].to_vec()).collect());
            min_dist = min_dist.min(spec.min_pair_distance(&s.q));
        };
        let mut obs: [&mut dyn Observer; 2] = [&mut record, &mut monitor];
        integrate_horizon(&spec, &state, &icfg, horizon, HorizonOpts { stride, store: run.store }, &mut obs)?
    };
        let (psi_min, xi_min) = (frame.to_reduced(&minimum.theta, &vec![0.0; n]).1, minimum.xi.clone());
        let mut modal = vec![Vec::with_capacity(times.len()); k];
        let (mut max_psi, mut max_xi, mut max_dev) = (0.0f64, 0.0f64, 0.0f64);
        for (th, xi) in phases.iter().zip(&xis) {
            let psi = frame.to_reduced(th, &vec![0.0; n]).1;
            let mut y: Vec<f64> = psi.iter().zip(&psi_min).map(|(a, b)| a - b).collect();
            y.extend(xi.iter().zip(&xi_min).map(|(a, b)| a - b));
            max_psi = max_psi.max(y[..np].iter().fold(0.0, |s, v| s.max(v.abs())));
            max_xi = max_xi.max(y[np..].iter().fold(0.0, |s, v| s.max(v.abs())));
            max_dev = max_dev.max(y.iter().map(|v| v * v).sum::<f64>().sqrt());
            for c in 0..k {
                modal[c].push((0..k).map(|i| vecs[(i, c)] * y[i] / scale[i]).sum::<f64>());
            }
        }
        let mut modes = Vec::with_capacity(k);
        let mut fft_peaks = Vec::new();
        let mut passed = true;
        for c in 0..k {
            let excursion = modal[c].iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let predicted = (delta * vals[c].max(0.0)).sqrt();
            let excited = Some(c) == chosen;
            let measured = if excited && predicted * horizon >= 2.0 * PI {
                measure(&times, &modal[c], stride).map(|(w, peaks)| {
                    fft_peaks = peaks;
                    w
                })
            } else {
                None
            };
            let ratio = measured.map(|w| w / predicted);
            if excited {
                if let Some(r) = ratio {
                    passed &= (r - 1.0).abs() < 0.05;
                }
            }
            modes.push(ModeCheck {
                label: if psi_weight(c) > 0.5 { "psi".into() } else { "xi".into() },
                eigenvalue: vals[c],
                predicted,
                measured,
                ratio,
                excursion,
                excited,
            });
        }
        let rho = spec.interaction.core_radius;
        let bound = if run.amplitude > 0.0 { 10.0 * run.amplitude } else { 1e-12 };
        passed &= max_dev < bound && min_dist > rho && monitor.max_rel_drift < 1e-5;
        if minimum.simultaneous_impacts && cfg.scenario == ScenarioKind::BoxNonsimultaneous {
            notes.push("minimum has simultaneous impacts".into());
        }
        notes.push("boundedness and frequency diagnostics stand in for torus measure estimates".into());
        let report = StabilityReport {
            scenario: cfg.scenario,
            n,
            d,
            alpha: cfg.system.alpha,
            delta,
            amplitude: run.amplitude,
            horizon,
            fast_periods: run.horizon_periods,
            omega0: orbit.omega0,
            anharmonicity: a,
            theta_min: minimum.theta.clone(),
            xi_min: minimum.xi.clone(),
            minimum_value: minimum.value,
            simultaneous_impacts: minimum.simultaneous_impacts,
            max_psi_deviation: max_psi,
            max_xi_deviation: max_xi,
            max_deviation: max_dev,
            min_pair_distance: min_dist,
            core_radius: rho,
            energy_drift: monitor.max_rel_drift,
            modes,
            fft_peaks,
            samples: times.len(),
            passed,
            notes,
        };
        Ok((report, traj))
}

/// Equidistant phases on a common vertical line.
pub fn circulant(cfg: &Config) -> Result<CirculantReport> {
    let n = cfg.system.n;
    let av = {
        let conf = cfg.confinement();
        let delta = cfg.system.delta;
        let w = cfg.system.interaction.clone();
        let avg = if delta == 0.0 {
            AveragedPotential::sawtooth(conf.vertical().length, w)
        } else {
            AveragedPotential::box_vertical(&VerticalProblem::from_confinement(delta, &conf)?, w)?
        };
        AveragedSystem::new(n, avg, Some(&conf))
    };
    let theta: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let xi = vec![0.0; n * av.m()];
    let formula = hessian_spectrum(&av, &theta, &xi, SpectrumMode::Circulant)?;
    let dense = hessian_spectrum(&av, &theta, &xi, SpectrumMode::Dense)?;
    let mut sorted = formula.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max_abs_diff = sorted.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pairs = (1..n)
        .filter(|j| 2 * j < n)
        .map(|j| CirculantPair { j, partner: n - j, lambda_j: formula[j], lambda_partner: formula[n - j] })
        .collect();
    let scale = dense.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    Ok(CirculantReport { n, theta, formula, dense, max_abs_diff, pairs, passed: max_abs_diff < 1e-10 * scale })
}

pub fn billiard_domain(cfg: &Config) -> Result<BilliardDomain> {
    let b = &cfg.billiard;
    let dom = match b.exponent {
        Some(e) => BilliardDomain::Superellipse { semi: b.semi.clone(), exponent: e },
        None => BilliardDomain::Ellipse { semi: b.semi.clone() },
    };
    dom.validate()?;
    Ok(dom)
}

pub fn billiards(cfg: &Config) -> Result<BilliardReport> {
    use rayon::prelude::*;
    let domain = billiard_domain(cfg)?;
    let k = cfg.billiard.bounces;
    let orbits: Vec<OrbitRecord> = cfg
        .billiard
        .starts
        .par_iter()
        .map(|s| match find_periodic(&domain, k, s) {
            Ok(o) => OrbitRecord { start: s.clone(), orbit: Some(o), error: None },
            Err(e) => OrbitRecord { start: s.clone(), orbit: None, error: Some(e.to_string()) },
        })
        .collect();
    let passed = orbits.iter().all(|r| {
        r.orbit
            .as_ref()
            .map(|o| o.reflection_residual < 1e-10 && (o.multiplier_product() - 1.0).abs() < 1e-8)
            .unwrap_or(false)
    });
    Ok(BilliardReport { domain, orbits, twist_checked: false, passed })
}

/// One row of the averaged-potential table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AverageRow {
    pub theta: f64,
    /// Value and right derivatives of orders 1 to 4.
    pub derivs: [f64; 5],
}

pub fn average_table(cfg: &Config) -> Result<Vec<AverageRow>> {
    let conf = cfg.confinement();
    let delta = cfg.system.delta;
    let w = cfg.system.interaction.clone();
    let avg = if delta == 0.0 {
        AveragedPotential::sawtooth(conf.vertical().length, w)
    } else {
        AveragedPotential::box_vertical(&VerticalProblem::from_confinement(delta, &conf)?, w)?
    };
    let m = cfg.system.d - 1;
    let z = if cfg.average.zeta.is_empty() { vec![0.0; m] } else { cfg.average.zeta.clone() };
    if z.len() != m {
        return Err(ChoreoError::Config("average.zeta must hold d - 1 entries".into()));
    }
    let pts = cfg.average.points.max(1);
    (0..pts)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / pts as f64;
            let all = avg.derivs(theta, &z, 4, Side::Right)?;
            let mut derivs = [0.0; 5];
            derivs.copy_from_slice(&all[..5]);
            Ok(AverageRow { theta, derivs })
        })
        .collect()
}

/// One random draw of twist data and its identity checks.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NondegRecord {
    pub index: usize,
    pub n: usize,
    pub d: usize,
    pub det_m: f64,
    pub det_m_rhs: f64,
    pub det_m_residual: f64,
    pub billiard_residual: f64,
    pub twist: TwistReport,
    pub passed: bool,
}

pub fn nondeg_draws(cfg: &Config) -> Result<Vec<NondegRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nd = &cfg.nondeg;
    (0..nd.draws)
        .map(|index| {
            let n = rng.random_range(nd.n_range[0]..=nd.n_range[1]);
            let d = rng.random_range(nd.d_range[0]..=nd.d_range[1]);
            let td = TwistData::random(d, &mut rng);
            let frame = ReductionFrame::new(n)?;
            let check = det_m_identity_check(&td, &frame)?;
            let billiard_residual = billiard_relation_residual(&td.clone().with_billiard_relation());
            let passed = check.skipped || (check.residual < 1e-10 && billiard_residual < 1e-12);
            Ok(NondegRecord {
                index,
                n,
                d,
                det_m: check.det_m,
                det_m_rhs: check.rhs,
                det_m_residual: check.residual,
                billiard_residual,
                twist: twist_check(&td),
                passed,
            })
        })
        .collect()
}
