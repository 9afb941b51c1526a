//! Averaged interaction potentials along a periodic single-particle path.
//!
//! For a path `q*(theta)` the pair average is
//! `F(v, z) = (1 / 2 pi) \int_0^{2 pi} W(z, q*(s + v) - q*(s)) ds`
//! where `v` is the phase difference and `z` the transverse offset (the
//! vertical coordinate of `W` is its last argument). For the zero-coupling
//! saw-tooth path `F` has a closed form that needs only a single smooth
//! integral; every other path is averaged by adaptive Gauss–Legendre
//! quadrature of Taylor jets, split at impact phases.

use crate::error::{ChoreoError, Result};
use crate::jet::{Jet, ORDER};
use crate::model::{ConfinementPotential, InteractionPotential};
use crate::quad::{adaptive, adaptive_breaks, AdaptiveOpts};
use crate::vertical::{VerticalOrbit, VerticalProblem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const TWO_PI: f64 = 2.0 * PI;

/// A closed single-particle path parameterized by angle.
pub trait PeriodicPath: Send + Sync {
    /// Number of coordinates of the path.
    fn dim(&self) -> usize;
    fn omega0(&self) -> f64;
    /// Angles in `[0, 2 pi)` where the path is non-smooth or nearly so.
    fn impact_phases(&self) -> Vec<f64>;
    /// Taylor jets of every coordinate of `q*(theta + eps)`.
    fn jet(&self, theta: f64) -> Vec<Jet>;

    fn position(&self, theta: f64) -> Vec<f64> {
        self.jet(theta).iter().map(|j| j.value()).collect()
    }
}

/// Zero-coupling vertical bouncing on `[0, l]` at energy `1/2`:
/// `q*(theta) = (l / pi) |theta|` on `[-pi, pi]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SawTooth {
    pub length: f64,
}

impl SawTooth {
    pub fn scale(&self) -> f64 {
        self.length / PI
    }
}

impl PeriodicPath for SawTooth {
    fn dim(&self) -> usize {
        1
    }
    fn omega0(&self) -> f64 {
        PI / self.length
    }
    fn impact_phases(&self) -> Vec<f64> {
        vec![0.0, PI]
    }
    fn jet(&self, theta: f64) -> Vec<Jet> {
        let t = theta.rem_euclid(TWO_PI);
        let c = self.scale();
        if t < PI {
            vec![Jet::line(c * t, c)]
        } else {
            vec![Jet::line(c * (TWO_PI - t), -c)]
        }
    }
}

impl PeriodicPath for VerticalOrbit {
    fn dim(&self) -> usize {
        1
    }
    fn omega0(&self) -> f64 {
        self.omega0
    }
    fn impact_phases(&self) -> Vec<f64> {
        vec![0.0, PI]
    }
    fn jet(&self, theta: f64) -> Vec<Jet> {
        vec![VerticalOrbit::jet(self, theta)]
    }
}

/// Which one-sided limit to report at a non-smooth phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Error for third and higher derivatives at a matching phase.
    Auto,
    Left,
    Right,
}

/// Where the path comes from.
#[derive(Clone)]
pub enum PathSource {
    /// Closed-form zero-coupling branch.
    SawTooth(SawTooth),
    Generic(Arc<dyn PeriodicPath>),
}

impl PathSource {
    pub fn path(&self) -> Arc<dyn PeriodicPath> {
        match self {
            PathSource::SawTooth(s) => Arc::new(*s),
            PathSource::Generic(p) => p.clone(),
        }
    }

    pub fn omega0(&self) -> f64 {
        match self {
            PathSource::SawTooth(s) => s.omega0(),
            PathSource::Generic(p) => p.omega0(),
        }
    }
}

/// Evaluator of `F(v, z)` and its derivatives.
#[derive(Clone)]
pub struct AveragedPotential {
    pub source: PathSource,
    pub interaction: InteractionPotential,
    pub opts: AdaptiveOpts,
    /// Integrand magnitude treated as a collision.
    pub blowup: f64,
}

fn policy() -> AdaptiveOpts {
    AdaptiveOpts { nodes: 32, abs_tol: 1e-15, rel_tol: 1e-14, max_depth: 30 }
}

fn is_matching(t: f64) -> bool {
    t.abs() < 1e-12 || (t - PI).abs() < 1e-12 || (t - TWO_PI).abs() < 1e-12
}

impl AveragedPotential {
    pub fn sawtooth(length: f64, interaction: InteractionPotential) -> Self {
        AveragedPotential { source: PathSource::SawTooth(SawTooth { length }), interaction, opts: policy(), blowup: 1e12 }
    }

    pub fn along(path: Arc<dyn PeriodicPath>, interaction: InteractionPotential) -> Self {
        AveragedPotential { source: PathSource::Generic(path), interaction, opts: policy(), blowup: 1e12 }
    }

    /// Vertical orbit at energy `1/2` for `delta > 0`, saw-tooth for `delta = 0`.
    pub fn box_vertical(problem: &VerticalProblem, interaction: InteractionPotential) -> Result<Self> {
        if problem.delta == 0.0 {
            return Ok(Self::sawtooth(problem.length(), interaction));
        }
        Ok(Self::along(Arc::new(problem.orbit(0.5)?), interaction))
    }

    fn guard(&self, j: Jet) -> Result<Jet> {
        if !j.value().is_finite() || j.value().abs() > self.blowup {
            return Err(ChoreoError::Collision(format!("averaging integrand reached {}", j.value())));
        }
        Ok(j)
    }

    fn eval_w(&self, args: &[Jet]) -> Result<Jet> {
        match self.interaction.eval_jet(args) {
            Ok(j) => self.guard(j),
            Err(ChoreoError::DomainViolation(m)) => Err(ChoreoError::Collision(m)),
            Err(e) => Err(e),
        }
    }

    /// Jet of `F` along the line `(v + eps dv, z + eps dz)`.
    pub fn jet(&self, v: f64, z: &[f64], dv: f64, dz: &[f64], side: Side) -> Result<Jet> {
        let t = v.rem_euclid(TWO_PI);
        let at_zero = t.abs() < 1e-12 || (t - TWO_PI).abs() < 1e-12;
        let at_pi = (t - PI).abs() < 1e-12;
        let mirror = (t > PI && !at_pi && !at_zero) || (at_zero && side == Side::Left) || (at_pi && side == Side::Right);
        let (t, dv, z, dz) = if at_zero {
            (0.0, if mirror { -dv } else { dv }, z, dz)
        } else if at_pi {
            (PI, if mirror { -dv } else { dv }, z, dz)
        } else if mirror {
            (TWO_PI - t, -dv, z, dz)
        } else {
            (t, dv, z, dz)
        };
        match &self.source {
            PathSource::SawTooth(s) => self.sawtooth_jet(s.scale(), t, z, dv, dz),
            PathSource::Generic(p) => self.path_jet(p.as_ref(), t, z, dv, dz),
        }
    }

    /// `[(pi - v) S + I] / (2 pi)` along a line, `v` in `[0, pi]`.
    fn sawtooth_jet(&self, c: f64, v: f64, z: &[f64], dv: f64, dz: &[f64]) -> Result<Jet> {
        let zj: Vec<Jet> = z.iter().zip(dz).map(|(a, b)| Jet::line(*a, *b)).collect();
        let w_at = |u: Jet| -> Result<Jet> {
            let mut args = zj.clone();
            args.push(u);
            self.eval_w(&args)
        };
        let vj = Jet::line(v, dv);
        let s = w_at(vj.scale(c))? + w_at(vj.scale(-c))?;
        let mut err = None;
        let (integral, _) = adaptive(-1.0, 1.0, self.opts, |tau: f64| match w_at(vj.scale(c * tau)) {
            Ok(j) => j,
            Err(e) => {
                err.get_or_insert(e);
                Jet::constant(0.0)
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let ij = vj * integral;
        Ok(((Jet::constant(PI) - vj) * s + ij).scale(1.0 / TWO_PI))
    }

    fn path_jet(&self, path: &dyn PeriodicPath, v: f64, z: &[f64], dv: f64, dz: &[f64]) -> Result<Jet> {
        let mut breaks: Vec<f64> = Vec::new();
        for ph in path.impact_phases() {
            breaks.push(ph.rem_euclid(TWO_PI));
            breaks.push((ph - v).rem_euclid(TWO_PI));
        }
        breaks.push(0.0);
        breaks.push(TWO_PI);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let zj: Vec<Jet> = z.iter().zip(dz).map(|(a, b)| Jet::line(*a, *b)).collect();
        let mut err = None;
        let integrand = |s: f64| -> Jet {
            let lead = path.jet(s + v);
            let base = path.position(s);
            let mut args = zj.clone();
            for (j, b) in lead.iter().zip(&base) {
                let mut c = j.c;
                let mut f = 1.0;
                for k in c.iter_mut() {
                    *k *= f;
                    f *= dv;
                }
                c[0] -= b;
                args.push(Jet::from_coeffs(c));
            }
            match self.eval_w(&args) {
                Ok(j) => j,
                Err(e) => {
                    err.get_or_insert(e);
                    Jet::constant(0.0)
                }
            }
        };
        let (total, _) = adaptive_breaks(&breaks, self.opts, integrand);
        if let Some(e) = err {
            return Err(e);
        }
        Ok(total.scale(1.0 / TWO_PI))
    }

    /// `F(v, z)`.
    pub fn value(&self, v: f64, z: &[f64]) -> Result<f64> {
        let dz = vec![0.0; z.len()];
        Ok(self.jet(v, z, 0.0, &dz, Side::Right)?.value())
    }

    /// `d^k F / dv^k` for `k <= 5`.
    pub fn deriv(&self, v: f64, z: &[f64], k: usize, side: Side) -> Result<f64> {
        Ok(self.derivs(v, z, k, side)?[k])
    }

    /// All phase derivatives up to `kmax`.
    pub fn derivs(&self, v: f64, z: &[f64], kmax: usize, side: Side) -> Result<[f64; ORDER + 1]> {
        if kmax > ORDER {
            return Err(ChoreoError::InvalidInput(format!("derivative order {kmax} above {ORDER}")));
        }
        let t = v.rem_euclid(TWO_PI);
        if kmax >= 3 && side == Side::Auto && is_matching(t) && matches!(self.source, PathSource::SawTooth(_)) {
            return Err(ChoreoError::Smoothness { order: kmax, at: v });
        }
        let dz = vec![0.0; z.len()];
        Ok(self.jet(v, z, 1.0, &dz, side)?.derivs())
    }

    /// Value, gradient and Hessian in `(v, z)` (second order only).
    pub fn grad_hess(&self, v: f64, z: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let m = z.len();
        let n = m + 1;
        let dir = |i: usize| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        };
        let eval = |d: &[f64]| self.jet(v, z, d[0], &d[1..], Side::Right);
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        let mut value = 0.0;
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let j = eval(&dir(i))?;
            value = j.value();
            grad[i] = j.deriv(1);
            diag[i] = j.deriv(2);
            hess[(i, i)] = diag[i];
        }
        for i in 0..n {
            for k in i + 1..n {
                let mut d = dir(i);
                d[k] = 1.0;
                let j = eval(&d)?;
                let mixed = 0.5 * (j.deriv(2) - diag[i] - diag[k]);
                hess[(i, k)] = mixed;
                hess[(k, i)] = mixed;
            }
        }
        Ok((value, grad, hess))
    }
}

/// `U(theta, xi)` of `N` particles on a common vertical path with
/// transverse positions `xi` (row-major `N x m`).
#[derive(Clone)]
pub struct AveragedSystem {
    pub n: usize,
    pub avg: AveragedPotential,
    /// Confinement on the transverse axes (the vertical axis is ignored).
    pub transverse: Option<ConfinementPotential>,
}

impl AveragedSystem {
    pub fn new(n: usize, avg: AveragedPotential, confinement: Option<&ConfinementPotential>) -> Self {
        let transverse = confinement.map(|c| ConfinementPotential {
            alpha: c.alpha,
            axes: c.axes[..c.axes.len() - 1].to_vec(),
        });
        AveragedSystem { n, avg, transverse }
    }

    /// Transverse dimension per particle.
    pub fn m(&self) -> usize {
        self.transverse.as_ref().map(|c| c.axes.len()).unwrap_or(0)
    }

    pub fn unknowns(&self) -> usize {
        self.n * (1 + self.m())
    }

    fn pair_args(&self, theta: &[f64], xi: &[f64], a: usize, b: usize) -> (f64, Vec<f64>) {
        let m = self.m();
        let z: Vec<f64> = (0..m).map(|i| xi[a * m + i] - xi[b * m + i]).collect();
        (theta[a] - theta[b], z)
    }

    /// `U` as an ordered double sum plus transverse wall terms.
    pub fn value(&self, theta: &[f64], xi: &[f64]) -> Result<f64> {
        let mut u = self.walls(xi, None)?;
        for a in 0..self.n {
            for b in 0..self.n {
                if a != b {
                    let (v, z) = self.pair_args(theta, xi, a, b);
                    u += self.avg.value(v, &z)?;
                }
            }
        }
        Ok(u)
    }

    fn walls(&self, xi: &[f64], mut out: Option<(&mut [f64], &mut DMatrix<f64>)>) -> Result<f64> {
        let conf = match &self.transverse {
            Some(c) => c,
            None => return Ok(0.0),
        };
        let m = self.m();
        let mut u = 0.0;
        for a in 0..self.n {
            for i in 0..m {
                let (v, v1, v2) = conf.axis_potential(i, xi[a * m + i])?;
                u += v;
                if let Some((g, h)) = out.as_mut() {
                    let k = self.n + a * m + i;
                    g[k] += v1;
                    h[(k, k)] += v2;
                }
            }
        }
        Ok(u)
    }

    /// Value, gradient and Hessian over `(theta, xi)`.
    pub fn full(&self, theta: &[f64], xi: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let n = self.n;
        let m = self.m();
        let dim = self.unknowns();
        let mut grad = vec![0.0; dim];
        let mut hess = DMatrix::zeros(dim, dim);
        let mut u = self.walls(xi, Some((&mut grad, &mut hess)))?;
        let idx = |a: usize, k: usize| if k == 0 { a } else { n + a * m + (k - 1) };
        // An even interaction gives the (b, a) term the same contributions as (a, b).
        let even = self.avg.interaction.is_even();
        for a in 0..n {
            for b in 0..n {
                if a == b || (even && b < a) {
                    continue;
                }
                let (v, z) = self.pair_args(theta, xi, a, b);
                let (mut f, mut g, mut h) = self.avg.grad_hess(v, &z)?;
                if even {
                    f *= 2.0;
                    g.iter_mut().for_each(|x| *x *= 2.0);
                    h *= 2.0;
                }
                u += f;
                for k in 0..=m {
                    grad[idx(a, k)] += g[k];
                    grad[idx(b, k)] -= g[k];
                    for l in 0..=m {
                        hess[(idx(a, k), idx(a, l))] += h[(k, l)];
                        hess[(idx(b, k), idx(b, l))] += h[(k, l)];
                        hess[(idx(a, k), idx(b, l))] -= h[(k, l)];
                        hess[(idx(b, k), idx(a, l))] -= h[(k, l)];
                    }
                }
            }
        }
        Ok((u, grad, hess))
    }
}

/// Result of a collision scan.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CollisionWitness {
    pub collides: bool,
    /// Time (angle over frequency) of the closest approach.
    pub time: f64,
    pub min_distance: f64,
    pub pair: (usize, usize),
}

/// Scans all pairs of uncoupled particles on the path for an approach within `rho`.
pub fn collision_test(theta: &[f64], xi: &[f64], path: &dyn PeriodicPath, rho: f64) -> CollisionWitness {
    let n = theta.len();
    let m = if n > 0 { xi.len() / n } else { 0 };
    let grid = 4096;
    let mut best = CollisionWitness { collides: false, time: 0.0, min_distance: f64::INFINITY, pair: (0, 0) };
    for a in 0..n {
        for b in a + 1..n {
            let dist = |s: f64| -> f64 {
                let pa = path.position(s + theta[a]);
                let pb = path.position(s + theta[b]);
                let mut r2: f64 = (0..m).map(|i| (xi[a * m + i] - xi[b * m + i]).powi(2)).sum();
                r2 += pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                r2.sqrt()
            };
            let mut s_best = 0.0;
            let mut d_best = dist(0.0);
            for k in 1..grid {
                let s = TWO_PI * k as f64 / grid as f64;
                let d = dist(s);
                if d < d_best {
                    d_best = d;
                    s_best = s;
                }
            }
            // Golden-section refinement around the grid minimum.
            let h = TWO_PI / grid as f64;
            let (mut lo, mut hi) = (s_best - h, s_best + h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if dist(x1) < dist(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let s_ref = 0.5 * (lo + hi);
            let d_ref = dist(s_ref);
            let (s_min, d_min) = if d_ref < d_best { (s_ref, d_ref) } else { (s_best, d_best) };
            if d_min < best.min_distance {
                best = CollisionWitness {
                    collides: d_min <= rho,
                    time: s_min.rem_euclid(TWO_PI) / path.omega0(),
                    min_distance: d_min,
                    pair: (a, b),
                };
            }
        }
    }
    best
}

/// Quadratic and quartic coefficients of the averaged potential at a
/// synchronous phase difference.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoeffTable {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub phase: Vec<Vec<f64>>,
}

/// Second- and fourth-order coefficients for one pair at phase difference
/// `0` or `pi`, with the saw-tooth scale `c = l / pi`.
pub fn gamma_beta_pair(w: &InteractionPotential, z: &[f64], at_pi: bool, c: f64) -> Result<(f64, f64)> {
    let u = if at_pi { c * PI } else { 0.0 };
    let d = w.vertical_derivs(u, z)?;
    if at_pi {
        Ok((-(c / PI) * d[1], c * c * d[2]))
    } else {
        Ok((c * c * d[2], -c * c * d[2]))
    }
}

/// `gamma_nm`, `beta_nm` for all ordered pairs.
pub fn gamma_beta(w: &InteractionPotential, xi: &[f64], phases: &[f64], m: usize, c: f64) -> Result<CoeffTable> {
    let n = phases.len();
    let mut gamma = DMatrix::zeros(n, n);
    let mut beta = DMatrix::zeros(n, n);
    let mut phase = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let v = (phases[a] - phases[b]).rem_euclid(TWO_PI);
            let at_pi = (v - PI).abs() < 1e-9;
            if !at_pi && v.abs() > 1e-9 && (v - TWO_PI).abs() > 1e-9 {
                return Err(ChoreoError::InvalidInput("phase differences must be 0 or pi".into()));
            }
            let z: Vec<f64> = (0..m).map(|i| xi[a * m + i] - xi[b * m + i]).collect();
            let (g, bt) = gamma_beta_pair(w, &z, at_pi, c)?;
            gamma[(a, b)] = g;
            beta[(a, b)] = bt;
            phase[a][b] = if at_pi { PI } else { 0.0 };
        }
    }
    Ok(CoeffTable { gamma, beta, phase })
}

/// Partial sum of the tail beyond `q_t`, by the binomial series of
/// `(1 - 2 q^{-alpha})^{-1/2}`.
fn k_tail(alpha: f64, q_t: f64) -> f64 {
    let x = 2.0 * q_t.powf(-alpha);
    let mut coef = 1.0;
    let mut xp = 1.0;
    let mut sum = 0.0;
    for j in 0..10_000 {
        let e = 2.0 * alpha + 1.0 + j as f64 * alpha;
        let term = coef * xp / e;
        sum += term;
        if term.abs() < 1e-19 * sum.abs() {
            break;
        }
        coef *= (2 * j + 1) as f64 / (2 * j + 2) as f64;
        xp *= x;
    }
    4.0 * alpha * alpha * q_t.powf(-2.0 * alpha - 1.0) * sum
}

/// `K(alpha)` with an explicit split point `q_t > 2^{1/alpha}` between the
/// quadrature and the series tail.
pub fn k_alpha_split(alpha: f64, q_t: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(ChoreoError::InvalidInput("alpha must be positive".into()));
    }
    let q0 = 2f64.powf(1.0 / alpha);
    if !(q_t > q0) {
        return Err(ChoreoError::InvalidInput("tail threshold must exceed the turning point".into()));
    }
    // q = q0 (1 + u^2) removes the inverse square root at the lower end.
    let u_t = (q_t / q0 - 1.0).sqrt();
    let f = |u: f64| -> f64 {
        let s = 1.0 + u * u;
        let q = q0 * s;
        let gap = -(-alpha * (u * u).ln_1p()).exp_m1();
        let root = if u == 0.0 { alpha.sqrt() } else { (gap / (u * u)).sqrt() };
        4.0 * alpha * alpha * q.powf(-2.0 * alpha - 2.0) * 2.0 * q0 / root
    };
    let opts = AdaptiveOpts { nodes: 20, abs_tol: 1e-16, rel_tol: 1e-15, max_depth: 30 };
    let (body, _) = adaptive(0.0, u_t, opts, f);
    Ok(body + k_tail(alpha, q_t))
}

/// The positive constant of the divergent fourth-derivative term.
pub fn k_alpha(alpha: f64) -> Result<f64> {
    k_alpha_split(alpha, 8.0 * 2f64.powf(1.0 / alpha))
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r^2)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Fourth-derivative scaling fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub at_pi: bool,
    pub deltas: Vec<f64>,
    pub fourth: Vec<f64>,
    pub predicted: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    /// Measured over predicted at the smallest `delta`.
    pub prefactor_ratio: f64,
    /// Ratio of successive differences over the two smallest `delta`s, which
    /// removes the bounded regular part.
    pub incremental_ratio: f64,
    pub fit_warning: bool,
}

/// Fits `log |d^4 F(v; delta)|` against `log delta` on sine walls of
/// length `pi` and compares with `-+ delta^{-1/alpha} K Q'(0) d^2 W / (2 pi)`.
pub fn scaling_probe(
    alpha: f64,
    deltas: &[f64],
    at_pi: bool,
    w: &InteractionPotential,
    z: &[f64],
) -> Result<ScalingReport> {
    use rayon::prelude::*;
    let v = if at_pi { PI } else { 0.0 };
    let fourth: Vec<f64> = deltas
        .par_iter()
        .map(|&d| -> Result<f64> {
            let prob = VerticalProblem::standard(d, alpha)?;
            let avg = AveragedPotential::box_vertical(&prob, w.clone())?;
            avg.deriv(v, z, 4, Side::Right)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = k_alpha(alpha)?;
    let qp = crate::model::Axis::sine(PI).q_prime_at_wall();
    let w2 = w.vertical_derivs(v, z)?[2];
    let sign = if at_pi { 1.0 } else { -1.0 };
    // The average carries a 1/(2π) normalization that multiplies the singular window.
    let predicted: Vec<f64> =
        deltas.iter().map(|d| sign * d.powf(-1.0 / alpha) * k * qp * w2 / (2.0 * PI)).collect();
    let pts: Vec<(f64, f64)> = deltas.iter().zip(&fourth).map(|(d, f)| (d.ln(), f.abs().ln())).collect();
    let (slope, _, r2) = linear_fit(&pts);
    let imin = deltas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let prefactor_ratio = fourth[imin] / predicted[imin];
    let incremental_ratio = {
        let mut idx: Vec<usize> = (0..deltas.len()).collect();
        idx.sort_by(|a, b| deltas[*a].partial_cmp(&deltas[*b]).unwrap());
        if idx.len() >= 2 {
            let (a, b) = (idx[0], idx[1]);
            (fourth[a] - fourth[b]) / (predicted[a] - predicted[b])
        } else {
            f64::NAN
        }
    };
    let fit_warning = r2 < 0.99;
    if fit_warning {
        log::warn!("scaling fit quality r^2 = {r2}");
    }
    Ok(ScalingReport { alpha, at_pi, deltas: deltas.to_vec(), fourth, predicted, slope, r2, prefactor_ratio, incremental_ratio, fit_warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sawtooth_cosine_values() {
        let avg = AveragedPotential::sawtooth(PI, InteractionPotential::cosine(1.0));
        assert!((avg.value(PI / 2.0, &[]).unwrap() - 1.0 / PI).abs() < 1e-14);
        assert!((avg.value(0.0, &[]).unwrap() - 1.0).abs() < 1e-14);
        assert!(avg.value(PI, &[]).unwrap().abs() < 1e-14);
        assert!(matches!(avg.deriv(0.0, &[], 3, Side::Auto), Err(ChoreoError::Smoothness { .. })));
        let r = avg.deriv(0.0, &[], 3, Side::Right).unwrap();
        let l = avg.deriv(0.0, &[], 3, Side::Left).unwrap();
        assert!((r - 2.0 / PI).abs() < 1e-12 && (l + 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn generic_route_agrees_with_closed_form() {
        let w = InteractionPotential::shifted_inverse_square(1.0, 0.1);
        let a = AveragedPotential::sawtooth(PI, w.clone());
        let b = AveragedPotential::along(Arc::new(SawTooth { length: PI }), w);
        for v in [0.3, 1.1, 2.0, 2.9, 4.0] {
            let ja = a.jet(v, &[0.4], 1.0, &[0.0], Side::Right).unwrap();
            let jb = b.jet(v, &[0.4], 1.0, &[0.0], Side::Right).unwrap();
            for k in 0..=1 {
                assert!((ja.deriv(k) - jb.deriv(k)).abs() < 1e-11, "v={v} k={k}");
            }
        }
    }

    #[test]
    fn k_of_two_closed_form() {
        let k = k_alpha(2.0).unwrap();
        assert!((k - 3.0 * 2f64.sqrt() * PI / 8.0).abs() < 1e-12, "{k}");
    }
}
