//! Hard-wall billiards in convex domains: the reflection map, periodic
//! orbits as critical points of the length functional with their
//! multipliers, and the rescaled soft-wall dynamics inside the boundary layer.

use crate::error::{ChoreoError, Result};
use crate::integrate::{step_smooth, IntegratorConfig, Method, SeparableSystem};
use crate::model::PhaseState;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TANGENCY: f64 = 1e-8;

/// Convex domain `{Q > 0}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BilliardDomain {
    /// `Q = 1 - sum (x_i / a_i)^2`.
    Ellipse { semi: Vec<f64> },
    /// `Q = 1 - sum |x_i / a_i|^p`, `p >= 2`.
    Superellipse { semi: Vec<f64>, exponent: f64 },
    /// `Q = min_i min(x_i, L_i - x_i)`.
    Box { lengths: Vec<f64> },
}

impl BilliardDomain {
    pub fn ellipse(a: f64, b: f64) -> Self {
        BilliardDomain::Ellipse { semi: vec![a, b] }
    }

    pub fn circle(r: f64) -> Self {
        BilliardDomain::Ellipse { semi: vec![r, r] }
    }

    pub fn dim(&self) -> usize {
        match self {
            BilliardDomain::Ellipse { semi } | BilliardDomain::Superellipse { semi, .. } => semi.len(),
            BilliardDomain::Box { lengths } => lengths.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (v, ok_exp) = match self {
            BilliardDomain::Ellipse { semi } => (semi, true),
            BilliardDomain::Superellipse { semi, exponent } => (semi, *exponent >= 2.0 && exponent.is_finite()),
            BilliardDomain::Box { lengths } => (lengths, true),
        };
        if v.len() < 2 || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || !ok_exp {
            return Err(ChoreoError::InvalidInput(format!("bad billiard domain {self:?}")));
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        match self {
            BilliardDomain::Superellipse { exponent, .. } => *exponent,
            _ => 2.0,
        }
    }

    fn semi(&self) -> &[f64] {
        match self {
            BilliardDomain::Ellipse { semi } | BilliardDomain::Superellipse { semi, .. } => semi,
            BilliardDomain::Box { lengths } => lengths,
        }
    }

    pub fn q(&self, x: &[f64]) -> f64 {
        match self {
            BilliardDomain::Box { lengths } => {
                x.iter().zip(lengths).fold(f64::INFINITY, |m, (xi, l)| m.min(*xi).min(l - xi))
            }
            _ => {
                let p = self.exponent();
                1.0 - x.iter().zip(self.semi()).map(|(xi, a)| (xi / a).abs().powf(p)).sum::<f64>()
            }
        }
    }

    pub fn grad_q(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BilliardDomain::Box { lengths } => {
                let mut best = (f64::INFINITY, 0usize, 1.0);
                for (i, (xi, l)) in x.iter().zip(lengths).enumerate() {
                    if *xi < best.0 {
                        best = (*xi, i, 1.0);
                    }
                    if l - xi < best.0 {
                        best = (l - xi, i, -1.0);
                    }
                }
                let mut g = vec![0.0; x.len()];
                g[best.1] = best.2;
                g
            }
            _ => {
                let p = self.exponent();
                x.iter()
                    .zip(self.semi())
                    .map(|(xi, a)| {
                        let u = xi / a;
                        -p * u.abs().powf(p - 1.0) * u.signum() / a
                    })
                    .collect()
            }
        }
    }

    /// Unit outer normal.
    pub fn normal(&self, x: &[f64]) -> Vec<f64> {
        let g = self.grad_q(x);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.iter().map(|v| -v / n).collect()
    }

    fn radius_bound(&self) -> f64 {
        match self {
            BilliardDomain::Box { lengths } => lengths.iter().map(|l| l * l).sum::<f64>().sqrt(),
            _ => 2.0 * self.semi().iter().fold(0.0f64, |a, b| a.max(*b)),
        }
    }

    /// Polar boundary parametrization of a planar smooth domain and its
    /// derivative in the angle.
    pub fn boundary_point(&self, tau: f64) -> Result<([f64; 2], [f64; 2])> {
        if self.dim() != 2 || matches!(self, BilliardDomain::Box { .. }) {
            return Err(ChoreoError::InvalidInput("boundary parametrization needs a planar smooth domain".into()));
        }
        let p = self.exponent();
        let (a, b) = (self.semi()[0], self.semi()[1]);
        let (s, c) = tau.sin_cos();
        let (u, v) = (c / a, s / b);
        let sum = u.abs().powf(p) + v.abs().powf(p);
        let dsum = p * u.abs().powf(p - 1.0) * u.signum() * (-s / a) + p * v.abs().powf(p - 1.0) * v.signum() * (c / b);
        let r = sum.powf(-1.0 / p);
        let dr = -r / (p * sum) * dsum;
        Ok(([r * c, r * s], [dr * c - r * s, dr * s + r * c]))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn reflect(v: &[f64], n: &[f64]) -> Vec<f64> {
    let c = 2.0 * dot(v, n);
    v.iter().zip(n).map(|(a, b)| a - c * b).collect()
}

/// One collision of the billiard map.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bounce {
    pub point: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Flight time to `point`.
    pub time: f64,
}

/// Next boundary point along the ray from `x` with inward velocity `v`,
/// and the reflected velocity there.
pub fn billiard_map(domain: &BilliardDomain, x: &[f64], v: &[f64]) -> Result<Bounce> {
    let d = domain.dim();
    if x.len() != d || v.len() != d {
        return Err(ChoreoError::InvalidInput("dimension mismatch".into()));
    }
    let speed = norm(v);
    if !(speed > 0.0) {
        return Err(ChoreoError::InvalidInput("zero velocity".into()));
    }
    if let BilliardDomain::Box { lengths } = domain {
        return box_map(lengths, x, v);
    }
    let n0 = domain.normal(x);
    let cos_in = dot(v, &n0) / speed;
    if cos_in > -TANGENCY {
        return Err(ChoreoError::Tangency(format!("direction not strictly inward (cos = {cos_in})")));
    }
    let f = |t: f64| -> f64 {
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        domain.q(&y)
    };
    let df = |t: f64| -> f64 {
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        dot(&domain.grad_q(&y), v)
    };
    // Bracket the first sign change past the start.
    let t_max = 2.0 * domain.radius_bound() / speed;
    let mut lo = 0.0;
    let mut hi = t_max;
    let mut found = false;
    for _ in 0..8 {
        let m = 64;
        let mut prev = lo;
        for i in 1..=m {
            let t = lo + (hi - lo) * i as f64 / m as f64;
            if f(t) < 0.0 {
                if i > 1 || lo > 0.0 {
                    lo = prev;
                    hi = t;
                    found = true;
                } else {
                    hi = t;
                }
                break;
            }
            prev = t;
        }
        if found {
            break;
        }
    }
    if !found {
        return Err(ChoreoError::NonConvergence("no boundary intersection along ray".into()));
    }
    // Newton safeguarded by bisection.
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d1 = df(t);
        let mut tn = if d1 != 0.0 { t - ft / d1 } else { f64::NAN };
        if !(tn > lo && tn < hi) {
            tn = 0.5 * (lo + hi);
        }
        if (tn - t).abs() <= 4.0 * f64::EPSILON * t.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
            t = tn;
            break;
        }
        t = tn;
    }
    let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
    let n = domain.normal(&y);
    let cos_out = dot(v, &n) / speed;
    if cos_out < TANGENCY {
        return Err(ChoreoError::Tangency(format!("grazing impact (cos = {cos_out})")));
    }
    Ok(Bounce { velocity: reflect(v, &n), point: y, time: t })
}

fn box_map(lengths: &[f64], x: &[f64], v: &[f64]) -> Result<Bounce> {
    let speed = norm(v);
    let mut t = f64::INFINITY;
    for (i, l) in lengths.iter().enumerate() {
        let ti = if v[i] > 0.0 {
            (l - x[i]) / v[i]
        } else if v[i] < 0.0 {
            -x[i] / v[i]
        } else {
            f64::INFINITY
        };
        if ti > 1e-14 * l && ti < t {
            t = ti;
        }
    }
    if !t.is_finite() {
        return Err(ChoreoError::NonConvergence("ray never meets a wall".into()));
    }
    let mut y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
    let mut out = v.to_vec();
    let mut hit = false;
    for (i, l) in lengths.iter().enumerate() {
        let tol = 1e-12 * l;
        if (v[i] > 0.0 && (y[i] - l).abs() <= tol) || (v[i] < 0.0 && y[i].abs() <= tol) {
            y[i] = if v[i] > 0.0 { *l } else { 0.0 };
            if v[i].abs() / speed < TANGENCY {
                return Err(ChoreoError::Tangency("grazing wall impact".into()));
            }
            out[i] = -v[i];
            hit = true;
        }
    }
    debug_assert!(hit);
    Ok(Bounce { point: y, velocity: out, time: t })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitClass {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

/// A periodic billiard orbit and its linear stability data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilliardOrbit {
    pub params: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub impact_times: Vec<f64>,
    pub length: f64,
    pub omega0: f64,
    /// Return-map Jacobian in (boundary angle, tangential velocity).
    pub jacobian: DMatrix<f64>,
    /// Multipliers as `(re, im)`.
    pub multipliers: Vec<(f64, f64)>,
    pub trace: f64,
    pub classification: OrbitClass,
    pub degenerate: bool,
    /// Smallest angle between a chord and the boundary tangent, in degrees.
    pub min_impact_angle_deg: f64,
    /// Largest mismatch of the reflection law over the impacts.
    pub reflection_residual: f64,
}

impl BilliardOrbit {
    /// Product of the multiplier pair.
    pub fn multiplier_product(&self) -> f64 {
        let (a, b) = (self.multipliers[0], self.multipliers[1]);
        a.0 * b.0 - a.1 * b.1
    }
}

fn length_and_grad(domain: &BilliardDomain, tau: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = tau.len();
    let pts: Vec<([f64; 2], [f64; 2])> = tau.iter().map(|&t| domain.boundary_point(t)).collect::<Result<_>>()?;
    let mut len = 0.0;
    let mut units = Vec::with_capacity(k);
    for i in 0..k {
        let (a, b) = (pts[i].0, pts[(i + 1) % k].0);
        let d = [b[0] - a[0], b[1] - a[1]];
        let l = norm(&d);
        if l == 0.0 {
            return Err(ChoreoError::NonConvergence("coincident impact points".into()));
        }
        len += l;
        units.push([d[0] / l, d[1] / l]);
    }
    let g = (0..k)
        .map(|i| {
            let before = units[(i + k - 1) % k];
            let after = units[i];
            let tg = pts[i].1;
            tg[0] * (before[0] - after[0]) + tg[1] * (before[1] - after[1])
        })
        .collect();
    Ok((len, g))
}

/// Bounce map on (boundary angle, tangential component of the unit velocity).
fn bounce_coords(domain: &BilliardDomain, tau: f64, sigma: f64) -> Result<(f64, f64)> {
    let (x, dx) = domain.boundary_point(tau)?;
    let tl = norm(&dx);
    let t = [dx[0] / tl, dx[1] / tl];
    let n = domain.normal(&x);
    let c = (1.0 - sigma * sigma).max(0.0).sqrt();
    let v = [sigma * t[0] - c * n[0], sigma * t[1] - c * n[1]];
    let b = billiard_map(domain, &x, &v)?;
    let tau2 = b.point[1].atan2(b.point[0]);
    let (_, dx2) = domain.boundary_point(tau2)?;
    let tl2 = norm(&dx2);
    let sigma2 = (b.velocity[0] * dx2[0] + b.velocity[1] * dx2[1]) / tl2;
    Ok((tau2, sigma2))
}

fn wrap_near(x: f64, reference: f64) -> f64 {
    reference + (x - reference + PI).rem_euclid(2.0 * PI) - PI
}

/// Central differences of one bounce at `x0`, Richardson-refined.
fn bounce_jacobian(domain: &BilliardDomain, x0: [f64; 2], h: f64) -> Result<(DMatrix<f64>, [f64; 2])> {
    let fd = |h: f64| -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(2, 2);
        for c in 0..2 {
            let mut xp = x0;
            let mut xm = x0;
            xp[c] += h;
            xm[c] -= h;
            let p = bounce_coords(domain, xp[0], xp[1])?;
            let m = bounce_coords(domain, xm[0], xm[1])?;
            j[(0, c)] = (wrap_near(p.0, m.0) - m.0) / (2.0 * h);
            j[(1, c)] = (p.1 - m.1) / (2.0 * h);
        }
        Ok(j)
    };
    let j = (fd(0.5 * h)? * 4.0 - fd(h)?) / 3.0;
    let next = bounce_coords(domain, x0[0], x0[1])?;
    Ok((j, [next.0, next.1]))
}

/// Return-map Jacobian as the product of single-bounce Jacobians along the orbit.
fn return_jacobian(domain: &BilliardDomain, k: usize, x0: [f64; 2], h: f64) -> Result<DMatrix<f64>> {
    let mut total = DMatrix::identity(2, 2);
    let mut x = x0;
    for _ in 0..k {
        let (j, next) = bounce_jacobian(domain, x, h)?;
        total = j * total;
        x = next;
    }
    Ok(total)
}

/// Critical point of the `k`-bounce length functional from `start` angles,
/// followed by the stability analysis of the return map.
pub fn find_periodic(domain: &BilliardDomain, k: usize, start: &[f64]) -> Result<BilliardOrbit> {
    domain.validate()?;
    if k < 2 || start.len() != k {
        return Err(ChoreoError::InvalidInput(format!("need k >= 2 start angles, got {}", start.len())));
    }
    let mut tau = start.to_vec();
    let (_, mut g) = length_and_grad(domain, &tau)?;
    let fd = 1e-6;
    let mut converged = norm(&g) < 1e-13;
    for _ in 0..100 {
        if converged {
            break;
        }
        let mut h = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut tp = tau.clone();
            let mut tm = tau.clone();
            tp[c] += fd;
            tm[c] -= fd;
            let gp = length_and_grad(domain, &tp)?.1;
            let gm = length_and_grad(domain, &tm)?.1;
            for r in 0..k {
                h[(r, c)] = (gp[r] - gm[r]) / (2.0 * fd);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let svd = h.svd(true, true);
        let step = svd
            .solve(&DVector::from_column_slice(&g), 1e-10 * svd.singular_values.max())
            .map_err(|e| ChoreoError::NonConvergence(e.into()))?;
        let gn0 = norm(&g);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = tau.iter().zip(step.iter()).map(|(a, b)| a - lambda * b).collect();
            if let Ok((_, gt)) = length_and_grad(domain, &trial) {
                if norm(&gt) < gn0 {
                    tau = trial;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted || norm(&g) < 1e-13 {
            converged = norm(&g) < 1e-9;
            break;
        }
    }
    if !converged {
        return Err(ChoreoError::NonConvergence(format!("length functional gradient {}", norm(&g))));
    }
    orbit_from_params(domain, tau)
}

fn orbit_from_params(domain: &BilliardDomain, tau: Vec<f64>) -> Result<BilliardOrbit> {
    let k = tau.len();
    let pts: Vec<([f64; 2], [f64; 2])> = tau.iter().map(|&t| domain.boundary_point(t)).collect::<Result<_>>()?;
    let mut times = Vec::with_capacity(k);
    let mut length = 0.0;
    let mut min_angle = f64::INFINITY;
    let mut refl = 0.0f64;
    for i in 0..k {
        let a = pts[i].0;
        let b = pts[(i + 1) % k].0;
        let c = pts[(i + 2) % k].0;
        let u_in = [b[0] - a[0], b[1] - a[1]];
        let u_out = [c[0] - b[0], c[1] - b[1]];
        let (li, lo) = (norm(&u_in), norm(&u_out));
        length += li;
        times.push(length);
        let u_in = [u_in[0] / li, u_in[1] / li];
        let u_out = [u_out[0] / lo, u_out[1] / lo];
        let n = domain.normal(&b);
        let r = reflect(&u_in, &n);
        refl = refl.max(((r[0] - u_out[0]).powi(2) + (r[1] - u_out[1]).powi(2)).sqrt());
        let angle = dot(&u_in, &n).abs().min(1.0).asin().to_degrees();
        min_angle = min_angle.min(angle);
    }
    if min_angle < 5.0 {
        return Err(ChoreoError::Tangency(format!("non-regular orbit: impact angle {min_angle:.3} deg")));
    }
    // Phase-space point of the first impact, leaving toward the second.
    let (x0, dx0) = pts[0];
    let tl = norm(&dx0);
    let u = [pts[1 % k].0[0] - x0[0], pts[1 % k].0[1] - x0[1]];
    let ul = norm(&u);
    let sigma0 = (u[0] * dx0[0] + u[1] * dx0[1]) / (ul * tl);
    let base = [tau[0], sigma0];
    let jacobian = return_jacobian(domain, k, base, 1e-4)?;
    let trace = jacobian.trace();
    let det = jacobian.determinant();
    let disc = 0.25 * trace * trace - det;
    let multipliers = if disc >= 0.0 {
        vec![(0.5 * trace + disc.sqrt(), 0.0), (0.5 * trace - disc.sqrt(), 0.0)]
    } else {
        vec![(0.5 * trace, (-disc).sqrt()), (0.5 * trace, -(-disc).sqrt())]
    };
    let band = 1e-6;
    let classification = if trace.abs() < 2.0 - band {
        OrbitClass::Elliptic
    } else if trace.abs() > 2.0 + band {
        OrbitClass::Hyperbolic
    } else {
        OrbitClass::Parabolic
    };
    Ok(BilliardOrbit {
        points: pts.iter().map(|p| p.0).collect(),
        params: tau,
        impact_times: times,
        length,
        omega0: 2.0 * PI / length,
        jacobian,
        multipliers,
        trace,
        degenerate: classification == OrbitClass::Parabolic,
        classification,
        min_impact_angle_deg: min_angle,
        reflection_residual: refl,
    })
}

/// Local wall shape in rescaled coordinates; the last axis is the inward normal.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WallModel {
    Flat,
    /// `Q(x) = x_perp - kappa |x_par|^2 / 2`.
    Curved { curvature: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerConfig {
    pub alpha: f64,
    /// Far-field incoming momentum; last component negative.
    pub p0: Vec<f64>,
    pub wall: WallModel,
    pub delta: f64,
    pub k_layer: f64,
    pub dt: f64,
    pub max_time: f64,
}

/// Rescaled inner-layer Hamiltonian `|p|^2/2 + Qbar^-alpha`.
struct Layer {
    alpha: f64,
    kappa_eff: f64,
    dim: usize,
}

impl Layer {
    fn qbar(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let par: f64 = x[..d - 1].iter().map(|v| v * v).sum();
        x[d - 1] - 0.5 * self.kappa_eff * par
    }
}

impl SeparableSystem for Layer {
    fn dim(&self) -> usize {
        self.dim
    }
    fn potential_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = self.dim;
        let q = self.qbar(x);
        if !(q > 0.0) {
            return Err(ChoreoError::DomainViolation(format!("left the domain, Qbar = {q}")));
        }
        let v = q.powf(-self.alpha);
        let dv = -self.alpha * v / q;
        for i in 0..d - 1 {
            grad[i] = dv * (-self.kappa_eff * x[i]);
        }
        grad[d - 1] = dv;
        Ok(v)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerReport {
    pub entry: Vec<f64>,
    pub entry_momentum: Vec<f64>,
    pub exit: Vec<f64>,
    pub exit_momentum: Vec<f64>,
    pub ideal_reflection: Vec<f64>,
    /// `|p_exit - ideal|`.
    pub deviation: f64,
    /// Smallest `Qbar` reached, at the moment `p_perp` changes sign.
    pub turning_qbar: f64,
    pub time_in_layer: f64,
    pub max_rel_energy_error: f64,
    pub trajectory: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

fn advance(sys: &Layer, cfg: &IntegratorConfig, s: &PhaseState, h: f64, scale: f64) -> Result<PhaseState> {
    let mut t = s.clone();
    step_smooth(sys, &mut t, cfg, h, scale)?;
    Ok(t)
}

/// Bisects the step length at which `g` changes sign from `s`.
fn refine<G: Fn(&PhaseState) -> f64>(
    sys: &Layer,
    cfg: &IntegratorConfig,
    s: &PhaseState,
    h: f64,
    scale: f64,
    g: G,
) -> Result<PhaseState> {
    let g0 = g(s);
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let m = advance(sys, cfg, s, mid, scale)?;
        if (g(&m) > 0.0) == (g0 > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    advance(sys, cfg, s, 0.5 * (lo + hi), scale)
}

/// Integrates the rescaled inner-layer system from the entry surface
/// `Qbar = K` back to it and compares the exit momentum with the ideal
/// reflection of the far-field momentum.
pub fn boundary_layer_run(cfg: &LayerConfig) -> Result<LayerReport> {
    let d = cfg.p0.len();
    if d < 1 || !(cfg.alpha > 0.0) || !(cfg.k_layer > 0.0) || !(cfg.dt > 0.0) || cfg.delta < 0.0 {
        return Err(ChoreoError::InvalidInput("bad boundary-layer configuration".into()));
    }
    let p_perp = cfg.p0[d - 1];
    let speed = norm(&cfg.p0);
    if !(p_perp < -1e-3 * speed) {
        return Err(ChoreoError::InvalidInput("incoming momentum must point into the wall".into()));
    }
    let kappa = match cfg.wall {
        WallModel::Flat => 0.0,
        WallModel::Curved { curvature } => curvature,
    };
    let sys = Layer { alpha: cfg.alpha, kappa_eff: cfg.delta.powf(1.0 / cfg.alpha) * kappa, dim: d };
    let energy = 0.5 * speed * speed;
    let kpot = cfg.k_layer.powf(-cfg.alpha);
    if kpot >= 0.5 * p_perp * p_perp {
        return Err(ChoreoError::InvalidInput("layer too thin for the normal momentum".into()));
    }
    // Entry on the billiard ray through the origin.
    let mut s_entry = cfg.k_layer / p_perp;
    for _ in 0..50 {
        let x: Vec<f64> = cfg.p0.iter().map(|p| p * s_entry).collect();
        let f = sys.qbar(&x) - cfg.k_layer;
        let par: f64 = cfg.p0[..d - 1].iter().map(|p| p * p).sum();
        let df = p_perp - sys.kappa_eff * par * s_entry;
        let ds = f / df;
        s_entry -= ds;
        if ds.abs() < 1e-15 * s_entry.abs() {
            break;
        }
    }
    let entry: Vec<f64> = cfg.p0.iter().map(|p| p * s_entry).collect();
    let mut p_in = cfg.p0.clone();
    p_in[d - 1] = -(p_perp * p_perp - 2.0 * kpot).sqrt();
    let icfg = IntegratorConfig { dv_tol: f64::INFINITY, ..IntegratorConfig::new(Method::SplittingOrder4, cfg.dt) };
    let mut state = PhaseState::new(entry.clone(), p_in.clone());
    let e0 = sys.energy(&state)?;
    let mut max_err = 0.0f64;
    let mut trajectory = vec![(0.0, state.q.clone(), state.p.clone())];
    let mut turning = f64::NAN;
    let mut left = false;
    loop {
        if state.t > cfg.max_time {
            return Err(ChoreoError::MaxTime(format!("still in the layer at t = {}", state.t)));
        }
        let next = advance(&sys, &icfg, &state, cfg.dt, energy)?;
        let err = ((sys.energy(&next)? - e0) / e0).abs();
        max_err = max_err.max(err);
        if turning.is_nan() && next.p[d - 1] > 0.0 {
            let t = refine(&sys, &icfg, &state, cfg.dt, energy, |s| s.p[d - 1])?;
            turning = sys.qbar(&t.q);
        }
        let outward = dot(&next.p, &sys_grad_qbar(&sys, &next.q)) > 0.0;
        if !turning.is_nan() && outward && sys.qbar(&next.q) >= cfg.k_layer {
            let k = cfg.k_layer;
            state = refine(&sys, &icfg, &state, cfg.dt, energy, |s| sys.qbar(&s.q) - k)?;
            trajectory.push((state.t, state.q.clone(), state.p.clone()));
            left = true;
        } else {
            state = next;
            trajectory.push((state.t, state.q.clone(), state.p.clone()));
        }
        if left {
            break;
        }
    }
    let mut ideal = cfg.p0.clone();
    ideal[d - 1] = -ideal[d - 1];
    let dev: Vec<f64> = state.p.iter().zip(&ideal).map(|(a, b)| a - b).collect();
    Ok(LayerReport {
        entry,
        entry_momentum: p_in,
        exit: state.q.clone(),
        exit_momentum: state.p.clone(),
        ideal_reflection: ideal,
        deviation: norm(&dev),
        turning_qbar: turning,
        time_in_layer: state.t,
        max_rel_energy_error: max_err,
        trajectory,
    })
}

fn sys_grad_qbar(sys: &Layer, x: &[f64]) -> Vec<f64> {
    let d = sys.dim;
    let mut g: Vec<f64> = x[..d - 1].iter().map(|v| -sys.kappa_eff * v).collect();
    g.push(1.0);
    g
}

/// Log-log slope of the reflection deviation against the layer depth.
pub fn layer_depth_slope(base: &LayerConfig, depths: &[f64]) -> Result<(f64, Vec<f64>)> {
    let devs: Vec<f64> = depths
        .iter()
        .map(|&k| boundary_layer_run(&LayerConfig { k_layer: k, ..base.clone() }).map(|r| r.deviation))
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = depths.iter().zip(&devs).map(|(k, d)| (k.ln(), d.ln())).collect();
    Ok((crate::average::linear_fit(&pts).0, devs))
}
