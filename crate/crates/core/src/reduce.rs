//! Translation-symmetry reduction of the averaged phase dynamics,
//! minimization of `U` on the phase torus, Hessian spectra and resonance
//! detection.

use crate::average::{collision_test, AveragedSystem, PathSource};
use crate::error::{ChoreoError, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Orthogonal Helmert-type frame with a uniform first row.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReductionFrame {
    pub n: usize,
    pub r: DMatrix<f64>,
}

impl ReductionFrame {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(ChoreoError::InvalidInput("frame needs N >= 1".into()));
        }
        let mut r = DMatrix::zeros(n, n);
        let nf = n as f64;
        for j in 0..n {
            r[(0, j)] = 1.0 / nf.sqrt();
        }
        for k in 1..n {
            let kf = k as f64;
            let s = (kf * (kf + 1.0)).sqrt();
            for j in 0..k {
                r[(k, j)] = 1.0 / s;
            }
            r[(k, k)] = -kf / s;
        }
        Ok(ReductionFrame { n, r })
    }

    /// `(phi, psi) = R theta / sqrt(N)` and `(P, J) = sqrt(N) R I`.
    pub fn to_reduced(&self, theta: &[f64], action: &[f64]) -> (f64, Vec<f64>, f64, Vec<f64>) {
        let s = (self.n as f64).sqrt();
        let a = &self.r * DVector::from_column_slice(theta) / s;
        let b = &self.r * DVector::from_column_slice(action) * s;
        (a[0], a.as_slice()[1..].to_vec(), b[0], b.as_slice()[1..].to_vec())
    }

    pub fn from_reduced(&self, phi: f64, psi: &[f64], p: f64, j: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = (self.n as f64).sqrt();
        let mut x = vec![phi];
        x.extend_from_slice(psi);
        let mut y = vec![p];
        y.extend_from_slice(j);
        let theta = self.r.transpose() * DVector::from_vec(x) * s;
        let action = self.r.transpose() * DVector::from_vec(y) / s;
        (theta.as_slice().to_vec(), action.as_slice().to_vec())
    }

    /// Phases on the gauge `sum theta = 0` for given `psi`.
    pub fn theta_of_psi(&self, psi: &[f64]) -> Vec<f64> {
        self.from_reduced(0.0, psi, 0.0, &vec![0.0; psi.len()]).0
    }

    /// Rows `1..N` of `R`, scaled by `sqrt(N)`: `d theta / d psi` transposed.
    pub fn psi_block(&self) -> DMatrix<f64> {
        let n = self.n;
        self.r.rows(1, n - 1).into_owned() * (n as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MinimumClass {
    NondegenerateMin,
    Degenerate,
    Saddle,
}

/// Outcome of the torus minimization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimumReport {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Hessian of the reduced potential in `(psi, xi)`.
    pub hessian: DMatrix<f64>,
    /// Ascending eigenvalues of `hessian`.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// Ascending eigenvalues of the unreduced phase block.
    pub phase_eigenvalues: Vec<f64>,
    pub classification: MinimumClass,
    /// All eigenvalues simple at relative tolerance `1e-8`.
    pub simple: bool,
    pub simultaneous_impacts: bool,
    pub iterations: usize,
}

impl MinimumReport {
    /// Linear frequencies of the reduced dynamics: `psi` modes carry mass
    /// `N / a`, transverse modes unit mass, and the potential is scaled by
    /// `delta`.
    pub fn mode_frequencies(&self, n: usize, a: f64, delta: f64) -> Vec<f64> {
        let k = self.hessian.nrows();
        let np = n - 1;
        let d = DMatrix::from_fn(k, k, |i, j| {
            if i != j {
                0.0
            } else if i < np {
                (a / n as f64).sqrt()
            } else {
                1.0
            }
        });
        let m = &d * &self.hessian * &d;
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|l| (delta * l.max(0.0)).sqrt()).collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Explicit `(theta, xi)` starts; when empty a jittered lattice is used.
    pub starts: Vec<(Vec<f64>, Vec<f64>)>,
    /// Transverse start for generated lattices.
    pub xi0: Vec<f64>,
    pub max_starts: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_iter: 400, grad_tol: 1e-11, starts: Vec::new(), xi0: Vec::new(), max_starts: 81, seed: 7 }
    }
}

/// Potential on the reduced coordinates `y = (psi, xi)`.
struct Reduced<'a> {
    sys: &'a AveragedSystem,
    frame: ReductionFrame,
}

impl Reduced<'_> {
    fn split<'b>(&self, y: &'b [f64]) -> (Vec<f64>, &'b [f64]) {
        let np = self.sys.n - 1;
        (self.frame.theta_of_psi(&y[..np]), &y[np..])
    }

    fn check(&self, theta: &[f64], xi: &[f64]) -> Result<()> {
        let rho = self.sys.avg.interaction.core_radius;
        if rho > 0.0 {
            let path = self.sys.avg.source.path();
            let w = collision_test(theta, xi, path.as_ref(), rho);
            if w.collides {
                return Err(ChoreoError::Collision(format!("pair {:?} at t = {}", w.pair, w.time)));
            }
        }
        Ok(())
    }

    /// Value, gradient and Hessian in `y`, plus the unreduced phase block.
    fn full(&self, y: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (theta, xi) = self.split(y);
        self.check(&theta, xi)?;
        let (u, g, h) = self.sys.full(&theta, xi)?;
        let n = self.sys.n;
        let k = y.len();
        let np = n - 1;
        // y -> (theta, xi) Jacobian.
        let mut t = DMatrix::zeros(n + (k - np), k);
        let b = self.frame.psi_block();
        for i in 0..n {
            for j in 0..np {
                t[(i, j)] = b[(j, i)];
            }
        }
        for j in 0..k - np {
            t[(n + j, np + j)] = 1.0;
        }
        let gy = t.transpose() * DVector::from_vec(g);
        let hy = t.transpose() * &h * &t;
        let htt = h.view((0, 0), (n, n)).into_owned();
        Ok((u, gy.as_slice().to_vec(), hy, htt))
    }
}

/// Moves every phase difference within `1e-4` of a multiple of `pi` onto it;
/// accepted when `U` does not rise and the gradient stays converged.
fn snap_synchronous(red: &Reduced, frame: &ReductionFrame, y: &[f64], value: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let (theta, xi) = red.split(y);
    let n = theta.len();
    let mut snapped = vec![0.0; n];
    for k in 1..n {
        let d = theta[k] - theta[0];
        let m = (d / PI).round();
        if (d - m * PI).abs() > 1e-4 {
            return Ok(None);
        }
        snapped[k] = m * PI;
    }
    let mean = snapped.iter().sum::<f64>() / n as f64;
    snapped.iter_mut().for_each(|t| *t -= mean);
    let (_, psi, _, _) = frame.to_reduced(&snapped, &vec![0.0; n]);
    let mut ys = psi;
    ys.extend_from_slice(xi);
    let (us, gs, _, _) = match red.full(&ys) {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    if us <= value + 1e-13 * value.abs().max(1.0) && norm_inf(&gs) <= 1e-9 {
        Ok(Some((ys, us)))
    } else {
        Ok(None)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// BFGS with Armijo backtracking; failed evaluations shrink the step.
fn bfgs(red: &Reduced, y0: Vec<f64>, opts: &MinimizeOptions) -> Result<(Vec<f64>, usize)> {
    let k = y0.len();
    let eval = |y: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (u, g, _, _) = red.full(y)?;
        Ok((u, g))
    };
    let mut y = y0;
    let (mut f, mut g) = eval(&y)?;
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut it = 0;
    while it < opts.max_iter && norm_inf(&g) > opts.grad_tol {
        it += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d = -(&hinv * &gv);
        if d.dot(&gv) >= 0.0 {
            hinv = DMatrix::identity(k, k);
            d = -gv.clone();
        }
        let dn = d.amax();
        if dn > 0.5 {
            d *= 0.5 / dn;
        }
        let slope = d.dot(&gv);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = y.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
            if let Ok((ft, gt)) = eval(&trial) {
                if ft <= f + 1e-4 * step * slope || (ft - f).abs() <= 1e-15 * f.abs().max(1.0) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let (yn, fnew, gn) = match accepted {
            Some(x) => x,
            None => break,
        };
        let s = DVector::from_iterator(k, yn.iter().zip(&y).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(k, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(k, k);
            let a = &i - &s * yv.transpose() * rho;
            let b = &i - &yv * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        y = yn;
        f = fnew;
        g = gn;
    }
    // Newton polish while the Hessian is positive definite.
    for _ in 0..8 {
        let (_, g, h, _) = red.full(&y)?;
        if norm_inf(&g) < 1e-13 {
            break;
        }
        let chol = match h.clone().cholesky() {
            Some(c) => c,
            None => break,
        };
        let step = chol.solve(&DVector::from_vec(g.clone()));
        let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
        match red.full(&trial) {
            Ok((_, gt, _, _)) if norm_inf(&gt) < norm_inf(&g) => y = trial,
            _ => break,
        }
        it += 1;
    }
    Ok((y, it))
}

fn wrap(x: f64) -> f64 {
    let t = (x + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}

fn sorted_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(h.nrows(), idx.len(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Starting lattice: equidistant phases in every cyclic order class,
/// jittered on a `{-1, 0, 1}` grid per particle.
fn lattice_starts(n: usize, xi0: &[f64], max: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = 3usize.pow((n - 1) as u32).min(max.max(1));
    let spacing = 2.0 * PI / n as f64;
    (0..count)
        .map(|mut c| {
            let mut th = vec![0.0; n];
            for (i, t) in th.iter_mut().enumerate().skip(1) {
                let digit = (c % 3) as f64 - 1.0;
                c /= 3;
                *t = spacing * i as f64 + 0.35 * spacing * digit + rng.random_range(-0.02..0.02);
            }
            (th, xi0.to_vec())
        })
        .collect()
}

/// Multi-start minimization of `U` on the torus with gauge `sum theta = 0`.
pub fn minimize_averaged(sys: &AveragedSystem, opts: &MinimizeOptions) -> Result<MinimumReport> {
    use rayon::prelude::*;
    let n = sys.n;
    if n < 2 {
        return Err(ChoreoError::InvalidInput("minimization needs N >= 2".into()));
    }
    let frame = ReductionFrame::new(n)?;
    let red = Reduced { sys, frame: frame.clone() };
    let xi0 = if opts.xi0.is_empty() { vec![0.0; n * sys.m()] } else { opts.xi0.clone() };
    let starts = if opts.starts.is_empty() { lattice_starts(n, &xi0, opts.max_starts, opts.seed) } else { opts.starts.clone() };
    let runs: Vec<Result<(Vec<f64>, usize, f64)>> = starts
        .par_iter()
        .map(|(th, xi)| {
            let (_, psi, _, _) = frame.to_reduced(th, &vec![0.0; n]);
            let mut y = psi;
            y.extend_from_slice(xi);
            let (y, it) = bfgs(&red, y, opts)?;
            let (u, _, _, _) = red.full(&y)?;
            Ok((y, it, u))
        })
        .collect();
    let mut best: Option<(Vec<f64>, usize, f64)> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(x) => {
                if best.as_ref().map(|b| x.2 < b.2 - 1e-12).unwrap_or(true) {
                    best = Some(x);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (mut y, iterations, mut value) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| ChoreoError::NonConvergence("no start converged".into()))),
    };
    // Synchronous phase differences are exact critical points of an even
    // average, but flat minima there leave the descent slightly off.
    if let Some((ys, us)) = snap_synchronous(&red, &frame, &y, value)? {
        y = ys;
        value = us;
    }
    let (_, g, h, htt) = red.full(&y)?;
    let grad_norm = norm_inf(&g);
    if grad_norm > 1e-6 {
        return Err(ChoreoError::NonConvergence(format!("gradient {grad_norm} after {iterations} iterations")));
    }
    let (theta, xi) = red.split(&y);
    let xi = xi.to_vec();
    let (eigenvalues, eigenvectors) = sorted_eigen(&h);
    let (phase_eigenvalues, _) = sorted_eigen(&htt);
    let scale = eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let tol = 1e-8 * scale;
    let classification = if eigenvalues.iter().any(|&l| l < -tol) {
        MinimumClass::Saddle
    } else if eigenvalues.iter().any(|&l| l.abs() <= tol) {
        MinimumClass::Degenerate
    } else {
        MinimumClass::NondegenerateMin
    };
    let simple = eigenvalues.windows(2).all(|w| (w[1] - w[0]).abs() > 1e-8 * scale);
    let simultaneous_impacts = matches!(sys.avg.source, PathSource::SawTooth(_) | PathSource::Generic(_))
        && (0..n).all(|a| {
            (0..n).all(|b| {
                let v = (theta[a] - theta[b]).rem_euclid(PI);
                v < 1e-9 || PI - v < 1e-9
            })
        });
    Ok(MinimumReport {
        theta: theta.iter().map(|&t| wrap(t)).collect(),
        xi,
        value,
        grad_norm,
        hessian: h,
        eigenvalues,
        eigenvectors,
        phase_eigenvalues,
        classification,
        simple,
        simultaneous_impacts,
        iterations,
    })
}

/// Reduced potential `U(theta(psi), xi)` on the gauge `phi = 0`.
pub fn reduced_value(sys: &AveragedSystem, psi: &[f64], xi: &[f64], phi: f64) -> Result<f64> {
    let frame = ReductionFrame::new(sys.n)?;
    let (theta, _) = frame.from_reduced(phi, psi, 0.0, &vec![0.0; psi.len()]);
    sys.value(&theta, xi)
}

/// Circulant matrix with off-diagonal entries `u_{(j - i) mod N}` and
/// diagonal `-sum_k u_k`. Requires `u[k] = u[N - k]`; `u[0]` is ignored.
pub fn circulant_matrix(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let s: f64 = u[1..].iter().sum();
    DMatrix::from_fn(n, n, |i, j| if i == j { -s } else { u[(j + n - i) % n] })
}

/// Eigenvalues `lambda_j`, `j = 0..N`, of [`circulant_matrix`] in closed form.
pub fn circulant_eigenvalues(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|j| {
            let mut l = 0.0;
            let mut k = 1;
            while 2 * k < n {
                // Reducing jk mod N makes the j and N - j sums bitwise equal.
                let r = (j * k) % n;
                let r = r.min(n - r);
                l += 2.0 * u[k] * ((2.0 * PI * r as f64 / n as f64).cos() - 1.0);
                k += 1;
            }
            if n % 2 == 0 {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                l += (sign - 1.0) * u[n / 2];
            }
            l
        })
        .collect()
}

/// Which Hessian construction to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMode {
    Dense,
    Circulant,
}

/// Eigenvalues of the pair-sum Hessian (each unordered pair once) at
/// phases `theta`; circulant mode needs equidistant phases.
pub fn hessian_spectrum(sys: &AveragedSystem, theta: &[f64], xi: &[f64], mode: SpectrumMode) -> Result<Vec<f64>> {
    let n = sys.n;
    match mode {
        SpectrumMode::Circulant => {
            let step = 2.0 * PI / n as f64;
            let equi = (0..n).all(|i| {
                let d = (theta[i] - theta[0] - step * i as f64).rem_euclid(2.0 * PI);
                d < 1e-9 || 2.0 * PI - d < 1e-9
            });
            if !equi {
                return Err(ChoreoError::InvalidInput("circulant mode needs equidistant phases".into()));
            }
            let m = sys.m();
            let z = vec![0.0; m];
            let mut u = vec![0.0; n];
            for (k, uk) in u.iter_mut().enumerate().skip(1) {
                *uk = -sys.avg.deriv(step * k as f64, &z, 2, crate::average::Side::Right)?;
            }
            Ok(circulant_eigenvalues(&u))
        }
        SpectrumMode::Dense => {
            let (_, _, h) = sys.full(theta, xi)?;
            let htt = h.view((0, 0), (n, n)).into_owned() * 0.5;
            Ok(sorted_eigen(&htt).0)
        }
    }
}

/// Integer relations `m . omega ~ 0`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResonanceReport {
    pub omega: Vec<f64>,
    pub relations: Vec<(Vec<i64>, f64)>,
    pub tol: f64,
}

/// Exhaustive scan over `m` with `1 <= sum_{j >= 1} |m_j| <= max_order`;
/// `m_0` ranges over the integers that can close the sum.
pub fn resonance_scan(omega: &[f64], max_order: usize, tol: f64) -> ResonanceReport {
    let d = omega.len();
    let mut relations: Vec<(Vec<i64>, f64)> = Vec::new();
    if d == 0 {
        return ResonanceReport { omega: vec![], relations, tol };
    }
    let mut tail = vec![0i64; d - 1];
    fn rec(
        pos: usize,
        budget: i64,
        tail: &mut Vec<i64>,
        omega: &[f64],
        tol: f64,
        out: &mut Vec<(Vec<i64>, f64)>,
    ) {
        if pos == tail.len() {
            let used: i64 = tail.iter().map(|m| m.abs()).sum();
            if used == 0 {
                return;
            }
            let partial: f64 = tail.iter().zip(&omega[1..]).map(|(m, w)| *m as f64 * w).sum();
            let w0 = omega[0];
            let candidates: Vec<i64> = if w0.abs() < 1e-300 {
                vec![0]
            } else {
                let c = (-partial / w0).round() as i64;
                vec![c - 1, c, c + 1]
            };
            for m0 in candidates {
                let r = m0 as f64 * omega[0] + partial;
                if r.abs() < tol {
                    let mut m = vec![m0];
                    m.extend_from_slice(tail);
                    if let Some(first) = m.iter().find(|x| **x != 0) {
                        if *first < 0 {
                            m.iter_mut().for_each(|x| *x = -*x);
                        }
                    }
                    if !out.iter().any(|(e, _)| *e == m) {
                        out.push((m, r.abs()));
                    }
                }
            }
            return;
        }
        for v in -budget..=budget {
            tail[pos] = v;
            rec(pos + 1, budget - v.abs(), tail, omega, tol, out);
        }
        tail[pos] = 0;
    }
    rec(0, max_order as i64, &mut tail, omega, tol, &mut relations);
    ResonanceReport { omega: omega.to_vec(), relations, tol }
}

/// Random symmetric circulant data `u_k = u_{N-k}` for spectrum tests.
pub fn random_circulant_data<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for k in 1..=n / 2 {
        let v = rng.random_range(-2.0..0.0);
        u[k] = v;
        u[n - k] = v;
    }
    u
}
