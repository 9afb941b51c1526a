//! Twist matrices of the single-particle normal form and the determinant
//! identities of the multi-particle time-one Hamiltonian.

use crate::error::{ChoreoError, Result};
use crate::reduce::ReductionFrame;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Quadratic normal-form data at a periodic orbit: `A = [[a, b], [b^T, A_hat]]`
/// and the frequency vector `omega = (omega_0, omega_hat)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TwistData {
    pub a: f64,
    pub b: Vec<f64>,
    pub a_hat: DMatrix<f64>,
    pub omega: Vec<f64>,
}

impl TwistData {
    pub fn new(a: f64, b: Vec<f64>, a_hat: DMatrix<f64>, omega: Vec<f64>) -> Result<Self> {
        let m = b.len();
        if a_hat.nrows() != m || a_hat.ncols() != m || omega.len() != m + 1 {
            return Err(ChoreoError::InvalidInput(format!(
                "twist data: b has {m} entries, A_hat is {}x{}, omega has {}",
                a_hat.nrows(),
                a_hat.ncols(),
                omega.len()
            )));
        }
        if omega[0] == 0.0 {
            return Err(ChoreoError::InvalidInput("omega_0 must be nonzero".into()));
        }
        let asym = (&a_hat - a_hat.transpose()).amax();
        if asym > 1e-12 * a_hat.amax().max(1.0) {
            return Err(ChoreoError::InvalidInput(format!("A_hat not symmetric ({asym})")));
        }
        Ok(TwistData { a, b, a_hat, omega })
    }

    /// Number of transverse degrees of freedom, `d - 1`.
    pub fn transverse(&self) -> usize {
        self.b.len()
    }

    pub fn omega0(&self) -> f64 {
        self.omega[0]
    }

    pub fn omega_hat(&self) -> &[f64] {
        &self.omega[1..]
    }

    /// The full `d x d` matrix `A`.
    pub fn matrix_a(&self) -> DMatrix<f64> {
        let m = self.transverse();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a[(0, 0)] = self.a;
        for j in 0..m {
            a[(0, j + 1)] = self.b[j];
            a[(j + 1, 0)] = self.b[j];
        }
        a.view_mut((1, 1), (m, m)).copy_from(&self.a_hat);
        a
    }

    /// The bordered matrix `[[0, omega], [omega^T, A]]`.
    pub fn matrix_a_omega(&self) -> DMatrix<f64> {
        let d = self.transverse() + 1;
        let mut m = DMatrix::zeros(d + 1, d + 1);
        for j in 0..d {
            m[(0, j + 1)] = self.omega[j];
            m[(j + 1, 0)] = self.omega[j];
        }
        m.view_mut((1, 1), (d, d)).copy_from(&self.matrix_a());
        m
    }

    /// `S = (omega_hat^T b + b^T omega_hat - (a/omega_0) omega_hat^T omega_hat) / (omega_0 N)`.
    pub fn s_matrix(&self, n: usize) -> DMatrix<f64> {
        let m = self.transverse();
        let w0 = self.omega0();
        let w = self.omega_hat();
        let c = 1.0 / (w0 * n as f64);
        DMatrix::from_fn(m, m, |j, l| c * (w[j] * self.b[l] + w[l] * self.b[j] - self.a / w0 * (w[l] * w[j])))
    }

    /// Replaces `b` with `(a / omega_0) omega_hat`.
    pub fn with_billiard_relation(mut self) -> Self {
        let f = self.a / self.omega0();
        self.b = self.omega_hat().iter().map(|w| f * w).collect();
        self
    }

    /// Random draw: entries uniform in `[-2, 2]`, `a` in `[0.1, 2]`,
    /// resampled while `|det A| < 1e-6`.
    pub fn random<R: Rng>(d: usize, rng: &mut R) -> Self {
        assert!(d >= 2, "need d >= 2");
        let m = d - 1;
        loop {
            let a = rng.random_range(0.1..2.0);
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut a_hat = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = rng.random_range(-2.0..2.0);
                    a_hat[(i, j)] = v;
                    a_hat[(j, i)] = v;
                }
            }
            let mut omega: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            if omega[0].abs() < 0.1 {
                omega[0] = 0.1f64.copysign(omega[0]);
            }
            let td = TwistData { a, b, a_hat, omega };
            if td.matrix_a().determinant().abs() >= 1e-6 {
                return td;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TwistReport {
    pub det_a: f64,
    pub det_a_omega: f64,
    pub twist: bool,
    pub isoenergetic: bool,
}

/// Both twist determinants, each declared nonzero above `1e-12` times the
/// largest entry of its matrix raised to the dimension.
pub fn twist_check(td: &TwistData) -> TwistReport {
    let a = td.matrix_a();
    let aw = td.matrix_a_omega();
    let det_a = a.clone().lu().determinant();
    let det_a_omega = aw.clone().lu().determinant();
    let scale = |m: &DMatrix<f64>| m.amax().max(f64::MIN_POSITIVE).powi(m.nrows() as i32);
    TwistReport {
        det_a,
        det_a_omega,
        twist: det_a.abs() > 1e-12 * scale(&a),
        isoenergetic: det_a_omega.abs() > 1e-12 * scale(&aw),
    }
}

/// Quadratic data of the time-one Hamiltonian in the actions `(J, I_hat)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TimeOneData {
    pub n: usize,
    pub s: DMatrix<f64>,
    /// Action Hessian, ordered `J_1..J_{N-1}` then `I_hat^(1)..I_hat^(N)`.
    pub m: DMatrix<f64>,
}

/// Assembles `M` block by block from the columns of `R` without its first
/// row. For `N = 1` only the single `A_hat - S` block remains.
pub fn build_m(td: &TwistData, frame: &ReductionFrame) -> Result<TimeOneData> {
    let n = frame.n;
    let k = td.transverse();
    let s = td.s_matrix(n);
    let np = n - 1;
    let size = np + n * k;
    let mut m = DMatrix::zeros(size, size);
    let sq = (n as f64).sqrt();
    for i in 0..np {
        m[(i, i)] = td.a / n as f64;
    }
    for col in 0..n {
        let off = np + col * k;
        for i in 0..np {
            let r = frame.r[(i + 1, col)] / sq;
            for l in 0..k {
                m[(i, off + l)] = r * td.b[l];
                m[(off + l, i)] = r * td.b[l];
            }
        }
        for row in 0..n {
            let roff = np + row * k;
            for j in 0..k {
                for l in 0..k {
                    let diag = if row == col { td.a_hat[(j, l)] } else { 0.0 };
                    m[(roff + j, off + l)] = diag - s[(j, l)];
                }
            }
        }
    }
    Ok(TimeOneData { n, s, m })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DetMCheck {
    pub n: usize,
    pub d: usize,
    pub det_m: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Set when `N = 1`, where no identity is asserted.
    pub skipped: bool,
}

/// Compares `det M` with `-(1/omega_0^2) (det A / N)^(N-1) det A_omega`.
pub fn det_m_identity_check(td: &TwistData, frame: &ReductionFrame) -> Result<DetMCheck> {
    let n = frame.n;
    let data = build_m(td, frame)?;
    let det_m = data.m.clone().lu().determinant();
    let tw = twist_check(td);
    let w0 = td.omega0();
    let rhs = -(tw.det_a / n as f64).powi(n as i32 - 1) * tw.det_a_omega / (w0 * w0);
    let denom = det_m.abs().max(rhs.abs());
    let residual = if denom == 0.0 { 0.0 } else { (det_m - rhs).abs() / denom };
    Ok(DetMCheck { n, d: td.transverse() + 1, det_m, rhs, residual, skipped: n < 2 })
}

/// Relative gap in `det A_omega = -(omega_0^2 / a) det A` under `b = (a/omega_0) omega_hat`.
pub fn billiard_relation_residual(td: &TwistData) -> f64 {
    let t = td.clone().with_billiard_relation();
    let tw = twist_check(&t);
    let w0 = t.omega0();
    let rhs = -(w0 * w0 / t.a) * tw.det_a;
    let denom = tw.det_a_omega.abs().max(rhs.abs());
    if denom == 0.0 {
        0.0
    } else {
        (tw.det_a_omega - rhs).abs() / denom
    }
}

/// Rotation offsets `nu_j = 2 pi frac(K omega_j / omega_0)` with
/// `K = floor(omega_0 / (2 pi sqrt(delta)))`.
pub fn nu_vector(td: &TwistData, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(ChoreoError::InvalidInput("delta must be positive".into()));
    }
    let w0 = td.omega0();
    let k = (w0 / (2.0 * PI * delta.sqrt())).floor();
    Ok(td
        .omega_hat()
        .iter()
        .map(|w| {
            let x = k * w / w0;
            let v = 2.0 * PI * (x - x.floor());
            if v >= 2.0 * PI {
                0.0
            } else {
                v
            }
        })
        .collect())
}

/// Time-one Hamiltonian on `(J, psi, I_hat)` with a supplied reduced potential.
pub struct TimeOneHamiltonian<'a> {
    pub td: TwistData,
    pub frame: ReductionFrame,
    pub nu: Vec<f64>,
    pub h: f64,
    pub s: DMatrix<f64>,
    pub potential: Box<dyn Fn(&[f64]) -> f64 + 'a>,
}

pub fn assemble_timeone<'a>(
    td: &TwistData,
    frame: &ReductionFrame,
    nu: Vec<f64>,
    h: f64,
    potential: impl Fn(&[f64]) -> f64 + 'a,
) -> Result<TimeOneHamiltonian<'a>> {
    if nu.len() != td.transverse() {
        return Err(ChoreoError::InvalidInput("nu has wrong length".into()));
    }
    Ok(TimeOneHamiltonian {
        td: td.clone(),
        frame: frame.clone(),
        nu,
        h,
        s: td.s_matrix(frame.n),
        potential: Box::new(potential),
    })
}

impl TimeOneHamiltonian<'_> {
    /// `i_hat` is particle-major: `N` blocks of `d - 1` actions.
    pub fn eval(&self, j: &[f64], psi: &[f64], i_hat: &[f64]) -> f64 {
        let n = self.frame.n;
        let k = self.td.transverse();
        let nf = n as f64;
        let a = self.td.a;
        let w0 = self.td.omega0();
        let jv = DVector::from_column_slice(j);
        let mut val = a / (2.0 * nf) * jv.dot(&jv) + (self.potential)(psi);
        let block = |p: usize| DVector::from_column_slice(&i_hat[p * k..(p + 1) * k]);
        let b = DVector::from_column_slice(&self.td.b);
        let w = DVector::from_column_slice(self.td.omega_hat());
        let lin = DVector::from_column_slice(&self.nu) + (&b - &w * (a / w0)) * (self.h / (w0 * nf));
        let mut total = DVector::zeros(k);
        for p in 0..n {
            let ip = block(p);
            let rn_j: f64 = (0..n - 1).map(|r| self.frame.r[(r + 1, p)] * j[r]).sum();
            val += b.dot(&ip) * rn_j / nf.sqrt();
            val += lin.dot(&ip);
            val += 0.5 * ip.dot(&(&self.td.a_hat * &ip));
            total += ip;
        }
        val - 0.5 * total.dot(&(&self.s * &total))
    }

    /// Central-difference Hessian in `(J, I_hat)` at fixed `psi`.
    pub fn action_hessian_fd(&self, j: &[f64], psi: &[f64], i_hat: &[f64], step: f64) -> DMatrix<f64> {
        let np = j.len();
        let size = np + i_hat.len();
        let mut x: Vec<f64> = j.iter().chain(i_hat).copied().collect();
        let f = |x: &[f64]| self.eval(&x[..np], psi, &x[np..]);
        let mut hm = DMatrix::zeros(size, size);
        for a in 0..size {
            for b in a..size {
                let mut acc = 0.0;
                for (sa, sb, c) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    x[a] += sa * step;
                    x[b] += sb * step;
                    acc += c * f(&x);
                    x[a] -= sa * step;
                    x[b] -= sb * step;
                }
                let v = acc / (4.0 * step * step);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        hm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_spot_value() {
        let td = TwistData::new(1.0, vec![3.0], DMatrix::from_element(1, 1, 1.0), vec![1.0, 2.0]).unwrap();
        assert!((td.s_matrix(2)[(0, 0)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn single_particle_block() {
        let td = TwistData::new(1.0, vec![0.5], DMatrix::from_element(1, 1, 2.0), vec![1.0, 0.3]).unwrap();
        let frame = ReductionFrame::new(1).unwrap();
        let data = build_m(&td, &frame).unwrap();
        assert_eq!(data.m.nrows(), 1);
        assert!((data.m[(0, 0)] - (2.0 - data.s[(0, 0)])).abs() < 1e-15);
        assert!(det_m_identity_check(&td, &frame).unwrap().skipped);
    }
}
