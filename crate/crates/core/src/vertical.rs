//! One particle bouncing between the walls of the vertical axis under
//! `H = p^2/2 + delta * Q(q)^{-alpha}`: period-energy law, action,
//! anharmonicity and the periodic orbit `q*(theta)` parameterized by angle.
//!
//! The orbit is normalized so that `theta = 0` is the lower turning point,
//! the particle ascends on `(0, pi)` and descends on `(pi, 2 pi)`.

use crate::error::{ChoreoError, Result};
use crate::jet::{Jet, ORDER};
use crate::model::{Axis, AxisProfile, ConfinementPotential};
use crate::quad::{adaptive, AdaptiveOpts, GaussLegendre};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Parameters of the one-dimensional vertical motion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerticalProblem {
    pub delta: f64,
    pub alpha: f64,
    pub axis: Axis,
}

fn quad_opts() -> AdaptiveOpts {
    AdaptiveOpts { nodes: 20, abs_tol: 1e-16, rel_tol: 1e-15, max_depth: 30 }
}

impl VerticalProblem {
    pub fn new(delta: f64, alpha: f64, axis: Axis) -> Result<Self> {
        if !(delta >= 0.0) || !(alpha > 0.0) {
            return Err(ChoreoError::InvalidInput("need delta >= 0 and alpha > 0".into()));
        }
        if axis.profile == AxisProfile::Free || !(axis.length > 0.0) || !axis.length.is_finite() {
            return Err(ChoreoError::InvalidInput("vertical axis must be walled with finite length".into()));
        }
        Ok(VerticalProblem { delta, alpha, axis })
    }

    /// Sine-profile walls on `[0, pi]`.
    pub fn standard(delta: f64, alpha: f64) -> Result<Self> {
        Self::new(delta, alpha, Axis::sine(PI))
    }

    pub fn from_confinement(delta: f64, conf: &ConfinementPotential) -> Result<Self> {
        Self::new(delta, conf.alpha, *conf.vertical())
    }

    pub fn length(&self) -> f64 {
        self.axis.length
    }

    pub fn potential(&self, q: f64) -> f64 {
        if self.delta == 0.0 {
            return 0.0;
        }
        self.delta * self.axis.q(q).powf(-self.alpha)
    }

    /// `d/dq` of the potential, as a jet in the argument.
    pub fn force_jet(&self, q: Jet) -> Jet {
        let a = self.alpha;
        let qq = self.axis.q_jet(q);
        let dq = match self.axis.profile {
            AxisProfile::Sine => q.scale(PI / self.axis.length).cos(),
            AxisProfile::Parabolic => (Jet::constant(self.axis.length) - q.scale(2.0)).scale(1.0 / self.axis.length),
            AxisProfile::Free => Jet::constant(0.0),
        };
        (qq.powf(-a - 1.0) * dq).scale(-a * self.delta)
    }

    fn max_q(&self) -> f64 {
        self.axis.q(self.axis.center())
    }

    /// Lowest attainable energy.
    pub fn min_energy(&self) -> f64 {
        self.delta * self.max_q().powf(-self.alpha)
    }

    /// Lower and upper turning points at energy `e`.
    pub fn turning_points(&self, e: f64) -> Result<(f64, f64)> {
        if !(e > 0.0) || e <= self.min_energy() {
            return Err(ChoreoError::NoMotion(format!(
                "energy {e} does not exceed the potential minimum {}",
                self.min_energy()
            )));
        }
        let l = self.axis.length;
        if self.delta == 0.0 {
            return Ok((0.0, l));
        }
        let c = (self.delta / e).powf(1.0 / self.alpha);
        let lo = match self.axis.profile {
            AxisProfile::Sine => l / PI * (PI * c / l).asin(),
            AxisProfile::Parabolic => 2.0 * l * c / (l + (l * l - 4.0 * l * c).sqrt()),
            AxisProfile::Free => unreachable!(),
        };
        Ok((lo, l - lo))
    }

    /// Kinetic energy at `qt + h`, where `qt` is a turning point of energy
    /// `e`; written in terms of the offset to avoid cancellation.
    fn kinetic(&self, e: f64, qt: f64, h: f64) -> f64 {
        if self.delta == 0.0 {
            return e;
        }
        let diff = self.axis.q_offset(qt, h);
        let big_q = self.axis.q(qt) + diff;
        e * -(self.alpha * (-diff / big_q).ln_1p()).exp_m1()
    }

    fn branch(&self, e: f64, turn: f64, dir: f64, q_end: f64) -> Branch {
        let u_end = (dir * (q_end - turn)).max(0.0).sqrt();
        let slope0 = if self.delta == 0.0 {
            2.0 / (2.0 * e).sqrt()
        } else {
            let (qv, q1, _) = self.axis.q_derivs(turn);
            2.0 / (2.0 * e * self.alpha * q1.abs() / qv).sqrt()
        };
        let prob = *self;
        let rate = move |v: f64| -> f64 {
            if v == 0.0 {
                return slope0;
            }
            2.0 * v / (2.0 * prob.kinetic(e, turn, dir * v * v)).sqrt()
        };
        let mut knots: Vec<f64> = (1..=128).map(|k| u_end * k as f64 / 128.0).collect();
        for j in 8..=28 {
            knots.push(u_end * 0.5f64.powi(j));
        }
        knots.push(0.0);
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let mut cum = vec![0.0; knots.len()];
        for i in 1..knots.len() {
            let (v, _) = adaptive(knots[i - 1], knots[i], quad_opts(), rate);
            cum[i] = cum[i - 1] + v;
        }
        let rates = knots.iter().map(|&u| rate(u)).collect();
        Branch { turn, dir, energy: e, knots, cum, rates }
    }

    /// Period `T(E)`.
    pub fn period(&self, e: f64) -> Result<f64> {
        if self.delta == 0.0 {
            self.turning_points(e)?;
            return Ok(2.0 * self.axis.length / (2.0 * e).sqrt());
        }
        let (lo, hi) = self.turning_points(e)?;
        let mid = 0.5 * (lo + hi);
        Ok(2.0 * (self.half_time(e, lo, 1.0, mid) + self.half_time(e, hi, -1.0, mid)))
    }

    fn half_time(&self, e: f64, turn: f64, dir: f64, q_end: f64) -> f64 {
        self.branch(e, turn, dir, q_end).total()
    }

    pub fn omega(&self, e: f64) -> Result<f64> {
        Ok(2.0 * PI / self.period(e)?)
    }

    /// Action `I(E) = (1/2 pi) \oint p dq`.
    pub fn action(&self, e: f64) -> Result<f64> {
        let (lo, hi) = self.turning_points(e)?;
        let mid = 0.5 * (lo + hi);
        let mut total = 0.0;
        for (turn, dir) in [(lo, 1.0), (hi, -1.0)] {
            let u_end = (dir * (mid - turn)).sqrt();
            let f = |v: f64| 2.0 * v * (2.0 * self.kinetic(e, turn, dir * v * v)).sqrt();
            let (v, _) = adaptive(0.0, u_end, quad_opts(), f);
            total += v;
        }
        Ok(2.0 * total / (2.0 * PI))
    }

    /// `a = omega dω/dE` (derivative of frequency with respect to action),
    /// five-point stencil with step `1e-4 E`.
    pub fn anharmonicity(&self, e: f64) -> Result<f64> {
        let h = 1e-4 * e;
        let w = |x: f64| self.omega(x);
        let d = (-w(e + 2.0 * h)? + 8.0 * w(e + h)? - 8.0 * w(e - h)? + w(e - 2.0 * h)?) / (12.0 * h);
        Ok(self.omega(e)? * d)
    }

    /// Periodic orbit at energy `e`.
    pub fn orbit(&self, e: f64) -> Result<VerticalOrbit> {
        let (lo, hi) = self.turning_points(e)?;
        let mid = 0.5 * (lo + hi);
        let low = self.branch(e, lo, 1.0, mid);
        let high = self.branch(e, hi, -1.0, mid);
        let half = low.total() + high.total();
        let period = 2.0 * half;
        let omega0 = 2.0 * PI / period;
        let anharmonicity = if self.delta > 0.0 { self.anharmonicity(e)? } else { omega0 / (2.0 * e) };
        Ok(VerticalOrbit { problem: *self, energy: e, q_min: lo, q_max: hi, period, omega0, anharmonicity, low, high })
    }

    /// Orbit at the normalized energy `1/2`.
    pub fn solve_vertical_orbit(&self) -> Result<VerticalOrbit> {
        self.orbit(0.5)
    }
}

/// Time-of-flight table from one turning point, in `u = sqrt(|q - q_turn|)`.
#[derive(Clone, Debug)]
struct Branch {
    turn: f64,
    dir: f64,
    energy: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
    rates: Vec<f64>,
}

impl Branch {
    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn rate(&self, prob: &VerticalProblem, v: f64) -> f64 {
        if v == 0.0 {
            return self.rates[0];
        }
        2.0 * v / (2.0 * prob.kinetic(self.energy, self.turn, self.dir * v * v)).sqrt()
    }

    /// `F(u)` from the knot below `u`.
    fn time_at(&self, prob: &VerticalProblem, u: f64, k: usize) -> f64 {
        let gl = GaussLegendre::cached(20);
        self.cum[k] + gl.integrate(self.knots[k], u, |v| self.rate(prob, v))
    }

    /// Solves `F(u) = tau`.
    fn invert(&self, prob: &VerticalProblem, tau: f64) -> f64 {
        let n = self.knots.len();
        if tau <= 0.0 {
            return 0.0;
        }
        if tau >= self.cum[n - 1] {
            return self.knots[n - 1];
        }
        let k = (self.cum.partition_point(|&c| c <= tau) - 1).min(n - 2);
        // Cubic Hermite guess for the inverse map on the bracketing interval.
        let (t0, t1) = (self.cum[k], self.cum[k + 1]);
        let (u0, u1) = (self.knots[k], self.knots[k + 1]);
        let h = t1 - t0;
        let s = (tau - t0) / h;
        let (m0, m1) = (h / self.rates[k], h / self.rates[k + 1]);
        let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
        let h10 = s.powi(3) - 2.0 * s * s + s;
        let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
        let h11 = s.powi(3) - s * s;
        let mut u = (h00 * u0 + h10 * m0 + h01 * u1 + h11 * m1).clamp(u0, u1);
        for _ in 0..8 {
            let f = self.time_at(prob, u, k) - tau;
            let du = f / self.rate(prob, u);
            u = (u - du).clamp(u0, u1);
            if du.abs() <= 1e-16 * (1.0 + u) {
                break;
            }
        }
        u
    }
}

/// The periodic vertical orbit with its frequency data.
#[derive(Clone, Debug)]
pub struct VerticalOrbit {
    pub problem: VerticalProblem,
    pub energy: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub period: f64,
    pub omega0: f64,
    /// `omega dω/dE` at the orbit energy.
    pub anharmonicity: f64,
    low: Branch,
    high: Branch,
}

impl VerticalOrbit {
    /// Position and momentum at angle `theta`.
    pub fn state(&self, theta: f64) -> (f64, f64) {
        let (th, sign) = reduce_angle(theta);
        let tau = th / self.omega0;
        let (turn, h) = if tau <= self.low.total() {
            let u = self.low.invert(&self.problem, tau);
            (self.q_min, u * u)
        } else {
            let u = self.high.invert(&self.problem, 0.5 * self.period - tau);
            (self.q_max, -u * u)
        };
        let q = turn + h;
        let p = (2.0 * self.problem.kinetic(self.energy, turn, h)).max(0.0).sqrt();
        (q, sign * p)
    }

    pub fn q(&self, theta: f64) -> f64 {
        self.state(theta).0
    }

    /// Taylor jet of `q*` in the angle around `theta`.
    pub fn jet(&self, theta: f64) -> Jet {
        let (q, p) = self.state(theta);
        let w = self.omega0;
        let mut c = [0.0; ORDER + 1];
        c[0] = q;
        c[1] = p / w;
        if self.problem.delta > 0.0 {
            let k = 1.0 / (w * w);
            for j in 2..=ORDER {
                let f = self.problem.force_jet(Jet::from_coeffs(c));
                c[j] = -k * f.c[j - 2] / (j * (j - 1)) as f64;
            }
        }
        Jet::from_coeffs(c)
    }

    /// Angle of a point `(q, p)` on this orbit's energy level.
    pub fn phase_of(&self, q: f64, p: f64) -> f64 {
        let mid = 0.5 * (self.q_min + self.q_max);
        let t = if q <= mid {
            let u = (q - self.q_min).max(0.0).sqrt();
            let k = self.low.knots.partition_point(|&x| x <= u).saturating_sub(1).min(self.low.knots.len() - 2);
            self.low.time_at(&self.problem, u, k)
        } else {
            let u = (self.q_max - q).max(0.0).sqrt();
            let k = self.high.knots.partition_point(|&x| x <= u).saturating_sub(1).min(self.high.knots.len() - 2);
            0.5 * self.period - self.high.time_at(&self.problem, u, k)
        };
        let th = self.omega0 * t;
        if p >= 0.0 {
            th
        } else {
            2.0 * PI - th
        }
    }

    /// `(theta, q, p)` on a uniform grid of `n` angles in `[0, 2 pi)`.
    pub fn samples(&self, n: usize) -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                let (q, p) = self.state(th);
                (th, q, p)
            })
            .collect()
    }

    /// Energy `p^2/2 + delta V(q)` at angle `theta`.
    pub fn energy_at(&self, theta: f64) -> f64 {
        let (q, p) = self.state(theta);
        0.5 * p * p + self.problem.potential(q)
    }
}

/// Maps `theta` into `[0, pi]` and returns the momentum sign.
pub fn reduce_angle(theta: f64) -> (f64, f64) {
    let t = theta.rem_euclid(2.0 * PI);
    if t <= PI {
        (t, 1.0)
    } else {
        (2.0 * PI - t, -1.0)
    }
}

/// `omega_0(delta)` at energy `1/2` for a decreasing sequence of `delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaTable {
    pub deltas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// `|omega_0 - 1|` decreases along the sequence.
    pub monotone: bool,
    /// Log-log slope of `|omega_0 - 1|` against `delta`.
    pub slope: f64,
}

pub fn omega0_convergence(deltas: &[f64], alpha: f64) -> Result<OmegaTable> {
    let mut omegas = Vec::with_capacity(deltas.len());
    for &d in deltas {
        omegas.push(VerticalProblem::standard(d, alpha)?.omega(0.5)?);
    }
    let gaps: Vec<f64> = omegas.iter().map(|w| (w - 1.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(&gaps)
        .filter(|(d, g)| **d > 0.0 && **g > 0.0)
        .map(|(d, g)| (d.ln(), g.ln()))
        .collect();
    let slope = crate::average::linear_fit(&pts).0;
    Ok(OmegaTable { deltas: deltas.to_vec(), omegas, monotone, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_is_sawtooth() {
        let p = VerticalProblem::standard(0.0, 2.0).unwrap();
        let o = p.orbit(0.5).unwrap();
        assert!((o.omega0 - 1.0).abs() < 1e-14);
        assert!((o.q(1.0) - 1.0).abs() < 1e-13);
        assert!((o.q(-1.0) - 1.0).abs() < 1e-13);
        assert!((p.period(2.0).unwrap() - PI).abs() < 1e-14);
    }

    #[test]
    fn orbit_energy_and_symmetry() {
        let p = VerticalProblem::standard(1e-3, 4.0).unwrap();
        let o = p.orbit(0.5).unwrap();
        for k in 0..50 {
            let th = 0.1 + 0.123 * k as f64;
            assert!((o.energy_at(th) - 0.5).abs() < 1e-10);
            assert!((o.q(th) - o.q(-th)).abs() < 1e-12);
            assert!((o.q(PI - th) - (PI - o.q(th))).abs() < 1e-12);
            let (q, pp) = o.state(th);
            let back = o.phase_of(q, pp);
            let diff = (back - th.rem_euclid(2.0 * PI)).abs();
            assert!(diff < 1e-10 || (diff - 2.0 * PI).abs() < 1e-10, "th={th} back={back}");
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let p = VerticalProblem::standard(1e-2, 4.0).unwrap();
        let o = p.orbit(0.5).unwrap();
        let th = 0.2;
        let j = o.jet(th);
        let h = 1e-3;
        let fd2 = (o.q(th + h) - 2.0 * o.q(th) + o.q(th - h)) / (h * h);
        assert!((j.deriv(2) - fd2).abs() < 1e-4 * (1.0 + fd2.abs()), "{} vs {}", j.deriv(2), fd2);
    }
}
