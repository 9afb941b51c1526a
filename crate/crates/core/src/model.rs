//! Interaction and confinement potentials, the N-particle Hamiltonian and its
//! exact gradient.
//!
//! The Hamiltonian is
//! `H = sum_n |p_n|^2 / 2 + delta * sum_n sum_i V_i(q_{n,i}) + delta * sum_{n != m} W(q_n - q_m)`
//! where the interaction sum runs over ordered pairs, so each unordered pair
//! contributes twice. `V_i = Q_i^{-alpha}` on walled axes; the last axis is
//! the vertical (fast) one.

use crate::error::{ChoreoError, Result};
use crate::jet::Jet;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Natural cubic spline of a radial profile `f(r)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RadialSpline {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl RadialSpline {
    pub fn new(r: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let n = r.len();
        if n < 3 || f.len() != n {
            return Err(ChoreoError::InvalidInput("spline needs >= 3 matching knots".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChoreoError::InvalidInput("spline knots must increase".into()));
        }
        // Tridiagonal solve for interior second derivatives, natural ends.
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut sub = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            sub[i] = h0;
            diag[i] = 2.0 * (h0 + h1);
            rhs[i] = 6.0 * ((f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0);
        }
        for i in 2..n - 1 {
            let h = r[i] - r[i - 1];
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * h;
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            let h1 = r[i + 1] - r[i];
            let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
            m[i] = (rhs[i] - h1 * next) / diag[i];
        }
        Ok(RadialSpline { r, f, m })
    }

    /// Local cubic `a + b x + c x^2 + d x^3` in `x = r - r_i` and the knot `r_i`.
    fn piece(&self, r: f64) -> (f64, [f64; 4]) {
        let n = self.r.len();
        if r >= self.r[n - 1] {
            // Linear continuation beyond the last knot (natural end: zero curvature).
            let i = n - 2;
            let h = self.r[i + 1] - self.r[i];
            let slope = (self.f[i + 1] - self.f[i]) / h + h * (2.0 * self.m[i + 1] + self.m[i]) / 6.0;
            return (self.r[n - 1], [self.f[n - 1], slope, 0.0, 0.0]);
        }
        let i = match self.r.partition_point(|&x| x <= r) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let h = self.r[i + 1] - self.r[i];
        let a = self.f[i];
        let b = (self.f[i + 1] - self.f[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        let c = self.m[i] / 2.0;
        let d = (self.m[i + 1] - self.m[i]) / (6.0 * h);
        (self.r[i], [a, b, c, d])
    }

    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let (r0, [a, b, c, d]) = self.piece(r);
        let x = r - r0;
        (a + x * (b + x * (c + x * d)), b + x * (2.0 * c + 3.0 * d * x), 2.0 * c + 6.0 * d * x)
    }

    pub fn eval_jet(&self, r: Jet) -> Jet {
        let (r0, coeffs) = self.piece(r.value());
        (r - r0).poly(&coeffs)
    }
}

/// Family of the pair interaction `W(q)`, `q = q_n - q_m`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InteractionKind {
    /// `c / (|q| - rho)^k`.
    InversePowerWithCore { strength: f64, power: f64 },
    /// `c / (s + (|q| - rho)^2)`.
    InverseSquareShifted { strength: f64, shift: f64 },
    /// `A cos(q_vertical)`, independent of the transverse offset.
    CosineTest { amplitude: f64 },
    /// `c2 |q|^2 + c4 |q|^4`.
    QuarticTest { c2: f64, c4: f64 },
    /// Natural cubic spline in `|q|`.
    UserTabulated { spline: RadialSpline },
}

/// Pair interaction with core radius and optional cutoff level.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InteractionPotential {
    #[serde(flatten)]
    pub kind: InteractionKind,
    #[serde(default)]
    pub core_radius: f64,
    pub cutoff: Option<f64>,
}

/// Smooth saturation used by the cutoff: identity below `k`, constant
/// `k + 1/2` above `k + 1`, and `t - t^3 + t^4/2` (t = w - k) in between.
fn cutoff_map(w: f64, k: f64) -> (f64, f64, f64) {
    let t = w - k;
    if t <= 0.0 {
        (w, 1.0, 0.0)
    } else if t >= 1.0 {
        (k + 0.5, 0.0, 0.0)
    } else {
        (k + t - t.powi(3) + 0.5 * t.powi(4), 1.0 - 3.0 * t * t + 2.0 * t.powi(3), -6.0 * t + 6.0 * t * t)
    }
}

fn cutoff_jet(w: Jet, k: f64) -> Jet {
    let t = w.value() - k;
    if t <= 0.0 {
        w
    } else if t >= 1.0 {
        Jet::constant(k + 0.5)
    } else {
        (w - k).poly(&[k, 1.0, 0.0, -1.0, 0.5])
    }
}

impl InteractionPotential {
    pub fn new(kind: InteractionKind, core_radius: f64) -> Self {
        InteractionPotential { kind, core_radius, cutoff: None }
    }

    pub fn cosine(amplitude: f64) -> Self {
        Self::new(InteractionKind::CosineTest { amplitude }, 0.0)
    }

    pub fn shifted_inverse_square(strength: f64, shift: f64) -> Self {
        Self::new(InteractionKind::InverseSquareShifted { strength, shift }, 0.0)
    }

    /// Bounded version agreeing with `self` wherever `W <= k`.
    pub fn cutoff(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.cutoff = Some(k);
        out
    }

    /// True for kinds that blow up at the core.
    pub fn is_repelling(&self) -> bool {
        matches!(self.kind, InteractionKind::InversePowerWithCore { .. }) && self.cutoff.is_none()
    }

    /// All kinds here satisfy `W(q) = W(-q)`.
    pub fn is_even(&self) -> bool {
        true
    }

    fn uses_square_form(&self) -> bool {
        match self.kind {
            InteractionKind::QuarticTest { .. } => true,
            InteractionKind::InverseSquareShifted { .. } => self.core_radius == 0.0,
            _ => false,
        }
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let needs_core = match &self.kind {
            InteractionKind::InversePowerWithCore { .. } => true,
            InteractionKind::InverseSquareShifted { .. } | InteractionKind::UserTabulated { .. } => {
                self.core_radius > 0.0
            }
            _ => false,
        };
        if needs_core && r <= self.core_radius {
            return Err(ChoreoError::DomainViolation(format!(
                "pair distance {r} within core radius {}",
                self.core_radius
            )));
        }
        if let InteractionKind::UserTabulated { spline } = &self.kind {
            if r < spline.r[0] {
                return Err(ChoreoError::DomainViolation(format!(
                    "pair distance {r} below tabulated range starting at {}",
                    spline.r[0]
                )));
            }
        }
        Ok(())
    }

    /// Radial profile `f(r)` and two derivatives (radial kinds only).
    fn radial(&self, r: f64) -> (f64, f64, f64) {
        let rho = self.core_radius;
        match &self.kind {
            InteractionKind::InversePowerWithCore { strength: c, power: k } => {
                let x = r - rho;
                let v = c * x.powf(-k);
                (v, -k * v / x, k * (k + 1.0) * v / (x * x))
            }
            InteractionKind::InverseSquareShifted { strength: c, shift: s } => {
                let x = r - rho;
                let den = s + x * x;
                (c / den, -2.0 * c * x / (den * den), c * (6.0 * x * x - 2.0 * s) / den.powi(3))
            }
            InteractionKind::UserTabulated { spline } => spline.eval(r),
            InteractionKind::QuarticTest { c2, c4 } => {
                (c2 * r * r + c4 * r.powi(4), 2.0 * c2 * r + 4.0 * c4 * r.powi(3), 2.0 * c2 + 12.0 * c4 * r * r)
            }
            InteractionKind::CosineTest { .. } => unreachable!("cosine kind is not radial"),
        }
    }

    /// Square-form profile `g(s)`, `s = |q|^2`, and two derivatives.
    fn square_form(&self, s: f64) -> (f64, f64, f64) {
        match &self.kind {
            InteractionKind::QuarticTest { c2, c4 } => (c2 * s + c4 * s * s, c2 + 2.0 * c4 * s, 2.0 * c4),
            InteractionKind::InverseSquareShifted { strength: c, shift } => {
                let den = shift + s;
                (c / den, -c / (den * den), 2.0 * c / den.powi(3))
            }
            _ => unreachable!("square form only for quartic and unshifted-core kinds"),
        }
    }

    /// Value, gradient and Hessian of the raw (uncut) potential.
    fn raw_full(&self, q: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let d = q.len();
        let mut grad = vec![0.0; d];
        let mut hess = DMatrix::zeros(d, d);
        if let InteractionKind::CosineTest { amplitude } = self.kind {
            let u = q[d - 1];
            grad[d - 1] = -amplitude * u.sin();
            hess[(d - 1, d - 1)] = -amplitude * u.cos();
            return Ok((amplitude * u.cos(), grad, hess));
        }
        let s: f64 = q.iter().map(|x| x * x).sum();
        let r = s.sqrt();
        self.check_radius(r)?;
        if self.uses_square_form() {
            let (g, g1, g2) = self.square_form(s);
            for i in 0..d {
                grad[i] = 2.0 * g1 * q[i];
                for j in 0..d {
                    hess[(i, j)] = 4.0 * g2 * q[i] * q[j] + if i == j { 2.0 * g1 } else { 0.0 };
                }
            }
            return Ok((g, grad, hess));
        }
        if r == 0.0 {
            return Err(ChoreoError::DomainViolation("coincident particles".into()));
        }
        let (f, f1, f2) = self.radial(r);
        for i in 0..d {
            grad[i] = f1 * q[i] / r;
            for j in 0..d {
                let outer = q[i] * q[j] / s;
                hess[(i, j)] = (f2 - f1 / r) * outer + if i == j { f1 / r } else { 0.0 };
            }
        }
        Ok((f, grad, hess))
    }

    pub fn value(&self, q: &[f64]) -> Result<f64> {
        Ok(self.value_grad(q)?.0)
    }

    /// Value and gradient.
    pub fn value_grad(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g, _) = self.full(q)?;
        Ok((v, g))
    }

    /// Value, gradient and Hessian, including the cutoff map.
    pub fn full(&self, q: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let k = match self.cutoff {
            None => return self.raw_full(q),
            Some(k) => k,
        };
        // Inside the core the base potential exceeds any finite level.
        let raw = match self.raw_full(q) {
            Ok(x) => x,
            Err(_) => return Ok((k + 0.5, vec![0.0; q.len()], DMatrix::zeros(q.len(), q.len()))),
        };
        let (w, g, h) = raw;
        if !w.is_finite() {
            return Ok((k + 0.5, vec![0.0; q.len()], DMatrix::zeros(q.len(), q.len())));
        }
        let (phi, dphi, ddphi) = cutoff_map(w, k);
        let grad: Vec<f64> = g.iter().map(|x| dphi * x).collect();
        let d = q.len();
        let mut hess = h * dphi;
        for i in 0..d {
            for j in 0..d {
                hess[(i, j)] += ddphi * g[i] * g[j];
            }
        }
        Ok((phi, grad, hess))
    }

    /// Evaluates `W` on a vector of jets (Taylor propagation along a curve).
    pub fn eval_jet(&self, x: &[Jet]) -> Result<Jet> {
        let d = x.len();
        let raw = match &self.kind {
            InteractionKind::CosineTest { amplitude } => x[d - 1].cos().scale(*amplitude),
            _ => {
                let mut s = Jet::constant(0.0);
                for xi in x {
                    s += *xi * *xi;
                }
                let r0 = s.value().sqrt();
                match self.check_radius(r0) {
                    Ok(()) => {}
                    Err(e) => {
                        if let Some(k) = self.cutoff {
                            return Ok(Jet::constant(k + 0.5));
                        }
                        return Err(e);
                    }
                }
                if self.uses_square_form() {
                    match &self.kind {
                        InteractionKind::QuarticTest { c2, c4 } => s.scale(*c2) + (s * s).scale(*c4),
                        InteractionKind::InverseSquareShifted { strength, shift } => {
                            (s + *shift).recip().scale(*strength)
                        }
                        _ => unreachable!(),
                    }
                } else {
                    if r0 == 0.0 {
                        return Err(ChoreoError::DomainViolation("coincident particles".into()));
                    }
                    let r = s.sqrt();
                    let rho = self.core_radius;
                    match &self.kind {
                        InteractionKind::InversePowerWithCore { strength, power } => {
                            (r - rho).powf(-power).scale(*strength)
                        }
                        InteractionKind::InverseSquareShifted { strength, shift } => {
                            ((r - rho).square() + *shift).recip().scale(*strength)
                        }
                        InteractionKind::UserTabulated { spline } => spline.eval_jet(r),
                        InteractionKind::QuarticTest { .. } | InteractionKind::CosineTest { .. } => unreachable!(),
                    }
                }
            }
        };
        Ok(match self.cutoff {
            Some(k) => cutoff_jet(raw, k),
            None => raw,
        })
    }

    /// Derivatives `d^j/du^j W(u e_vertical + zeta)` for `j = 0..=5`.
    pub fn vertical_derivs(&self, u: f64, zeta: &[f64]) -> Result<[f64; 6]> {
        let mut x: Vec<Jet> = zeta.iter().map(|&z| Jet::constant(z)).collect();
        x.push(Jet::variable(u));
        Ok(self.eval_jet(&x)?.derivs())
    }
}

/// Shape of the per-axis wall-distance function.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AxisProfile {
    /// `(l/pi) sin(pi q / l)`.
    Sine,
    /// `q (l - q) / l`.
    Parabolic,
    /// No wall along this axis.
    Free,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Axis {
    pub length: f64,
    pub profile: AxisProfile,
}

impl Axis {
    pub fn sine(length: f64) -> Self {
        Axis { length, profile: AxisProfile::Sine }
    }

    pub fn free() -> Self {
        Axis { length: f64::INFINITY, profile: AxisProfile::Free }
    }

    pub fn walled(&self) -> bool {
        self.profile != AxisProfile::Free
    }

    /// Wall distance `Q(x)`.
    pub fn q(&self, x: f64) -> f64 {
        let l = self.length;
        match self.profile {
            AxisProfile::Sine => l / PI * (PI * x / l).sin(),
            AxisProfile::Parabolic => x * (l - x) / l,
            AxisProfile::Free => 1.0,
        }
    }

    pub fn q_jet(&self, x: Jet) -> Jet {
        let l = self.length;
        match self.profile {
            AxisProfile::Sine => x.scale(PI / l).sin().scale(l / PI),
            AxisProfile::Parabolic => (x * (Jet::constant(l) - x)).scale(1.0 / l),
            AxisProfile::Free => Jet::constant(1.0),
        }
    }

    /// `Q(x) - Q(y)` without cancellation when `x` is close to `y`.
    pub fn q_diff(&self, x: f64, y: f64) -> f64 {
        let l = self.length;
        match self.profile {
            AxisProfile::Sine => {
                let a = PI * x / l;
                let b = PI * y / l;
                l / PI * 2.0 * (0.5 * (a + b)).cos() * (0.5 * (a - b)).sin()
            }
            AxisProfile::Parabolic => (x - y) * (l - x - y) / l,
            AxisProfile::Free => 0.0,
        }
    }

    /// `Q(y + h) - Q(y)` from the offset `h` itself, exact for tiny `h`.
    pub fn q_offset(&self, y: f64, h: f64) -> f64 {
        let l = self.length;
        match self.profile {
            AxisProfile::Sine => l / PI * 2.0 * (PI * (2.0 * y + h) / (2.0 * l)).cos() * (PI * h / (2.0 * l)).sin(),
            AxisProfile::Parabolic => h * (l - 2.0 * y - h) / l,
            AxisProfile::Free => 0.0,
        }
    }

    /// `(Q, Q', Q'')` at `x`.
    pub fn q_derivs(&self, x: f64) -> (f64, f64, f64) {
        let l = self.length;
        match self.profile {
            AxisProfile::Sine => {
                let a = PI * x / l;
                (l / PI * a.sin(), a.cos(), -PI / l * a.sin())
            }
            AxisProfile::Parabolic => (x * (l - x) / l, (l - 2.0 * x) / l, -2.0 / l),
            AxisProfile::Free => (1.0, 0.0, 0.0),
        }
    }

    /// Slope of `Q` at the lower wall.
    pub fn q_prime_at_wall(&self) -> f64 {
        self.q_derivs(0.0).1
    }

    /// Position of the maximum of `Q` (minimum of the wall potential).
    pub fn center(&self) -> f64 {
        0.5 * self.length
    }
}

/// Wall potentials `V_i = Q_i^{-alpha}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfinementPotential {
    pub alpha: f64,
    pub axes: Vec<Axis>,
}

impl ConfinementPotential {
    /// Sine-profile walls of the given lengths.
    pub fn sine_box(alpha: f64, lengths: &[f64]) -> Self {
        ConfinementPotential { alpha, axes: lengths.iter().map(|&l| Axis::sine(l)).collect() }
    }

    pub fn vertical(&self) -> &Axis {
        self.axes.last().expect("at least one axis")
    }

    /// True when the vertical distance function is mirror symmetric.
    pub fn vertical_symmetric(&self) -> bool {
        let ax = self.vertical();
        matches!(ax.profile, AxisProfile::Sine | AxisProfile::Parabolic)
    }

    /// `V`, `V'`, `V''` on one axis; domain error when outside the walls.
    pub fn axis_potential(&self, i: usize, x: f64) -> Result<(f64, f64, f64)> {
        let ax = &self.axes[i];
        if !ax.walled() {
            return Ok((0.0, 0.0, 0.0));
        }
        let (q, q1, q2) = ax.q_derivs(x);
        if !(q > 0.0) || x <= 0.0 || x >= ax.length {
            return Err(ChoreoError::DomainViolation(format!("coordinate {x} outside (0, {}) on axis {i}", ax.length)));
        }
        let a = self.alpha;
        let v = q.powf(-a);
        let v1 = -a * q1 * v / q;
        let v2 = a * v / (q * q) * ((a + 1.0) * q1 * q1 - q * q2);
        Ok((v, v1, v2))
    }

    /// Wall potential on a jet argument.
    pub fn axis_potential_jet(&self, i: usize, x: Jet) -> Jet {
        let ax = &self.axes[i];
        if !ax.walled() {
            return Jet::constant(0.0);
        }
        ax.q_jet(x).powf(-self.alpha)
    }
}

/// Full problem definition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub interaction: InteractionPotential,
    pub confinement: ConfinementPotential,
}

impl SystemSpec {
    pub fn new(
        n: usize,
        d: usize,
        delta: f64,
        interaction: InteractionPotential,
        confinement: ConfinementPotential,
    ) -> Result<Self> {
        if n < 1 || d < 1 {
            return Err(ChoreoError::InvalidInput("need N >= 1 and d >= 1".into()));
        }
        if confinement.axes.len() != d {
            return Err(ChoreoError::InvalidInput(format!(
                "confinement has {} axes, expected {d}",
                confinement.axes.len()
            )));
        }
        if !(delta >= 0.0) {
            return Err(ChoreoError::InvalidInput("delta must be non-negative".into()));
        }
        Ok(SystemSpec { n, d, delta, interaction, confinement })
    }

    /// Builds from the energy per particle, `delta = 1 / (2 h)`.
    pub fn from_energy(
        n: usize,
        d: usize,
        h: f64,
        interaction: InteractionPotential,
        confinement: ConfinementPotential,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(ChoreoError::InvalidInput("energy per particle must be positive".into()));
        }
        Self::new(n, d, 1.0 / (2.0 * h), interaction, confinement)
    }

    pub fn energy_per_particle(&self) -> f64 {
        1.0 / (2.0 * self.delta)
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    /// Sum of wall potentials (without the delta factor).
    pub fn wall_energy(&self, q: &[f64]) -> Result<f64> {
        let mut e = 0.0;
        for n in 0..self.n {
            for i in 0..self.d {
                e += self.confinement.axis_potential(i, q[n * self.d + i])?.0;
            }
        }
        Ok(e)
    }

    /// Ordered-pair interaction sum (without the delta factor).
    pub fn interaction_energy(&self, q: &[f64]) -> Result<f64> {
        let d = self.d;
        let mut diff = vec![0.0; d];
        let mut e = 0.0;
        for n in 0..self.n {
            for m in 0..self.n {
                if n == m {
                    continue;
                }
                for i in 0..d {
                    diff[i] = q[n * d + i] - q[m * d + i];
                }
                e += self.interaction.value(&diff)?;
            }
        }
        Ok(e)
    }

    /// Potential part `delta * (walls + interaction)`.
    pub fn potential(&self, q: &[f64]) -> Result<f64> {
        if self.delta == 0.0 {
            self.check_domain(q)?;
            return Ok(0.0);
        }
        Ok(self.delta * (self.wall_energy(q)? + self.interaction_energy(q)?))
    }

    /// Gradient of the potential part into `out`.
    pub fn potential_gradient(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.potential_and_gradient(q, out).map(|_| ())
    }

    /// Potential part and its gradient (into `out`) in one pass.
    pub fn potential_and_gradient(&self, q: &[f64], out: &mut [f64]) -> Result<f64> {
        let d = self.d;
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.delta == 0.0 {
            self.check_domain(q)?;
            return Ok(0.0);
        }
        let mut e = 0.0;
        for n in 0..self.n {
            for i in 0..d {
                let (v, v1, _) = self.confinement.axis_potential(i, q[n * d + i])?;
                e += v;
                out[n * d + i] += self.delta * v1;
            }
        }
        let mut diff = vec![0.0; d];
        for n in 0..self.n {
            for m in 0..self.n {
                if n == m {
                    continue;
                }
                for i in 0..d {
                    diff[i] = q[n * d + i] - q[m * d + i];
                }
                let (w, g) = self.interaction.value_grad(&diff)?;
                e += w;
                for i in 0..d {
                    out[n * d + i] += self.delta * g[i];
                    out[m * d + i] -= self.delta * g[i];
                }
            }
        }
        Ok(self.delta * e)
    }

    /// Domain check: inside the walls and outside every core.
    pub fn check_domain(&self, q: &[f64]) -> Result<()> {
        for n in 0..self.n {
            for i in 0..self.d {
                self.confinement.axis_potential(i, q[n * self.d + i])?;
            }
        }
        if self.interaction.core_radius > 0.0 {
            for n in 0..self.n {
                for m in n + 1..self.n {
                    let r = self.pair_distance(q, n, m);
                    if r <= self.interaction.core_radius {
                        return Err(ChoreoError::DomainViolation(format!(
                            "particles {n} and {m} at distance {r} <= core radius"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pair_distance(&self, q: &[f64], n: usize, m: usize) -> f64 {
        let d = self.d;
        (0..d).map(|i| (q[n * d + i] - q[m * d + i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn min_pair_distance(&self, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for n in 0..self.n {
            for m in n + 1..self.n {
                best = best.min(self.pair_distance(q, n, m));
            }
        }
        best
    }
}

/// Positions and momenta, row-major `N x d`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        PhaseState { q, p, t: 0.0 }
    }

    pub fn kinetic(&self) -> f64 {
        0.5 * self.p.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Total energy.
pub fn eval_energy(spec: &SystemSpec, state: &PhaseState) -> Result<f64> {
    check_shape(spec, state)?;
    Ok(state.kinetic() + spec.potential(&state.q)?)
}

/// `(dH/dq, dH/dp)`.
pub fn eval_gradient(spec: &SystemSpec, state: &PhaseState) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shape(spec, state)?;
    let mut gq = vec![0.0; spec.dim()];
    spec.potential_gradient(&state.q, &mut gq)?;
    Ok((gq, state.p.clone()))
}

fn check_shape(spec: &SystemSpec, state: &PhaseState) -> Result<()> {
    if state.q.len() != spec.dim() || state.p.len() != spec.dim() {
        return Err(ChoreoError::InvalidInput(format!(
            "state has {} / {} entries, expected {}",
            state.q.len(),
            state.p.len(),
            spec.dim()
        )));
    }
    if state.q.iter().chain(state.p.iter()).any(|v| !v.is_finite()) {
        return Err(ChoreoError::DomainViolation("non-finite state entry".into()));
    }
    Ok(())
}
