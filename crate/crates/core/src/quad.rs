//! Gauss–Legendre quadrature: fixed rules, composite rules and an adaptive
//! bisection driver that works for scalar, jet and vector-valued integrands.

use crate::jet::Jet;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an n-point rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared cached rule.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of a scalar function over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Integral of a generic accumulable value over [a, b].
    pub fn integrate_value<T: QuadValue, F: FnMut(f64) -> T>(&self, a: f64, b: f64, mut f: F) -> T {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut acc: Option<T> = None;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(c + h * x);
            match acc.as_mut() {
                None => {
                    let mut z = v.zero_like();
                    z.axpy(w * h, &v);
                    acc = Some(z);
                }
                Some(z) => z.axpy(w * h, &v),
            }
        }
        acc.expect("rule has nodes")
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values that quadrature can accumulate.
pub trait QuadValue: Clone {
    fn zero_like(&self) -> Self;
    fn axpy(&mut self, w: f64, x: &Self);
    /// Max-norm distance, used for adaptive error control.
    fn dist(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        *self += w * x;
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Jet {
    fn zero_like(&self) -> Self {
        Jet::constant(0.0)
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        for (a, b) in self.c.iter_mut().zip(x.c.iter()) {
            *a += w * b;
        }
    }
    fn dist(&self, other: &Self) -> f64 {
        self.c.iter().zip(other.c.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
    fn magnitude(&self) -> f64 {
        self.c.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

impl<T: QuadValue> QuadValue for Vec<T> {
    fn zero_like(&self) -> Self {
        self.iter().map(|v| v.zero_like()).collect()
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x.iter()) {
            a.axpy(w, b);
        }
    }
    fn dist(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a.dist(b)).fold(0.0, f64::max)
    }
    fn magnitude(&self) -> f64 {
        self.iter().map(|a| a.magnitude()).fold(0.0, f64::max)
    }
}

/// Composite rule: `panels` equal panels on each interval between
/// consecutive `breaks`.
pub fn composite<T: QuadValue, F: FnMut(f64) -> T>(
    breaks: &[f64],
    panels: usize,
    nodes: usize,
    mut f: F,
) -> T {
    let gl = GaussLegendre::cached(nodes);
    let mut acc: Option<T> = None;
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            let v = gl.integrate_value(lo, hi, &mut f);
            match acc.as_mut() {
                None => acc = Some(v),
                Some(z) => z.axpy(1.0, &v),
            }
        }
    }
    acc.expect("at least one non-empty interval")
}

/// Upper bound on bisections per adaptive call.
const MAX_PANELS: usize = 20_000;

/// Settings of the adaptive driver.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOpts {
    pub nodes: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveOpts {
    fn default() -> Self {
        AdaptiveOpts { nodes: 20, abs_tol: 1e-14, rel_tol: 1e-13, max_depth: 40 }
    }
}

/// Adaptive bisection: a panel is accepted once its one-panel estimate agrees
/// with the sum of its two halves. Returns the integral and whether every
/// panel met the tolerance.
pub fn adaptive<T: QuadValue, F: FnMut(f64) -> T>(
    a: f64,
    b: f64,
    opts: AdaptiveOpts,
    mut f: F,
) -> (T, bool) {
    let gl = GaussLegendre::cached(opts.nodes);
    let whole = gl.integrate_value(a, b, &mut f);
    let scale = whole.magnitude();
    let mut ok = true;
    let mut budget = MAX_PANELS;
    let res = recurse(&gl, a, b, whole, scale, opts, 0, &mut f, &mut ok, &mut budget);
    (res, ok)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: QuadValue, F: FnMut(f64) -> T>(
    gl: &GaussLegendre,
    a: f64,
    b: f64,
    whole: T,
    scale: f64,
    opts: AdaptiveOpts,
    depth: usize,
    f: &mut F,
    ok: &mut bool,
    budget: &mut usize,
) -> T {
    let m = 0.5 * (a + b);
    let left = gl.integrate_value(a, m, &mut *f);
    let right = gl.integrate_value(m, b, &mut *f);
    let mut both = left.clone();
    both.axpy(1.0, &right);
    let err = both.dist(&whole);
    // Differences below a few hundred ulps of the panel value are rounding.
    let floor = 256.0 * f64::EPSILON * both.magnitude().max(whole.magnitude());
    let tol = opts.abs_tol.max(opts.rel_tol * scale.max(both.magnitude())).max(floor);
    if err <= tol {
        return both;
    }
    *budget = budget.saturating_sub(1);
    if depth >= opts.max_depth || *budget == 0 || (b - a) < 1e-15 * (1.0 + a.abs()) {
        *ok = false;
        return both;
    }
    let mut l = recurse(gl, a, m, left, scale, opts, depth + 1, f, ok, budget);
    let r = recurse(gl, m, b, right, scale, opts, depth + 1, f, ok, budget);
    l.axpy(1.0, &r);
    l
}

/// Adaptive integration over consecutive intervals of `breaks`.
pub fn adaptive_breaks<T: QuadValue, F: FnMut(f64) -> T>(
    breaks: &[f64],
    opts: AdaptiveOpts,
    mut f: F,
) -> (T, bool) {
    let mut acc: Option<T> = None;
    let mut all_ok = true;
    for win in breaks.windows(2) {
        if win[1] <= win[0] {
            continue;
        }
        let (v, ok) = adaptive(win[0], win[1], opts, &mut f);
        all_ok &= ok;
        match acc.as_mut() {
            None => acc = Some(v),
            Some(z) => z.axpy(1.0, &v),
        }
    }
    (acc.expect("at least one non-empty interval"), all_ok)
}
