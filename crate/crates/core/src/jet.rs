//! Truncated Taylor arithmetic in one variable.
//!
//! A [`Jet`] stores the normalized Taylor coefficients `c[k] = f^(k)(x0) / k!`
//! up to order [`ORDER`]. Arithmetic on jets propagates derivatives exactly
//! (up to rounding), which is how the averaged-potential calculus obtains
//! high derivatives in the phase without finite differencing.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Highest derivative order carried by a jet.
pub const ORDER: usize = 5;
const LEN: usize = ORDER + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; LEN],
}

impl Jet {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x;
        Jet { c }
    }

    /// Independent variable `x0 + eps`.
    pub fn variable(x0: f64) -> Self {
        Self::line(x0, 1.0)
    }

    /// Affine jet `x0 + slope * eps`.
    pub fn line(x0: f64, slope: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x0;
        c[1] = slope;
        Jet { c }
    }

    pub fn from_coeffs(c: [f64; LEN]) -> Self {
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative with respect to the jet variable.
    pub fn deriv(&self, k: usize) -> f64 {
        self.c[k] * factorial(k)
    }

    /// All derivatives `f, f', ..., f^(ORDER)`.
    pub fn derivs(&self) -> [f64; LEN] {
        let mut d = [0.0; LEN];
        for (k, v) in d.iter_mut().enumerate() {
            *v = self.deriv(k);
        }
        d
    }

    pub fn scale(self, s: f64) -> Self {
        let mut c = self.c;
        for v in c.iter_mut() {
            *v *= s;
        }
        Jet { c }
    }

    pub fn recip(self) -> Self {
        let a = &self.c;
        let mut b = [0.0; LEN];
        b[0] = 1.0 / a[0];
        for k in 1..LEN {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * b[k - j];
            }
            b[k] = -s * b[0];
        }
        Jet { c: b }
    }

    pub fn sqrt(self) -> Self {
        let a = &self.c;
        let mut s = [0.0; LEN];
        s[0] = a[0].sqrt();
        for k in 1..LEN {
            let mut acc = a[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Jet { c: s }
    }

    /// Real power `a^r`; requires a positive constant term.
    pub fn powf(self, r: f64) -> Self {
        let a = &self.c;
        let mut b = [0.0; LEN];
        b[0] = a[0].powf(r);
        for k in 1..LEN {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ((j as f64) * (r + 1.0) - k as f64) * a[j] * b[k - j];
            }
            b[k] = acc / (k as f64 * a[0]);
        }
        Jet { c: b }
    }

    pub fn exp(self) -> Self {
        let a = &self.c;
        let mut b = [0.0; LEN];
        b[0] = a[0].exp();
        for k in 1..LEN {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * a[j] * b[k - j];
            }
            b[k] = acc / k as f64;
        }
        Jet { c: b }
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let a = &self.c;
        let mut s = [0.0; LEN];
        let mut c = [0.0; LEN];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for k in 1..LEN {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for j in 1..=k {
                ss += j as f64 * a[j] * c[k - j];
                cc += j as f64 * a[j] * s[k - j];
            }
            s[k] = ss / k as f64;
            c[k] = -cc / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }

    pub fn sin(self) -> Self {
        self.sin_cos().0
    }

    pub fn cos(self) -> Self {
        self.sin_cos().1
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// Polynomial `sum_k coeffs[k] * x^k` evaluated on the jet (Horner).
    pub fn poly(self, coeffs: &[f64]) -> Self {
        let mut acc = Jet::constant(0.0);
        for &ck in coeffs.iter().rev() {
            acc = acc * self + Jet::constant(ck);
        }
        acc
    }

    /// Truncates coefficients above `order` to zero.
    pub fn truncate(self, order: usize) -> Self {
        let mut c = self.c;
        for v in c.iter_mut().skip(order + 1) {
            *v = 0.0;
        }
        Jet { c }
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, v| acc * v as f64)
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        for (v, w) in c.iter_mut().zip(o.c.iter()) {
            *v += w;
        }
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        let mut c = self.c;
        for (v, w) in c.iter_mut().zip(o.c.iter()) {
            *v -= w;
        }
        Jet { c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; LEN];
        for (i, ai) in self.c.iter().enumerate() {
            if *ai == 0.0 {
                continue;
            }
            for j in 0..LEN - i {
                c[i + j] += ai * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.scale(o)
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, o: f64) {
        *self = self.scale(o);
    }
}
