//! Dense univariate polynomials and real-root isolation.

use std::ops::{Add, Mul, Sub};

/// Coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `a + b s`.
    pub fn linear(a: f64, b: f64) -> Self {
        Poly(vec![a, b])
    }

    pub fn degree(&self) -> usize {
        self.0
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * k).collect())
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Real roots in `[lo, hi]`, ascending.
    ///
    /// The critical points of the derivative split the interval into
    /// monotone pieces; each piece with a sign change holds exactly one root,
    /// which is bisected and then Newton-polished.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if self.is_zero() || self.degree() == 0 {
            return Vec::new();
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().roots_in(lo, hi));
        knots.push(hi);
        let mut roots: Vec<f64> = Vec::new();
        let push = |r: f64, roots: &mut Vec<f64>| {
            if roots.last().is_none_or(|&last| (r - last).abs() > 1e-14 * (1.0 + r.abs())) {
                roots.push(r);
            }
        };
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                push(a, &mut roots);
            } else if fa * fb < 0.0 {
                push(self.polish(a, b, fa), &mut roots);
            }
        }
        if self.eval(hi) == 0.0 {
            push(hi, &mut roots);
        }
        roots
    }

    fn polish(&self, mut a: f64, mut b: f64, fa: f64) -> f64 {
        let sa = fa.signum();
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.eval(mid).signum() == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        let d = self.derivative();
        let mut r = 0.5 * (a + b);
        for _ in 0..8 {
            let slope = d.eval(r);
            if slope == 0.0 {
                break;
            }
            let step = self.eval(r) / slope;
            let next = r - step;
            if !(next >= a - 1e-13 && next <= b + 1e-13) {
                break;
            }
            r = next;
            if step.abs() < 1e-16 * (1.0 + r.abs()) {
                break;
            }
        }
        r
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly(
            (0..n)
                .map(|k| self.0.get(k).unwrap_or(&0.0) + o.0.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &o.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}
