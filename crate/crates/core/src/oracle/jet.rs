//! Second-order forward-mode dual numbers in two variables.
//!
//! Enough arithmetic to evaluate the reduced objective together with its
//! gradient and Hessian for Newton refinement.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar operations shared by `f64` and [`Jet`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn value(self) -> f64;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn value(self) -> f64 {
        self
    }
}

/// `v + g . h + h^T H h / 2` truncated at second order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet {
    /// The `k`-th independent variable at `v`.
    pub fn var(v: f64, k: usize) -> Self {
        let mut g = [0.0; 2];
        g[k] = 1.0;
        Jet {
            v,
            g,
            h: [[0.0; 2]; 2],
        }
    }

    /// Apply a scalar function with derivatives `d1`, `d2` at `self.v`.
    fn chain(self, f: f64, d1: f64, d2: f64) -> Self {
        let mut out = Jet {
            v: f,
            g: [d1 * self.g[0], d1 * self.g[1]],
            h: [[0.0; 2]; 2],
        };
        for i in 0..2 {
            for j in 0..2 {
                out.h[i][j] = d1 * self.h[i][j] + d2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut out = self;
        out.v += o.v;
        for i in 0..2 {
            out.g[i] += o.g[i];
            for j in 0..2 {
                out.h[i][j] += o.h[i][j];
            }
        }
        out
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut out = self;
        out.v = -out.v;
        for i in 0..2 {
            out.g[i] = -out.g[i];
            for j in 0..2 {
                out.h[i][j] = -out.h[i][j];
            }
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet {
            v: self.v * o.v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        };
        for i in 0..2 {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for j in 0..2 {
                out.h[i][j] = self.h[i][j] * o.v
                    + self.v * o.h[i][j]
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Real for Jet {
    fn cst(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        }
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn value(self) -> f64 {
        self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T) -> T {
        x * y.sin() / (x * x + T::cst(1.0)) - y.cos() * T::cst(3.0)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (x, y) = (0.7, -1.3);
        let j = f(Jet::var(x, 0), Jet::var(y, 1));
        assert!((j.v - f(x, y)).abs() < 1e-15);
        let h = 1e-5;
        let gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((j.g[0] - gx).abs() < 1e-9);
        assert!((j.g[1] - gy).abs() < 1e-9);
        let hxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h))
            / (4.0 * h * h);
        let hxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        assert!((j.h[0][1] - hxy).abs() < 1e-5);
        assert!((j.h[1][0] - hxy).abs() < 1e-5);
        assert!((j.h[0][0] - hxx).abs() < 1e-5);
    }
}
