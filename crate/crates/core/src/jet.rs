//! Second-order forward-mode differentiation in three variables.
//!
//! A [`Jet`] carries a value together with its exact gradient and Hessian
//! with respect to the Cartesian coordinates `(x1, x2, x3)`. Every field in
//! the neck is assembled from jets, so first and second derivatives of the
//! velocity and pressure come out of the same chain-rule evaluation as the
//! values themselves, with no finite-difference truncation error.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
}

const ZERO3: Vec3 = [0.0; 3];
const ZERO33: Mat3 = [[0.0; 3]; 3];

fn outer_sym(a: &Vec3, b: &Vec3) -> Mat3 {
    let mut m = ZERO33;
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i] * b[j] + b[i] * a[j];
        }
    }
    m
}

impl Jet {
    pub const fn constant(value: f64) -> Self {
        Jet {
            value,
            grad: ZERO3,
            hess: ZERO33,
        }
    }

    /// The independent variable `x_axis` evaluated at `value`.
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut grad = ZERO3;
        grad[axis] = 1.0;
        Jet {
            value,
            grad,
            hess: ZERO33,
        }
    }

    /// Coordinates `(x1, x2, x3)` as jets.
    pub fn coordinates(x: Vec3) -> [Jet; 3] {
        [
            Jet::variable(x[0], 0),
            Jet::variable(x[1], 1),
            Jet::variable(x[2], 2),
        ]
    }

    pub fn zero() -> Self {
        Jet::constant(0.0)
    }

    /// Composition `g(self)` given `g`, `g'` and `g''` at `self.value`.
    pub fn compose(self, g0: f64, g1: f64, g2: f64) -> Self {
        let mut grad = ZERO3;
        let mut hess = ZERO33;
        for i in 0..3 {
            grad[i] = g1 * self.grad[i];
            for j in 0..3 {
                hess[i][j] = g1 * self.hess[i][j] + g2 * self.grad[i] * self.grad[j];
            }
        }
        Jet {
            value: g0,
            grad,
            hess,
        }
    }

    /// Composition with an outer function whose derivative is itself known as
    /// a jet in `x`: value `g0`, `g'(self)` given as `outer_slope`.
    ///
    /// Used for radial antiderivatives, where `g'` is cheap but `g` is a
    /// quadrature.
    pub fn compose_with_slope(self, g0: f64, outer_slope: &Jet) -> Self {
        let mut grad = ZERO3;
        let mut hess = ZERO33;
        for i in 0..3 {
            grad[i] = outer_slope.value * self.grad[i];
            for j in 0..3 {
                hess[i][j] = outer_slope.value * self.hess[i][j] + outer_slope.grad[j] * self.grad[i];
            }
        }
        Jet {
            value: g0,
            grad,
            hess,
        }
    }

    pub fn recip(self) -> Self {
        let v = self.value;
        let r = 1.0 / v;
        self.compose(r, -r * r, 2.0 * r * r * r)
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.value;
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            _ => self.compose(
                v.powi(n),
                n as f64 * v.powi(n - 1),
                (n * (n - 1)) as f64 * v.powi(n - 2),
            ),
        }
    }

    /// `self^p` for a non-negative base.
    ///
    /// Integer exponents 0, 1 and 2 are handled exactly. At a zero base with
    /// `p > 1` the value and both derivatives are taken as zero, which is the
    /// limit for the radial profiles this is applied to (`|x'|^2` raised to
    /// `m/2`).
    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Jet::constant(1.0);
        }
        if p == 1.0 {
            return self;
        }
        if p == 2.0 {
            return self * self;
        }
        let v = self.value;
        if v == 0.0 {
            return Jet::constant(0.0);
        }
        let f0 = v.powf(p);
        self.compose(f0, p * f0 / v, p * (p - 1.0) * f0 / (v * v))
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1] + self.hess[2][2]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        for i in 0..3 {
            r.grad[i] += o.grad[i];
            for j in 0..3 {
                r.hess[i][j] += o.hess[i][j];
            }
        }
        r.value += o.value;
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let cross = outer_sym(&self.grad, &o.grad);
        let mut grad = ZERO3;
        let mut hess = ZERO33;
        for i in 0..3 {
            grad[i] = self.value * o.grad[i] + o.value * self.grad[i];
            for j in 0..3 {
                hess[i][j] = self.value * o.hess[i][j] + o.value * self.hess[i][j] + cross[i][j];
            }
        }
        Jet {
            value: self.value * o.value,
            grad,
            hess,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.value += c;
        self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.value -= c;
        self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, c: f64) -> Jet {
        self.value *= c;
        for i in 0..3 {
            self.grad[i] *= c;
            for j in 0..3 {
                self.hess[i][j] *= c;
            }
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_grad(f: &dyn Fn(Vec3) -> f64, x: Vec3, h: f64) -> Vec3 {
        let mut g = ZERO3;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(xp) - f(xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn product_rule_and_quotient_match_closed_form() {
        // f = x1^2 x3 / (1 + x2^2)
        let x = [0.3, -0.7, 1.1];
        let [a, b, c] = Jet::coordinates(x);
        let f = a.square() * c / (1.0 + b.square());
        let den = 1.0 + x[1] * x[1];
        assert_relative_eq!(f.value, x[0] * x[0] * x[2] / den, max_relative = 1e-15);
        assert_relative_eq!(f.grad[0], 2.0 * x[0] * x[2] / den, max_relative = 1e-14);
        assert_relative_eq!(
            f.grad[1],
            -2.0 * x[1] * x[0] * x[0] * x[2] / (den * den),
            max_relative = 1e-14
        );
        assert_relative_eq!(f.hess[0][2], 2.0 * x[0] / den, max_relative = 1e-14);
        assert_relative_eq!(f.hess[2][0], f.hess[0][2], max_relative = 1e-15);
        assert_eq!(f.hess[2][2], 0.0);
    }

    #[test]
    fn hessian_matches_differenced_gradient() {
        let func = |x: [Jet; 3]| (x[0] * x[1] + x[2].square()).powf(1.7) / (2.0 + x[0]).powi(3);
        let x = [0.4, 0.9, -0.2];
        let j = func(Jet::coordinates(x));
        let h = 1e-5;
        for k in 0..3 {
            let gk = |y: Vec3| func(Jet::coordinates(y)).grad[k];
            let fd = fd_grad(&gk, x, h);
            for l in 0..3 {
                assert_relative_eq!(j.hess[k][l], fd[l], epsilon = 1e-8, max_relative = 1e-7);
            }
        }
        let fd = fd_grad(&|y| func(Jet::coordinates(y)).value, x, h);
        for l in 0..3 {
            assert_relative_eq!(j.grad[l], fd[l], max_relative = 1e-8);
        }
    }

    #[test]
    fn powf_exact_cases() {
        let x = Jet::variable(3.0, 0);
        assert_eq!(x.powf(1.0), x);
        assert_eq!(x.powf(2.0).value, 9.0);
        assert_eq!(x.powf(2.0).hess[0][0], 2.0);
        assert_eq!(x.powf(0.0), Jet::constant(1.0));
        let zero = Jet::variable(0.0, 1);
        let z = zero.powf(1.5);
        assert_eq!(z.value, 0.0);
        assert_eq!(z.grad, ZERO3);
    }
}
