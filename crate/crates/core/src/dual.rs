//! Forward-mode dual numbers.
//!
//! `Dual<T, N>` carries a value and `N` first partials. Nesting
//! (`Dual<Dual<f64, 2>, 2>`) gives second derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Number type the expression evaluator and the geometry kernels are generic over.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;
    /// The real part, with all infinitesimal parts dropped.
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Power with a constant real exponent.
    fn powc(self, p: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }
    fn powf(self, p: Self) -> Self {
        (p * self.ln()).exp()
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powc(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn powf(self, p: Self) -> Self {
        f64::powf(self, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    pub fn constant(re: T) -> Self {
        Dual { re, eps: [T::zero(); N] }
    }

    /// Independent variable number `i`.
    pub fn var(re: T, i: usize) -> Self {
        let mut eps = [T::zero(); N];
        eps[i] = T::one();
        Dual { re, eps }
    }

    /// Chain rule: value `f`, derivative `df` of the outer function at `self.re`.
    fn chain(self, f: T, df: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * df;
        }
        Dual { re: f, eps }
    }

    /// Directional derivative `Σ v_i ∂_i`.
    pub fn directional(&self, v: &[T]) -> T {
        let mut acc = T::zero();
        for (e, vi) in self.eps.iter().zip(v) {
            acc += *e * *vi;
        }
        acc
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for i in 0..N {
            self.eps[i] += rhs.eps[i];
        }
        self
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for i in 0..N {
            self.eps[i] -= rhs.eps[i];
        }
        self
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [T::zero(); N];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = self.re * rhs.eps[i] + rhs.re * self.eps[i];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.re;
        let q = self.re * inv;
        let mut eps = [T::zero(); N];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[i] - q * rhs.eps[i]) * inv;
        }
        Dual { re: q, eps }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for e in self.eps.iter_mut() {
            *e = -*e;
        }
        self
    }
}

impl<T: Scalar, const N: usize> AddAssign for Dual<T, N> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar, const N: usize> SubAssign for Dual<T, N> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Scalar, const N: usize> MulAssign for Dual<T, N> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Scalar, const N: usize> Scalar for Dual<T, N> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::one() / self.re)
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, T::one() / (r + r))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ => {
                let pm1 = self.re.powi(n - 1);
                self.chain(pm1 * self.re, pm1.scale(n as f64))
            }
        }
    }
    fn powc(self, p: f64) -> Self {
        if p == 0.0 {
            return Self::one();
        }
        let pm1 = self.re.powc(p - 1.0);
        self.chain(pm1 * self.re, pm1.scale(p))
    }
}

/// Number of chart coordinates supported by the gradient type.
pub const MAX_VARS: usize = 8;

/// Value plus gradient with respect to chart coordinates.
pub type Grad = Dual<f64, MAX_VARS>;

/// Value plus derivatives in the square parameters `(t, s)`.
pub type Jet = Dual<f64, 2>;

/// Seeds each coordinate of `x` as an independent variable.
pub fn seed_point(x: &[f64]) -> Vec<Grad> {
    assert!(x.len() <= MAX_VARS, "at most {MAX_VARS} chart coordinates");
    x.iter().enumerate().map(|(i, &v)| Grad::var(v, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::<f64, 2>::var(1.5, 0);
        let y = Dual::<f64, 2>::var(-0.7, 1);
        let f = x * y / (x + Dual::constant(2.0));
        let fx = |a: f64, b: f64| a * b / (a + 2.0);
        let h = 1e-6;
        assert_relative_eq!(f.re, fx(1.5, -0.7));
        assert_relative_eq!(f.eps[0], (fx(1.5 + h, -0.7) - fx(1.5 - h, -0.7)) / (2.0 * h), epsilon = 1e-8);
        assert_relative_eq!(f.eps[1], (fx(1.5, -0.7 + h) - fx(1.5, -0.7 - h)) / (2.0 * h), epsilon = 1e-8);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        type D2 = Dual<Dual<f64, 1>, 1>;
        let x: D2 = Dual { re: Dual::var(0.3, 0), eps: [Dual::constant(1.0)] };
        let f = x.sin() * x.exp();
        // f'' = 2 cos x e^x
        assert_relative_eq!(f.eps[0].eps[0], 2.0 * 0.3f64.cos() * 0.3f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn integer_powers_handle_negative_bases() {
        let x = Dual::<f64, 1>::var(-2.0, 0);
        let p = x.powi(3);
        assert_eq!(p.re, -8.0);
        assert_eq!(p.eps[0], 12.0);
        let q = x.powi(-2);
        assert_relative_eq!(q.eps[0], 0.25, epsilon = 1e-15);
    }
}
