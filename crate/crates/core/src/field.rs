use std::sync::Arc;

use crate::dual::Scalar;
use crate::error::Result;
use crate::expr::{self, Expr};
use crate::linalg::Mat;

/// A scalar function of chart coordinates, evaluated over any [`Scalar`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(Arc<Expr>);

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField(Arc::new(Expr::Num(v)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn coord(i: usize) -> Self {
        ScalarField(Arc::new(Expr::Var(i)))
    }

    pub fn from_expr(e: Expr) -> Self {
        ScalarField(Arc::new(e))
    }

    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        Ok(Self::from_expr(expr::parse(src, vars)?))
    }

    #[inline]
    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match *self.0 {
            Expr::Num(v) => S::from_f64(v),
            ref e => e.eval(x),
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.0
    }

    pub fn as_const(&self) -> Option<f64> {
        self.0.as_num()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn derivative(&self, k: usize) -> Self {
        Self::from_expr(self.0.derivative(k))
    }

    /// Number of leading coordinates the field needs.
    pub fn arity(&self) -> usize {
        self.0.max_var().map_or(0, |i| i + 1)
    }
}

impl Default for ScalarField {
    fn default() -> Self {
        Self::zero()
    }
}

impl Mat<ScalarField> {
    pub fn zero_fields(rows: usize, cols: usize) -> Self {
        Mat::filled(rows, cols, ScalarField::zero())
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        self.map(|f| f.eval(x))
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(ScalarField::is_zero)
    }

    pub fn arity(&self) -> usize {
        self.iter().map(ScalarField::arity).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::seed_point;

    #[test]
    fn gradient_through_field() {
        let f = ScalarField::parse("x*y + sin(z)", &["x", "y", "z"]).unwrap();
        let g = f.eval(&seed_point(&[2.0, 3.0, 0.0]));
        assert_eq!(g.re, 6.0);
        assert_eq!(&g.eps[..3], &[3.0, 2.0, 1.0]);
    }
}
