use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::FrameAlgebroid;
use crate::chart::ChartDomain;
use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::holonomy::degree_one_unit;
use crate::linalg::{simpson_weights, Mat};

/// Orientation constant: `ω_L(γ_t, γ_s) = LEAF_AREA_SIGN·⟨α, γ_s⟩` where
/// `π^♯α = γ_t`.
pub const LEAF_AREA_SIGN: f64 = -1.0;
const TIKHONOV: f64 = 1e-12;
pub const TANGENCY_TOL: f64 = 1e-6;

/// Bivector `π = Σ_{i<j} π^{ij} ∂_i ∧ ∂_j` on a chart.
#[derive(Clone, Debug)]
pub struct PoissonBivector {
    name: String,
    domain: Arc<ChartDomain>,
    upper: Vec<ScalarField>,
}

fn upper_index(i: usize, j: usize, m: usize) -> usize {
    i * m - i * (i + 1) / 2 + (j - i - 1)
}

impl PoissonBivector {
    /// `pi(i, j)` is called for `i < j`.
    pub fn new(name: impl Into<String>, domain: Arc<ChartDomain>, mut pi: impl FnMut(usize, usize) -> ScalarField) -> Result<Self> {
        let name = name.into();
        let m = domain.dim();
        let mut upper = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let f = pi(i, j);
                if f.arity() > m {
                    return Err(Error::structural(format!("bivector '{name}' uses more than {m} coordinates")));
                }
                upper.push(f);
            }
        }
        Ok(PoissonBivector { name, domain, upper })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Arc<ChartDomain> {
        &self.domain
    }

    /// `π^{ij}` with antisymmetry applied.
    pub fn component(&self, i: usize, j: usize) -> ScalarField {
        let m = self.domain.dim();
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => ScalarField::zero(),
            std::cmp::Ordering::Less => self.upper[upper_index(i, j, m)].clone(),
            std::cmp::Ordering::Greater => {
                let f = &self.upper[upper_index(j, i, m)];
                match f.as_const() {
                    Some(v) => ScalarField::constant(-v),
                    None => ScalarField::from_expr(crate::expr::neg(f.expr().clone())),
                }
            }
        }
    }

    pub fn at<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        let m = self.domain.dim();
        let mut p = Mat::zeros(m, m);
        for i in 0..m {
            for j in i + 1..m {
                let v: S = self.upper[upper_index(i, j, m)].eval(x);
                p.set(i, j, v);
                p.set(j, i, -v);
            }
        }
        p
    }

    /// `λπ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let k = ScalarField::constant(lambda);
        let upper = self
            .upper
            .iter()
            .map(|f| match f.as_const() {
                Some(v) => ScalarField::constant(lambda * v),
                None => ScalarField::from_expr(crate::expr::mul(k.expr().clone(), f.expr().clone())),
            })
            .collect();
        PoissonBivector { name: format!("{}*{lambda}", self.name), domain: self.domain.clone(), upper }
    }

    /// Cotangent algebroid: frame `dx^i`, `ρ(dx^i) = Σ_j π^{ij} ∂_j`,
    /// `[dx^i, dx^j] = Σ_k ∂_kπ^{ij} dx^k`.
    pub fn to_cotangent_algebroid(&self) -> Result<FrameAlgebroid> {
        let m = self.domain.dim();
        let frame = self.domain.coords().iter().map(|c| format!("d{c}")).collect();
        let anchor = Mat::from_fn(m, m, |j, i| self.component(i, j));
        FrameAlgebroid::new(format!("T*{}", self.name), self.domain.clone(), frame, anchor, |i, j| {
            let f = self.component(i, j);
            (0..m).map(|k| f.derivative(k)).collect()
        })
    }
}

/// Degree-one sphere of radius `radius` about `center` in three chosen
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeafSphere {
    pub center: Vec<f64>,
    pub radius: f64,
    pub coords: [usize; 3],
}

impl LeafSphere {
    fn jet(&self, t: f64, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let u = degree_one_unit(Dual::<f64, 2>::var(t, 0), Dual::var(s, 1), 0.0);
        let mut g = self.center.clone();
        let mut gt = vec![0.0; g.len()];
        let mut gs = vec![0.0; g.len()];
        for (q, &ci) in self.coords.iter().enumerate() {
            g[ci] += self.radius * u[q].re;
            gt[ci] = self.radius * u[q].eps[0];
            gs[ci] = self.radius * u[q].eps[1];
        }
        (g, gt, gs)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AreaResult {
    pub area: f64,
    pub grid: usize,
    /// `max ‖π^♯α − γ_t‖` over the grid
    pub tangency_residual: f64,
}

// Least-squares solve of Pᵀα = γ_t (π^♯α has components Σ_i α_i π^{ij});
// returns ⟨α, γ_s⟩ and the residual.
macro_rules! fixed_node {
    ($name:ident, $m:literal) => {
        fn $name(p: &Mat<f64>, gt: &[f64], gs: &[f64]) -> Option<(f64, f64)> {
            let pt = SMatrix::<f64, $m, $m>::from_fn(|i, j| *p.get(j, i));
            let rhs = SVector::<f64, $m>::from_column_slice(gt);
            let normal = pt.tr_mul(&pt) + SMatrix::<f64, $m, $m>::identity() * TIKHONOV;
            let alpha = normal.lu().solve(&pt.tr_mul(&rhs))?;
            let res = (pt * alpha - rhs).amax();
            Some((alpha.dot(&SVector::<f64, $m>::from_column_slice(gs)), res))
        }
    };
}

fixed_node!(node3, 3);
fixed_node!(node4, 4);

fn node_dyn(p: &Mat<f64>, gt: &[f64], gs: &[f64]) -> Option<(f64, f64)> {
    let m = gt.len();
    let pt = DMatrix::from_fn(m, m, |i, j| *p.get(j, i));
    let rhs = DVector::from_column_slice(gt);
    let normal = pt.tr_mul(&pt) + DMatrix::identity(m, m) * TIKHONOV;
    let alpha = normal.lu().solve(&pt.tr_mul(&rhs))?;
    let res = (&pt * &alpha - &rhs).amax();
    Some((alpha.dot(&DVector::from_column_slice(gs)), res))
}

/// Symplectic area of a sphere inside one leaf, by Simpson on `n` nodes per axis.
pub fn leaf_symplectic_area(pi: &PoissonBivector, sphere: &LeafSphere, n: usize) -> Result<AreaResult> {
    let m = pi.domain().dim();
    if sphere.center.len() != m || sphere.coords.iter().any(|&c| c >= m) {
        return Err(Error::structural("leaf sphere does not fit the bivector's chart"));
    }
    if n < 5 || n % 2 == 0 {
        return Err(Error::usage(format!("area grid must be odd and at least 5, got {n}")));
    }
    let w = simpson_weights(n);
    let h = 1.0 / (n - 1) as f64;
    // Rows run in parallel; the final sum is taken in row order.
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|jt| -> Result<(f64, f64)> {
            let t = jt as f64 * h;
            let mut row = 0.0;
            let mut worst = 0.0f64;
            for (js, ws) in w.iter().enumerate() {
                let s = js as f64 * h;
                let (g, gt, gs) = sphere.jet(t, s);
                let p = pi.at(&g);
                let (val, res) = match m {
                    3 => node3(&p, &gt, &gs),
                    4 => node4(&p, &gt, &gs),
                    _ => node_dyn(&p, &gt, &gs),
                }
                .ok_or_else(|| Error::numeric(format!("normal equations singular at (t, s) = ({t}, {s})")))?;
                if !res.is_finite() {
                    return Err(Error::numeric(format!("non-finite leaf data at (t, s) = ({t}, {s})")));
                }
                worst = worst.max(res);
                row += ws * LEAF_AREA_SIGN * val;
            }
            Ok((row, worst))
        })
        .collect::<Result<_>>()?;
    let mut area = 0.0;
    let mut worst = 0.0f64;
    for ((row, res), wt) in rows.into_iter().zip(&w) {
        area += wt * row;
        worst = worst.max(res);
    }
    if worst > TANGENCY_TOL {
        return Err(Error::numeric(format!("sphere is not leaf-tangent (residual {worst:.3e})")));
    }
    Ok(AreaResult { area, grid: n, tangency_residual: worst })
}

/// Central-difference gradient `(∂A/∂r, ∂A/∂e)` of an area function.
pub fn mon_variation(area: impl Fn(f64, f64) -> Result<f64>, r: f64, e: f64, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::usage(format!("difference step must be positive, got {h}")));
    }
    let dr = (area(r + h, e)? - area(r - h, e)?) / (2.0 * h);
    let de = (area(r, e + h)? - area(r, e - h)?) / (2.0 * h);
    Ok((dr, de))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::check_axioms;
    use std::f64::consts::PI;

    fn lie_poisson() -> PoissonBivector {
        let d = Arc::new(ChartDomain::cube(&["x", "y", "z"], -2.0, 2.0));
        let c = ScalarField::coord;
        PoissonBivector::new("su2", d, |i, j| match (i, j) {
            (0, 1) => c(2),
            (0, 2) => ScalarField::from_expr(crate::expr::neg(c(1).expr().clone())),
            _ => c(0),
        })
        .unwrap()
    }

    #[test]
    fn unit_sphere_area() {
        let s = LeafSphere { center: vec![0.0; 3], radius: 1.0, coords: [0, 1, 2] };
        let a = leaf_symplectic_area(&lie_poisson(), &s, 101).unwrap();
        assert!((a.area - 4.0 * PI).abs() < 1e-6, "{}", a.area);
    }

    #[test]
    fn cotangent_algebroid_is_lie() {
        let a = lie_poisson().to_cotangent_algebroid().unwrap();
        let rep = check_axioms(&a, 50, 1).unwrap();
        assert!(rep.max() < 1e-12);
    }

    #[test]
    fn off_leaf_sphere_rejected() {
        let s = LeafSphere { center: vec![0.5, 0.0, 0.0], radius: 1.0, coords: [0, 1, 2] };
        assert!(leaf_symplectic_area(&lie_poisson(), &s, 21).is_err());
    }
}
