//! A-spheres, their pullbacks to the unit square, and parallel transport.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::FrameAlgebroid;
use crate::dual::{Dual, Jet, Scalar};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::{simpson_weights, Mat};
use crate::split::{Bundle, SplitVBA};

/// Parallel frames solve `dτ/dt = −Θ τ`, `τ(t₀) = 1`.
pub const TRANSPORT_CONVENTION: &str = "dtau/dt = -Theta*tau";

/// Degree-one map of the unit square onto the unit sphere, collapsing the
/// boundary to the north pole with all first and second derivatives.
///
/// `reparam` applies a boundary-fixing warp of the square first (0 for none).
pub fn degree_one_unit<S: Scalar>(t: S, s: S, reparam: f64) -> [S; 3] {
    let two_pi = S::from_f64(2.0 * PI);
    let pi = S::from_f64(PI);
    let (t, s) = if reparam != 0.0 {
        let k = S::from_f64(reparam / (2.0 * PI));
        (t + k * (pi * t).sin() * (two_pi * s).sin(), s + k * (pi * s).sin() * (two_pi * t).sin())
    } else {
        (t, s)
    };
    let warp = |x: S| x - (two_pi * x).sin() / two_pi;
    let (u, v) = (warp(t), warp(s));
    let (su, cu) = ((pi * u).sin(), (pi * u).cos());
    let (sv, cv) = ((pi * v).sin(), (pi * v).cos());
    let (su2, sv2) = (su * su, sv * sv);
    let d = su2 + sv2 - su2 * sv2;
    if d.value() < 1e-200 {
        return [S::zero(), S::zero(), S::one()];
    }
    let two = S::from_f64(2.0);
    [
        -(two * cv * sv * su2) / d,
        -(two * cu * su * sv2) / d,
        S::one() - two * su2 * sv2 / d,
    ]
}

#[derive(Clone, Debug)]
pub enum SphereKind {
    /// `γ`, `a`, `b` as expressions in `(t, s)`.
    Expressions { gamma: Vec<ScalarField>, a: Vec<ScalarField>, b: Vec<ScalarField> },
    /// `γ` given; `a = ∂_t γ`, `b = ∂_s γ` in a coordinate frame.
    TangentLift { gamma: Vec<ScalarField> },
    /// Built-in degree-one sphere with tangent lift.
    DegreeOne { center: Vec<f64>, radius: f64, coords: [usize; 3], reparam: f64 },
    /// Degree-one sphere with `a = (γ_t × p)/|p|²`, `b = (γ_s × p)/|p|²`,
    /// `p = γ − center`, for rank-3 frames anchored by `ρ(α) = p × α`.
    /// Satisfies the anchor equation but not the bracket equation.
    LeafLift { center: Vec<f64>, radius: f64, coords: [usize; 3] },
    /// Constant `γ = point`; `a = ∂_tφ·direction`, `b = ∂_sφ·direction`
    /// with `φ = amplitude·sin²(πt)·sin²(πs)`.
    IsotropyBump { point: Vec<f64>, direction: Vec<f64>, amplitude: f64 },
}

#[derive(Clone, Debug)]
pub struct SphereValues<S> {
    pub gamma: Vec<S>,
    pub a: Vec<S>,
    pub b: Vec<S>,
}

/// An A-sphere `σ = a dt + b ds` over `γ : I² → M`.
#[derive(Clone, Debug)]
pub struct ASphereFrame {
    id: String,
    base: Arc<FrameAlgebroid>,
    kind: SphereKind,
}

fn seeded<S: Scalar>(t: S, s: S) -> (Dual<S, 2>, Dual<S, 2>) {
    (Dual::var(t, 0), Dual::var(s, 1))
}

impl ASphereFrame {
    pub fn new(id: impl Into<String>, base: Arc<FrameAlgebroid>, kind: SphereKind) -> Result<Self> {
        let id = id.into();
        let (r, m) = (base.rank(), base.dim());
        let bad = |msg: String| Err(Error::structural(format!("sphere '{id}': {msg}")));
        match &kind {
            SphereKind::Expressions { gamma, a, b } => {
                if gamma.len() != m || a.len() != r || b.len() != r {
                    return bad(format!("need {m} gamma and {r} a/b components"));
                }
                if gamma.iter().chain(a).chain(b).any(|f| f.arity() > 2) {
                    return bad("expressions may only use t and s".into());
                }
            }
            SphereKind::TangentLift { gamma } => {
                if gamma.len() != m || r != m {
                    return bad(format!("tangent lift needs {m} gamma components and rank {m}"));
                }
                if gamma.iter().any(|f| f.arity() > 2) {
                    return bad("expressions may only use t and s".into());
                }
            }
            SphereKind::DegreeOne { center, coords, .. } => {
                if center.len() != m || r != m || coords.iter().any(|&c| c >= m) {
                    return bad("degree-one tangent lift needs a rank-m coordinate frame".into());
                }
            }
            SphereKind::LeafLift { center, coords, .. } => {
                if center.len() != m || r != 3 || coords.iter().any(|&c| c >= m) {
                    return bad("leaf lift needs a rank-3 frame".into());
                }
            }
            SphereKind::IsotropyBump { point, direction, .. } => {
                if point.len() != m || direction.len() != r {
                    return bad(format!("need a {m}-point and an {r}-direction"));
                }
            }
        }
        Ok(ASphereFrame { id, base, kind })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn base(&self) -> &Arc<FrameAlgebroid> {
        &self.base
    }

    pub fn kind(&self) -> &SphereKind {
        &self.kind
    }

    pub fn eval<S: Scalar>(&self, t: S, s: S) -> SphereValues<S> {
        let r = self.base.rank();
        match &self.kind {
            SphereKind::Expressions { gamma, a, b } => {
                let p = [t, s];
                SphereValues {
                    gamma: gamma.iter().map(|f| f.eval(&p)).collect(),
                    a: a.iter().map(|f| f.eval(&p)).collect(),
                    b: b.iter().map(|f| f.eval(&p)).collect(),
                }
            }
            SphereKind::TangentLift { gamma } => {
                let (td, sd) = seeded(t, s);
                let g: Vec<Dual<S, 2>> = gamma.iter().map(|f| f.eval(&[td, sd])).collect();
                SphereValues {
                    gamma: g.iter().map(|v| v.re).collect(),
                    a: g.iter().map(|v| v.eps[0]).collect(),
                    b: g.iter().map(|v| v.eps[1]).collect(),
                }
            }
            SphereKind::DegreeOne { center, radius, coords, reparam } => {
                let (td, sd) = seeded(t, s);
                let u = degree_one_unit(td, sd, *reparam);
                let mut gamma: Vec<S> = center.iter().map(|&c| S::from_f64(c)).collect();
                let mut a = vec![S::zero(); r];
                let mut b = vec![S::zero(); r];
                for (q, &ci) in coords.iter().enumerate() {
                    gamma[ci] += u[q].re.scale(*radius);
                    a[ci] = u[q].eps[0].scale(*radius);
                    b[ci] = u[q].eps[1].scale(*radius);
                }
                SphereValues { gamma, a, b }
            }
            SphereKind::LeafLift { center, radius, coords } => {
                let (td, sd) = seeded(t, s);
                let u = degree_one_unit(td, sd, 0.0);
                let mut gamma: Vec<S> = center.iter().map(|&c| S::from_f64(c)).collect();
                let p: Vec<S> = u.iter().map(|v| v.re.scale(*radius)).collect();
                let pt: Vec<S> = u.iter().map(|v| v.eps[0].scale(*radius)).collect();
                let ps: Vec<S> = u.iter().map(|v| v.eps[1].scale(*radius)).collect();
                for (q, &ci) in coords.iter().enumerate() {
                    gamma[ci] += p[q];
                }
                let r2 = S::from_f64(radius * radius);
                let cross = |x: &[S], y: &[S]| -> Vec<S> {
                    vec![
                        (x[1] * y[2] - x[2] * y[1]) / r2,
                        (x[2] * y[0] - x[0] * y[2]) / r2,
                        (x[0] * y[1] - x[1] * y[0]) / r2,
                    ]
                };
                SphereValues { gamma, a: cross(&pt, &p), b: cross(&ps, &p) }
            }
            SphereKind::IsotropyBump { point, direction, amplitude } => {
                let (td, sd) = seeded(t, s);
                let pi = Dual::<S, 2>::from_f64(PI);
                let (st, ss) = ((pi * td).sin(), (pi * sd).sin());
                let phi = st * st * ss * ss;
                let (pt, ps) = (phi.eps[0].scale(*amplitude), phi.eps[1].scale(*amplitude));
                SphereValues {
                    gamma: point.iter().map(|&c| S::from_f64(c)).collect(),
                    a: direction.iter().map(|&d| pt.scale(d)).collect(),
                    b: direction.iter().map(|&d| ps.scale(d)).collect(),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct EdgeResidual {
    /// max |a| along the edge
    pub a: f64,
    /// max |b| along the edge
    pub b: f64,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct EdgeResiduals {
    pub s0: EdgeResidual,
    pub s1: EdgeResidual,
    pub t0: EdgeResidual,
    pub t1: EdgeResidual,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SphereReport {
    pub sphere: String,
    pub n_grid: usize,
    pub interior_pde: f64,
    pub interior_anchor: f64,
    pub interior_residual: f64,
    /// max of |a| on s-edges, |b| on t-edges, and the base-point spread
    pub boundary_residual: f64,
    pub base_point_spread: f64,
    pub edges: EdgeResiduals,
}

impl SphereReport {
    pub fn max(&self) -> f64 {
        self.interior_residual.max(self.boundary_residual)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Checks `∂_t b − ∂_s a + c(γ)(a, b) = 0`, `ρ(a) = γ_t`, `ρ(b) = γ_s` on the
/// grid, and the boundary conditions.
pub fn sphere_morphism_residual(sphere: &ASphereFrame, n_grid: usize) -> Result<SphereReport> {
    if n_grid < 3 {
        return Err(Error::usage("n_grid must be at least 3"));
    }
    let base = &sphere.base;
    let (r, m) = (base.rank(), base.dim());
    let h = 1.0 / (n_grid - 1) as f64;
    let mut rep = SphereReport {
        sphere: sphere.id.clone(),
        n_grid,
        interior_pde: 0.0,
        interior_anchor: 0.0,
        interior_residual: 0.0,
        boundary_residual: 0.0,
        base_point_spread: 0.0,
        edges: EdgeResiduals::default(),
    };
    let g00: Vec<f64> = sphere.eval(0.0, 0.0).gamma;
    for i in 0..n_grid {
        for j in 0..n_grid {
            let (t, s) = (i as f64 * h, j as f64 * h);
            let v = sphere.eval(Jet::var(t, 0), Jet::var(s, 1));
            let gamma: Vec<f64> = v.gamma.iter().map(|g| g.re).collect();
            base.domain().check(&gamma)?;
            let a: Vec<f64> = v.a.iter().map(|g| g.re).collect();
            let b: Vec<f64> = v.b.iter().map(|g| g.re).collect();
            let rho = base.anchor_at(&gamma);
            let c = base.structure_at(&gamma);
            let mut pde: f64 = 0.0;
            for k in 0..r {
                let mut acc = v.b[k].eps[0] - v.a[k].eps[1];
                for p in 0..r {
                    for q in 0..r {
                        acc += c.get(k, p, q) * a[p] * b[q];
                    }
                }
                pde = pde.max(acc.abs());
            }
            let ra = rho.matvec(&a);
            let rb = rho.matvec(&b);
            let mut anc: f64 = 0.0;
            for mu in 0..m {
                anc = anc.max((ra[mu] - v.gamma[mu].eps[0]).abs());
                anc = anc.max((rb[mu] - v.gamma[mu].eps[1]).abs());
            }
            if !(pde.is_finite() && anc.is_finite()) {
                return Err(Error::numeric(format!("non-finite sphere residual at (t, s) = ({t}, {s})")));
            }
            rep.interior_pde = rep.interior_pde.max(pde);
            rep.interior_anchor = rep.interior_anchor.max(anc);

            let on_edge = i == 0 || j == 0 || i == n_grid - 1 || j == n_grid - 1;
            if on_edge {
                let spread = gamma.iter().zip(&g00).fold(0.0f64, |mx, (x, y)| mx.max((x - y).abs()));
                rep.base_point_spread = rep.base_point_spread.max(spread);
                let er = EdgeResidual { a: norm_inf(&a), b: norm_inf(&b) };
                let upd = |slot: &mut EdgeResidual| {
                    slot.a = slot.a.max(er.a);
                    slot.b = slot.b.max(er.b);
                };
                if j == 0 {
                    upd(&mut rep.edges.s0);
                }
                if j == n_grid - 1 {
                    upd(&mut rep.edges.s1);
                }
                if i == 0 {
                    upd(&mut rep.edges.t0);
                }
                if i == n_grid - 1 {
                    upd(&mut rep.edges.t1);
                }
            }
        }
    }
    rep.interior_residual = rep.interior_pde.max(rep.interior_anchor);
    let e = &rep.edges;
    rep.boundary_residual = e.s0.a.max(e.s1.a).max(e.t0.b).max(e.t1.b).max(rep.base_point_spread);
    Ok(rep)
}

/// Connection forms and curvature integrand of a sphere pulled back to I².
#[derive(Clone, Debug)]
pub struct PullbackValues<S> {
    pub theta_e_t: Mat<S>,
    pub theta_e_s: Mat<S>,
    pub theta_c_t: Mat<S>,
    pub theta_c_s: Mat<S>,
    /// `c×e`
    pub w: Mat<S>,
}

impl<S: Scalar> PullbackValues<S> {
    pub fn theta_t(&self, bundle: Bundle) -> &Mat<S> {
        match bundle {
            Bundle::E => &self.theta_e_t,
            Bundle::C => &self.theta_c_t,
        }
    }

    pub fn theta_s(&self, bundle: Bundle) -> &Mat<S> {
        match bundle {
            Bundle::E => &self.theta_e_s,
            Bundle::C => &self.theta_c_s,
        }
    }
}

/// A family of connection forms and a `c×e` integrand on the unit square.
pub trait PullbackFamily: Sync {
    /// `(e, c)`
    fn ranks(&self) -> (usize, usize);
    fn id(&self) -> &str;
    fn values(&self, t: f64, s: f64) -> PullbackValues<f64>;
    /// Values with first derivatives in `(t, s)`.
    fn jet(&self, t: Jet, s: Jet) -> PullbackValues<Jet>;
}

/// Pullback of split data along an A-sphere.
#[derive(Clone, Debug)]
pub struct ASpherePullback {
    sphere: ASphereFrame,
    vba: Arc<SplitVBA>,
}

fn same_base(a: &FrameAlgebroid, b: &FrameAlgebroid) -> bool {
    a.name() == b.name() && a.frame() == b.frame() && a.domain().coords() == b.domain().coords()
}

pub fn pullback_sphere(sphere: &ASphereFrame, vba: Arc<SplitVBA>) -> Result<ASpherePullback> {
    if sphere.base.rank() != vba.base().rank() || !same_base(&sphere.base, vba.base()) {
        return Err(Error::structural(format!(
            "sphere '{}' lives over '{}' (rank {}), split '{}' over '{}' (rank {})",
            sphere.id,
            sphere.base.name(),
            sphere.base.rank(),
            vba.name(),
            vba.base().name(),
            vba.base().rank()
        )));
    }
    Ok(ASpherePullback { sphere: sphere.clone(), vba })
}

impl ASpherePullback {
    pub fn sphere(&self) -> &ASphereFrame {
        &self.sphere
    }

    pub fn split(&self) -> &Arc<SplitVBA> {
        &self.vba
    }

    pub fn eval<S: Scalar>(&self, t: S, s: S) -> PullbackValues<S> {
        let v = self.sphere.eval(t, s);
        let r = self.vba.base().rank();
        let (e, c) = (self.vba.rank_e(), self.vba.rank_c());
        let form = |conn: &[Mat<ScalarField>], coef: &[S], n: usize| {
            let mut acc = Mat::zeros(n, n);
            for (i, g) in conn.iter().enumerate() {
                if !g.is_zero() {
                    acc.axpy(coef[i], &g.eval(&v.gamma));
                }
            }
            acc
        };
        let mut w = Mat::zeros(c, e);
        for i in 0..r {
            for j in i + 1..r {
                let wij = self.vba.omega_field(i, j);
                if !wij.is_zero() {
                    let k = v.a[i] * v.b[j] - v.a[j] * v.b[i];
                    w.axpy(k, &wij.eval(&v.gamma));
                }
            }
        }
        PullbackValues {
            theta_e_t: form(self.vba.connection(Bundle::E), &v.a, e),
            theta_e_s: form(self.vba.connection(Bundle::E), &v.b, e),
            theta_c_t: form(self.vba.connection(Bundle::C), &v.a, c),
            theta_c_s: form(self.vba.connection(Bundle::C), &v.b, c),
            w,
        }
    }
}

impl PullbackFamily for ASpherePullback {
    fn ranks(&self) -> (usize, usize) {
        (self.vba.rank_e(), self.vba.rank_c())
    }

    fn id(&self) -> &str {
        self.sphere.id()
    }

    fn values(&self, t: f64, s: f64) -> PullbackValues<f64> {
        self.eval(t, s)
    }

    fn jet(&self, t: Jet, s: Jet) -> PullbackValues<Jet> {
        self.eval(t, s)
    }
}

type JetFn = dyn Fn(Jet, Jet) -> PullbackValues<Jet> + Send + Sync;

/// A pullback family given directly by a closure over jets.
pub struct FnPullback {
    id: String,
    e: usize,
    c: usize,
    f: Box<JetFn>,
}

impl FnPullback {
    pub fn new(
        id: impl Into<String>,
        e: usize,
        c: usize,
        f: impl Fn(Jet, Jet) -> PullbackValues<Jet> + Send + Sync + 'static,
    ) -> Self {
        FnPullback { id: id.into(), e, c, f: Box::new(f) }
    }
}

impl PullbackFamily for FnPullback {
    fn ranks(&self) -> (usize, usize) {
        (self.e, self.c)
    }

    fn id(&self) -> &str {
        &self.id
    }

    fn values(&self, t: f64, s: f64) -> PullbackValues<f64> {
        let v = (self.f)(Jet::constant(t), Jet::constant(s));
        PullbackValues {
            theta_e_t: v.theta_e_t.values(),
            theta_e_s: v.theta_e_s.values(),
            theta_c_t: v.theta_c_t.values(),
            theta_c_s: v.theta_c_s.values(),
            w: v.w.values(),
        }
    }

    fn jet(&self, t: Jet, s: Jet) -> PullbackValues<Jet> {
        (self.f)(t, s)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TransportResult {
    pub holonomy: Mat<f64>,
    pub s: f64,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub convention: &'static str,
}

/// One RK4 step of `dτ/dt = −Θτ` given `Θ` at the start, midpoint and end.
fn rk4_step(y: &Mat<f64>, h: f64, th0: &Mat<f64>, thm: &Mat<f64>, th1: &Mat<f64>) -> Mat<f64> {
    let k1 = th0.matmul(y).scale(-1.0);
    let mut y2 = y.clone();
    y2.axpy(0.5 * h, &k1);
    let k2 = thm.matmul(&y2).scale(-1.0);
    let mut y3 = y.clone();
    y3.axpy(0.5 * h, &k2);
    let k3 = thm.matmul(&y3).scale(-1.0);
    let mut y4 = y.clone();
    y4.axpy(h, &k3);
    let k4 = th1.matmul(&y4).scale(-1.0);
    let mut out = y.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    out
}

/// RK4 solution at every node, from `Θ` sampled on the half-step grid
/// (`2N + 1` values for `N` steps).
pub(crate) fn transport_nodes(half: &[Mat<f64>], h: f64) -> Vec<Mat<f64>> {
    let n = (half.len() - 1) / 2;
    let dim = half[0].rows();
    let mut out = Vec::with_capacity(n + 1);
    let mut y = Mat::identity(dim);
    out.push(y.clone());
    for k in 0..n {
        y = rk4_step(&y, h, &half[2 * k], &half[2 * k + 1], &half[2 * k + 2]);
        out.push(y.clone());
    }
    out
}

/// Holonomy `hol_{t₁,t₀}` of `Θ` along one slice, `steps` uniform RK4 steps.
pub fn transport(theta: impl Fn(f64) -> Mat<f64>, s: f64, t0: f64, t1: f64, steps: usize) -> Result<TransportResult> {
    if steps < 2 {
        return Err(Error::usage("transport needs at least 2 steps"));
    }
    if !(0.0..=1.0).contains(&t0) || !(0.0..=1.0).contains(&t1) || t0 > t1 {
        return Err(Error::usage(format!("need 0 <= t0 <= t1 <= 1, got [{t0}, {t1}]")));
    }
    let h = (t1 - t0) / steps as f64;
    let half: Vec<Mat<f64>> = (0..=2 * steps).map(|k| theta(t0 + 0.5 * h * k as f64)).collect();
    let holonomy = transport_nodes(&half, h).pop().expect("at least one node");
    if !holonomy.is_finite() {
        return Err(Error::numeric(format!("transport diverged on slice s = {s}")));
    }
    Ok(TransportResult { holonomy, s, t0, t1, steps, convention: TRANSPORT_CONVENTION })
}

fn slice_holonomy(p: &dyn PullbackFamily, bundle: Bundle, s: f64, n: usize) -> Mat<f64> {
    let h = 1.0 / n as f64;
    let half: Vec<Mat<f64>> = (0..=2 * n).map(|k| p.values(0.5 * h * k as f64, s).theta_t(bundle).clone()).collect();
    transport_nodes(&half, h).pop().expect("nodes")
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct HolonomyCurvatureReport {
    pub family: String,
    pub bundle: Bundle,
    pub n: usize,
    pub residual: f64,
    /// Largest `|Θ_S(1,s)H(1) − H(1)Θ_S(0,s)|`; zero for A-spheres.
    pub boundary_term: f64,
    pub convention: &'static str,
}

/// Compares a central difference in `s` of the slice holonomy with
/// `∫ hol_{1,t} Ω hol_{t,0} dt − Θ_S(1,s) hol + hol Θ_S(0,s)`,
/// `Ω = ∂_tΘ_S − ∂_sΘ_T + [Θ_T, Θ_S]`.
pub fn holonomy_curvature_residual(p: &dyn PullbackFamily, bundle: Bundle, n: usize) -> Result<HolonomyCurvatureReport> {
    if n < 16 {
        return Err(Error::usage("holonomy check needs N >= 16"));
    }
    let h = 1.0 / n as f64;
    let w = simpson_weights(n + 1);
    let per_slice: Vec<(f64, f64)> = (1..n)
        .into_par_iter()
        .map(|j| {
            let s = j as f64 * h;
            let plus = slice_holonomy(p, bundle, s + h, n);
            let minus = slice_holonomy(p, bundle, s - h, n);
            let fd = (&plus - &minus).scale(0.5 / h);

            let half: Vec<Mat<f64>> =
                (0..=2 * n).map(|k| p.values(0.5 * h * k as f64, s).theta_t(bundle).clone()).collect();
            let nodes = transport_nodes(&half, h);
            let h1 = nodes[n].clone();
            let dim = h1.rows();
            let mut integral = Mat::zeros(dim, dim);
            for (k, hk) in nodes.iter().enumerate() {
                let jv = p.jet(Jet::var(k as f64 * h, 0), Jet::var(s, 1));
                let (tt, ts) = (jv.theta_t(bundle), jv.theta_s(bundle));
                let omega = Mat::from_fn(dim, dim, |a, b| ts.get(a, b).eps[0] - tt.get(a, b).eps[1]);
                let omega = &omega + &tt.values().commutator(&ts.values());
                let hinv = hk.inverse().unwrap_or_else(|| Mat::filled(dim, dim, f64::NAN));
                let term = h1.matmul(&hinv).matmul(&omega).matmul(hk);
                integral.axpy(w[k], &term);
            }
            let ts1 = p.values(1.0, s).theta_s(bundle).clone();
            let ts0 = p.values(0.0, s).theta_s(bundle).clone();
            let boundary = &h1.matmul(&ts0) - &ts1.matmul(&h1);
            let rhs = &integral + &boundary;
            ((&fd - &rhs).max_abs(), boundary.max_abs())
        })
        .collect();
    let mut residual: f64 = 0.0;
    let mut boundary_term: f64 = 0.0;
    for (res, b) in per_slice {
        if !res.is_finite() {
            return Err(Error::numeric("non-finite holonomy-curvature residual"));
        }
        residual = residual.max(res);
        boundary_term = boundary_term.max(b);
    }
    Ok(HolonomyCurvatureReport {
        family: p.id().to_string(),
        bundle,
        n,
        residual,
        boundary_term,
        convention: TRANSPORT_CONVENTION,
    })
}
