use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::algebroid::{pair_count, pair_index, FrameAlgebroid, LinearCoreSplit};
use crate::chart::ChartDomain;
use crate::dual::{seed_point, Grad, Scalar};
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::field::ScalarField;
use crate::linalg::Mat;

/// Sign `s` in `[h a, h b] = h[a, b] + s·ω(a, b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConventionSign {
    #[default]
    Plus,
    Minus,
}

impl ConventionSign {
    pub fn value(self) -> f64 {
        match self {
            ConventionSign::Plus => 1.0,
            ConventionSign::Minus => -1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "+1" | "1" | "+" => Some(ConventionSign::Plus),
            "-1" | "-" => Some(ConventionSign::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for ConventionSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConventionSign::Plus => "+1",
            ConventionSign::Minus => "-1",
        })
    }
}

impl Serialize for ConventionSign {
    fn serialize<Z: Serializer>(&self, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        s.serialize_i8(self.value() as i8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bundle {
    E,
    C,
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bundle::E => "E",
            Bundle::C => "C",
        })
    }
}

/// Split VB-algebroid: base algebroid plus `(∂, Γᴱ, Γᶜ, ω)` in frames.
#[derive(Clone, Debug)]
pub struct SplitVBA {
    name: String,
    base: Arc<FrameAlgebroid>,
    side: Vec<String>,
    core: Vec<String>,
    core_anchor: Mat<ScalarField>,
    conn_e: Vec<Mat<ScalarField>>,
    conn_c: Vec<Mat<ScalarField>>,
    omega: Vec<Mat<ScalarField>>,
    fiber_bounds: Vec<(f64, f64)>,
}

impl SplitVBA {
    /// `omega(i, j)` is called for `i < j` and must return a `c×e` matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        base: Arc<FrameAlgebroid>,
        side: Vec<String>,
        core: Vec<String>,
        core_anchor: Mat<ScalarField>,
        conn_e: Vec<Mat<ScalarField>>,
        conn_c: Vec<Mat<ScalarField>>,
        mut omega: impl FnMut(usize, usize) -> Mat<ScalarField>,
    ) -> Result<Self> {
        let name = name.into();
        let (r, m) = (base.rank(), base.dim());
        let (e, c) = (side.len(), core.len());
        let bad = |what: String| Err(Error::structural(format!("split '{name}': {what}")));
        if e == 0 || c == 0 {
            return bad("side and core ranks must be positive".into());
        }
        if core_anchor.shape() != (e, c) {
            return bad(format!("core anchor is {:?}, expected {e}x{c}", core_anchor.shape()));
        }
        if conn_e.len() != r || conn_c.len() != r {
            return bad(format!("need {r} connection matrices per bundle"));
        }
        if conn_e.iter().any(|g| g.shape() != (e, e)) || conn_c.iter().any(|g| g.shape() != (c, c)) {
            return bad("connection matrix of the wrong shape".into());
        }
        let mut table = Vec::with_capacity(pair_count(r));
        for i in 0..r {
            for j in i + 1..r {
                let w = omega(i, j);
                if w.shape() != (c, e) {
                    return bad(format!("omega({i},{j}) is {:?}, expected {c}x{e}", w.shape()));
                }
                table.push(w);
            }
        }
        let arity = std::iter::once(&core_anchor)
            .chain(&conn_e)
            .chain(&conn_c)
            .chain(&table)
            .map(Mat::arity)
            .max()
            .unwrap_or(0);
        if arity > m {
            return bad(format!("fields use {arity} coordinates, base chart has {m}"));
        }
        for n in side.iter().chain(&core) {
            if base.domain().coord_index(n).is_some() || base.frame_index(n).is_some() {
                return bad(format!("name '{n}' collides with the base chart or frame"));
            }
        }
        Ok(SplitVBA {
            name,
            base,
            side,
            core,
            core_anchor,
            conn_e,
            conn_c,
            omega: table,
            fiber_bounds: vec![(-1.0, 1.0); e],
        })
    }

    pub fn with_fiber_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.side.len() {
            return Err(Error::structural("one fiber interval per side coordinate"));
        }
        self.fiber_bounds = bounds;
        Ok(self)
    }

    /// Same data with `ω` replaced.
    pub fn with_omega(&self, mut omega: impl FnMut(usize, usize) -> Mat<ScalarField>) -> Result<Self> {
        SplitVBA::new(
            self.name.clone(),
            self.base.clone(),
            self.side.clone(),
            self.core.clone(),
            self.core_anchor.clone(),
            self.conn_e.clone(),
            self.conn_c.clone(),
            |i, j| omega(i, j),
        )
        .and_then(|v| v.with_fiber_bounds(self.fiber_bounds.clone()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> &Arc<FrameAlgebroid> {
        &self.base
    }

    pub fn side_names(&self) -> &[String] {
        &self.side
    }

    pub fn core_names(&self) -> &[String] {
        &self.core
    }

    pub fn rank_e(&self) -> usize {
        self.side.len()
    }

    pub fn rank_c(&self) -> usize {
        self.core.len()
    }

    pub fn core_anchor(&self) -> &Mat<ScalarField> {
        &self.core_anchor
    }

    pub fn connection(&self, bundle: Bundle) -> &[Mat<ScalarField>] {
        match bundle {
            Bundle::E => &self.conn_e,
            Bundle::C => &self.conn_c,
        }
    }

    pub fn fiber_bounds(&self) -> &[(f64, f64)] {
        &self.fiber_bounds
    }

    /// `ω_ij` as stored (`i < j`).
    pub fn omega_field(&self, i: usize, j: usize) -> &Mat<ScalarField> {
        &self.omega[pair_index(i, j, self.base.rank())]
    }

    /// `ω_ij(x)` with antisymmetry applied.
    pub fn omega_at<S: Scalar>(&self, i: usize, j: usize, x: &[S]) -> Mat<S> {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => Mat::zeros(self.rank_c(), self.rank_e()),
            Less => self.omega_field(i, j).eval(x),
            Greater => self.omega_field(j, i).eval(x).scale(-S::one()),
        }
    }

    pub fn bundle_rank(&self, bundle: Bundle) -> usize {
        match bundle {
            Bundle::E => self.rank_e(),
            Bundle::C => self.rank_c(),
        }
    }
}

fn along(m: &Mat<Grad>, v: &[f64]) -> Mat<f64> {
    m.map(|g| g.directional(v))
}

/// Curvature of one of the two connections of a split.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureField<'a> {
    vba: &'a SplitVBA,
    bundle: Bundle,
}

/// `R_ij = ρ_i(Γ_j) − ρ_j(Γ_i) + [Γ_i, Γ_j] − c^k_ij Γ_k`.
pub fn curvature(vba: &SplitVBA, bundle: Bundle) -> CurvatureField<'_> {
    CurvatureField { vba, bundle }
}

impl CurvatureField<'_> {
    pub fn bundle(&self) -> Bundle {
        self.bundle
    }

    /// All `R_ij(x)`, `i < j`, in pair order.
    pub fn at(&self, x: &[f64]) -> Result<Vec<Mat<f64>>> {
        let base = self.vba.base();
        base.domain().check(x)?;
        Ok(curvature_values(self.vba, self.bundle, x))
    }

    pub fn get(&self, i: usize, j: usize, x: &[f64]) -> Result<Mat<f64>> {
        let r = self.vba.base().rank();
        let all = self.at(x)?;
        Ok(match i.cmp(&j) {
            std::cmp::Ordering::Equal => Mat::zeros(self.vba.bundle_rank(self.bundle), self.vba.bundle_rank(self.bundle)),
            std::cmp::Ordering::Less => all[pair_index(i, j, r)].clone(),
            std::cmp::Ordering::Greater => all[pair_index(j, i, r)].scale(-1.0),
        })
    }
}

fn curvature_values(vba: &SplitVBA, bundle: Bundle, x: &[f64]) -> Vec<Mat<f64>> {
    let base = vba.base();
    let r = base.rank();
    let xg = seed_point(x);
    let gam: Vec<Mat<Grad>> = vba.connection(bundle).iter().map(|g| g.eval(&xg)).collect();
    let gv: Vec<Mat<f64>> = gam.iter().map(Mat::values).collect();
    let rho = base.anchor_at(x);
    let c = base.structure_at(x);
    let mut out = Vec::with_capacity(pair_count(r));
    for i in 0..r {
        for j in i + 1..r {
            let mut rij = &along(&gam[j], &rho.column(i)) - &along(&gam[i], &rho.column(j));
            rij = &rij + &gv[i].commutator(&gv[j]);
            for (k, gk) in gv.iter().enumerate() {
                rij.axpy(-c.get(k, i, j), gk);
            }
            out.push(rij);
        }
    }
    out
}

/// `∇^Hom_i φ = ρ_i(φ) + Γᶜ_i φ − φ Γᴱ_i` for a jet-valued `φ`.
fn hom_derivative(phi: &Mat<Grad>, rho_i: &[f64], gc_i: &Mat<f64>, ge_i: &Mat<f64>) -> Mat<f64> {
    let pv = phi.values();
    &(&along(phi, rho_i) + &gc_i.matmul(&pv)) - &pv.matmul(ge_i)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CompatReport {
    pub split: String,
    pub n_points: usize,
    pub seed: u64,
    pub convention_sign: ConventionSign,
    /// `ρ_i(∂) + Γᴱ_i ∂ − ∂ Γᶜ_i`
    pub core_anchor_intertwining: f64,
    /// `Rᴱ + s·∂ω`
    pub curvature_e: f64,
    /// `Rᶜ + s·ω∂`
    pub curvature_c: f64,
    /// Koszul `d_∇ω` on frame triples.
    pub omega_closedness: f64,
    /// `max |∇^Hom_i ω_jk|`, frame dependent; informational only.
    pub omega_frame_parallel: f64,
}

impl CompatReport {
    /// Largest of the four relations (the frame-parallel figure is excluded).
    pub fn max(&self) -> f64 {
        self.core_anchor_intertwining.max(self.curvature_e).max(self.curvature_c).max(self.omega_closedness)
    }
}

pub fn compat_residuals(vba: &SplitVBA, n_points: usize, seed: u64, sign: ConventionSign) -> Result<CompatReport> {
    if n_points == 0 {
        return Err(Error::usage("n_points must be at least 1"));
    }
    let base = vba.base();
    let r = base.rank();
    let s = sign.value();
    let pts = base.domain().sample(n_points, seed)?;
    let mut rep = CompatReport {
        split: vba.name.clone(),
        n_points,
        seed,
        convention_sign: sign,
        core_anchor_intertwining: 0.0,
        curvature_e: 0.0,
        curvature_c: 0.0,
        omega_closedness: 0.0,
        omega_frame_parallel: 0.0,
    };
    for x in &pts {
        let xg = seed_point(x);
        let rho = base.anchor_at(x);
        let c = base.structure_at(x);
        let d_j = vba.core_anchor.eval(&xg);
        let d = d_j.values();
        let ge: Vec<Mat<f64>> = vba.conn_e.iter().map(|g| g.eval(x)).collect();
        let gc: Vec<Mat<f64>> = vba.conn_c.iter().map(|g| g.eval(x)).collect();
        let omega_j: Vec<Vec<Mat<Grad>>> =
            (0..r).map(|i| (0..r).map(|j| vba.omega_at(i, j, &xg)).collect()).collect();
        let omega_v: Vec<Vec<Mat<f64>>> = omega_j.iter().map(|row| row.iter().map(Mat::values).collect()).collect();

        for i in 0..r {
            let res = &(&along(&d_j, &rho.column(i)) + &ge[i].matmul(&d)) - &d.matmul(&gc[i]);
            rep.core_anchor_intertwining = rep.core_anchor_intertwining.max(res.max_abs());
        }

        let re = curvature_values(vba, Bundle::E, x);
        let rc = curvature_values(vba, Bundle::C, x);
        for i in 0..r {
            for j in i + 1..r {
                let p = pair_index(i, j, r);
                let w = &omega_v[i][j];
                let mut a = re[p].clone();
                a.axpy(s, &d.matmul(w));
                let mut b = rc[p].clone();
                b.axpy(s, &w.matmul(&d));
                rep.curvature_e = rep.curvature_e.max(a.max_abs());
                rep.curvature_c = rep.curvature_c.max(b.max_abs());
            }
        }

        let nabla = |i: usize, j: usize, k: usize| hom_derivative(&omega_j[j][k], &rho.column(i), &gc[i], &ge[i]);
        for i in 0..r {
            for j in 0..r {
                for k in j + 1..r {
                    rep.omega_frame_parallel = rep.omega_frame_parallel.max(nabla(i, j, k).max_abs());
                }
            }
        }
        for i in 0..r {
            for j in i + 1..r {
                for k in j + 1..r {
                    let mut acc = Mat::zeros(vba.rank_c(), vba.rank_e());
                    for (p, q, t) in [(i, j, k), (j, k, i), (k, i, j)] {
                        acc = &acc + &nabla(p, q, t);
                        for l in 0..r {
                            acc.axpy(-c.get(l, p, q), &omega_v[l][t]);
                        }
                    }
                    rep.omega_closedness = rep.omega_closedness.max(acc.max_abs());
                }
            }
        }
    }
    Ok(rep)
}

/// The total algebroid `D → E` in the frame `(h e_1..h e_r, c̄_1..c̄_c)` over
/// the chart `(x, ξ)`, `ξ` the fiber coordinates of `E`.
pub fn build_total_algebroid(vba: &SplitVBA, sign: ConventionSign) -> Result<FrameAlgebroid> {
    let base = vba.base();
    let (r, m) = (base.rank(), base.dim());
    let (e, c) = (vba.rank_e(), vba.rank_c());
    let bd = base.domain();
    let coords: Vec<String> = bd.coords().iter().chain(&vba.side).cloned().collect();
    let bounds: Vec<(f64, f64)> = bd.bounds().iter().chain(&vba.fiber_bounds).copied().collect();
    let domain = Arc::new(ChartDomain::with_ball_dims(
        coords,
        bounds,
        bd.excluded_radius(),
        bd.ball_dims(),
        bd.sample_count(),
    )?);
    let frame: Vec<String> = base.frame().iter().chain(&vba.core).cloned().collect();
    let xi = |b: usize| Expr::Var(m + b);
    let fe = |f: &ScalarField| f.expr().clone();

    let anchor = Mat::from_fn(m + e, r + c, |row, col| {
        let ex = match (row < m, col < r) {
            (true, true) => fe(base.anchor().get(row, col)),
            (true, false) => Expr::Num(0.0),
            (false, true) => {
                let a = row - m;
                expr::neg(expr::sum((0..e).map(|b| expr::mul(fe(vba.conn_e[col].get(a, b)), xi(b)))))
            }
            (false, false) => fe(vba.core_anchor.get(row - m, col - r)),
        };
        ScalarField::from_expr(ex)
    });

    let s = sign.value();
    let d = FrameAlgebroid::new(format!("{}-total", vba.name), domain, frame, anchor, |i, j| {
        (0..r + c)
            .map(|k| {
                let ex = if j < r {
                    if k < r {
                        fe(&base.structure(i, j, k))
                    } else {
                        let w = vba.omega_field(i, j);
                        let lin = expr::sum((0..e).map(|b| expr::mul(fe(w.get(k - r, b)), xi(b))));
                        expr::mul(Expr::Num(s), lin)
                    }
                } else if i < r && k >= r {
                    fe(vba.conn_c[i].get(k - r, j - r))
                } else {
                    Expr::Num(0.0)
                };
                ScalarField::from_expr(ex)
            })
            .collect()
    })?;
    d.with_split(LinearCoreSplit { linear: r, fiber_start: m })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DegreeReport {
    pub algebroid: String,
    pub n_points: usize,
    pub linear_linear: f64,
    pub linear_core: f64,
    pub core_core: f64,
    pub anchor: f64,
}

impl DegreeReport {
    pub fn max_violation(&self) -> f64 {
        self.linear_linear.max(self.linear_core).max(self.core_core).max(self.anchor)
    }
}

/// Checks the fiber degrees of brackets and anchors of a total algebroid.
pub fn structural_degree_check(d: &FrameAlgebroid, n_points: usize, seed: u64) -> Result<DegreeReport> {
    let split = d
        .split()
        .ok_or_else(|| Error::structural(format!("'{}' has no linear/core split", d.name())))?
        .clone();
    let (rr, mm) = (d.rank(), d.dim());
    let (nl, fs) = (split.linear, split.fiber_start);
    let pts = d.domain().sample(n_points, seed)?;
    let mut rep = DegreeReport {
        algebroid: d.name().to_string(),
        n_points,
        linear_linear: 0.0,
        linear_core: 0.0,
        core_core: 0.0,
        anchor: 0.0,
    };
    let at = |x: &[f64], xi: &[f64], k: f64| -> Vec<f64> {
        x[..fs].iter().copied().chain(xi.iter().map(|v| v * k)).collect()
    };
    for x in &pts {
        let mut probes: Vec<Vec<f64>> = vec![x[fs..].to_vec()];
        for b in 0..mm - fs {
            let mut u = vec![0.0; mm - fs];
            u[b] = 1.0;
            probes.push(u);
        }
        for xi in &probes {
            let (p0, p1, p2) = (at(x, xi, 0.0), at(x, xi, 1.0), at(x, xi, 2.0));
            let (c0, c1, c2) = (d.structure_at(&p0), d.structure_at(&p1), d.structure_at(&p2));
            let (a0, a1, a2) = (d.anchor_at(&p0), d.anchor_at(&p1), d.anchor_at(&p2));
            for i in 0..rr {
                for j in i + 1..rr {
                    for k in 0..rr {
                        let (f0, f1, f2) = (c0.get(k, i, j), c1.get(k, i, j), c2.get(k, i, j));
                        if j < nl {
                            let v = if k < nl {
                                (f2 - f1).abs().max((f1 - f0).abs())
                            } else {
                                (f2 - 2.0 * f1).abs().max(f0.abs())
                            };
                            rep.linear_linear = rep.linear_linear.max(v);
                        } else if i < nl {
                            let v = if k < nl { f1.abs() } else { (f2 - f1).abs().max((f1 - f0).abs()) };
                            rep.linear_core = rep.linear_core.max(v);
                        } else {
                            rep.core_core = rep.core_core.max(f1.abs());
                        }
                    }
                }
            }
            for col in 0..rr {
                for row in 0..mm {
                    let (f0, f1, f2) = (*a0.get(row, col), *a1.get(row, col), *a2.get(row, col));
                    let v = match (col < nl, row < fs) {
                        (true, true) => (f2 - f1).abs().max((f1 - f0).abs()),
                        (true, false) => (f2 - 2.0 * f1).abs().max(f0.abs()),
                        (false, true) => f1.abs(),
                        (false, false) => (f2 - f1).abs().max((f1 - f0).abs()),
                    };
                    rep.anchor = rep.anchor.max(v);
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeLabel {
    Type0,
    Type1,
    Mixed,
    NonregularAtTolerance,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RegularDecomposition {
    pub point: Vec<f64>,
    pub rank_tol: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `c×(c−k)`, orthonormal columns spanning `ker ∂`.
    pub kernel: Mat<f64>,
    /// `e×k`, orthonormal columns spanning `im ∂`.
    pub image: Mat<f64>,
    /// `c×k` with `∂·preimage = image`.
    pub preimage: Mat<f64>,
    /// `e×(e−k)`, orthonormal complement of the image.
    pub cokernel: Mat<f64>,
    pub label: TypeLabel,
}

fn numeric_rank(sv: &[f64], tol: f64) -> usize {
    let smax = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > tol * smax).count()
}

/// Orthonormal basis of `ℝⁿ` whose first columns span `given`'s columns.
fn complete_basis(given: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = given.to_vec();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        let norm = v.norm();
        if norm > 0.5 {
            basis.push(v / norm);
        }
    }
    basis
}

fn columns_to_mat(rows: usize, cols: &[DVector<f64>]) -> Mat<f64> {
    Mat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn decompose_matrix(d: &Mat<f64>, point: &[f64], rank_tol: f64) -> Result<RegularDecomposition> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::usage(format!("rank tolerance {rank_tol} must lie in (0, 1)")));
    }
    if !d.is_finite() {
        return Err(Error::numeric(format!("core anchor is not finite at {point:?}")));
    }
    let (e, c) = d.shape();
    let dm = DMatrix::from_fn(e, c, |i, j| *d.get(i, j));
    let svd = dm.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("V^T requested");
    // nalgebra does not sort singular values.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let k = numeric_rank(&sv, rank_tol);
    let unstable = numeric_rank(&sv, rank_tol / 10.0) != k || numeric_rank(&sv, rank_tol * 10.0) != k;

    let ucols: Vec<DVector<f64>> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let vcols: Vec<DVector<f64>> = order.iter().map(|&i| vt.row(i).transpose().into_owned()).collect();
    let right = complete_basis(&vcols, c);
    let left = complete_basis(&ucols, e);
    let preimage: Vec<DVector<f64>> = (0..k).map(|i| &vcols[i] / sv[i]).collect();

    let label = if unstable {
        TypeLabel::NonregularAtTolerance
    } else if k == 0 {
        TypeLabel::Type0
    } else if k == e && k == c {
        TypeLabel::Type1
    } else {
        TypeLabel::Mixed
    };
    Ok(RegularDecomposition {
        point: point.to_vec(),
        rank_tol,
        rank: k,
        singular_values: sv,
        kernel: columns_to_mat(c, &right[k..]),
        image: columns_to_mat(e, &left[..k]),
        preimage: columns_to_mat(c, &preimage),
        cokernel: columns_to_mat(e, &left[k..]),
        label,
    })
}

/// Rank-revealing decomposition of `∂(x)`.
pub fn decompose_regular(vba: &SplitVBA, x: &[f64], rank_tol: f64) -> Result<RegularDecomposition> {
    vba.base().domain().check(x)?;
    decompose_matrix(&vba.core_anchor.eval(x), x, rank_tol)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PathRegularity {
    pub ranks: Vec<usize>,
    pub labels: Vec<TypeLabel>,
    /// False when the rank changes along the path or any point is unstable.
    pub regular: bool,
}

/// Decomposes `∂` along a polyline of points and flags rank changes.
pub fn path_regularity(vba: &SplitVBA, path: &[Vec<f64>], rank_tol: f64) -> Result<PathRegularity> {
    let decs: Vec<RegularDecomposition> =
        path.iter().map(|x| decompose_regular(vba, x, rank_tol)).collect::<Result<_>>()?;
    let ranks: Vec<usize> = decs.iter().map(|d| d.rank).collect();
    let labels: Vec<TypeLabel> = decs.iter().map(|d| d.label).collect();
    let regular = ranks.windows(2).all(|w| w[0] == w[1]) && !labels.contains(&TypeLabel::NonregularAtTolerance);
    Ok(PathRegularity { ranks, labels, regular })
}

fn mat_expr(m: &Mat<ScalarField>) -> Mat<Expr> {
    m.map(|f| f.expr().clone())
}

fn expr_matmul(a: &Mat<Expr>, b: &Mat<Expr>) -> Mat<Expr> {
    Mat::from_fn(a.rows(), b.cols(), |i, j| {
        expr::sum((0..a.cols()).map(|k| expr::mul(a.get(i, k).clone(), b.get(k, j).clone())))
    })
}

fn expr_add(a: &Mat<Expr>, b: &Mat<Expr>) -> Mat<Expr> {
    Mat::from_fn(a.rows(), a.cols(), |i, j| expr::add(a.get(i, j).clone(), b.get(i, j).clone()))
}

fn expr_scale(a: &Mat<Expr>, k: Expr) -> Mat<Expr> {
    a.map(|v| expr::mul(k.clone(), v.clone()))
}

/// Splitting shift for core anchor zero: `ω ↦ ω + d_∇φ`, connections kept.
///
/// `phi[i]` is the `c×e` value of the 1-form on the frame section `e_i`.
pub fn shift_splitting(vba: &SplitVBA, phi: &[Mat<ScalarField>]) -> Result<SplitVBA> {
    if !vba.core_anchor.is_zero() {
        return Err(Error::structural("splitting shift is only implemented for zero core anchor"));
    }
    let base = vba.base();
    let (r, m) = (base.rank(), base.dim());
    if phi.len() != r || phi.iter().any(|p| p.shape() != (vba.rank_c(), vba.rank_e())) {
        return Err(Error::structural(format!("phi must be {r} matrices of shape {}x{}", vba.rank_c(), vba.rank_e())));
    }
    let phis: Vec<Mat<Expr>> = phi.iter().map(mat_expr).collect();
    let ge: Vec<Mat<Expr>> = vba.conn_e.iter().map(mat_expr).collect();
    let gc: Vec<Mat<Expr>> = vba.conn_c.iter().map(mat_expr).collect();
    let nabla = |i: usize, p: &Mat<Expr>| -> Mat<Expr> {
        let deriv = p.map(|f| {
            expr::sum((0..m).map(|mu| expr::mul(base.anchor().get(mu, i).expr().clone(), f.derivative(mu))))
        });
        let left = expr_add(&deriv, &expr_matmul(&gc[i], p));
        expr_add(&left, &expr_scale(&expr_matmul(p, &ge[i]), Expr::Num(-1.0)))
    };
    let mut shifted = Vec::with_capacity(pair_count(r));
    for i in 0..r {
        for j in i + 1..r {
            let mut acc = expr_add(&mat_expr(vba.omega_field(i, j)), &nabla(i, &phis[j]));
            acc = expr_add(&acc, &expr_scale(&nabla(j, &phis[i]), Expr::Num(-1.0)));
            for (l, pl) in phis.iter().enumerate() {
                let c = base.structure(i, j, l);
                if !c.is_zero() {
                    acc = expr_add(&acc, &expr_scale(pl, expr::neg(c.expr().clone())));
                }
            }
            shifted.push(acc.map(|e| ScalarField::from_expr(e.clone())));
        }
    }
    vba.with_omega(|i, j| shifted[pair_index(i, j, r)].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abelian_split(d: Mat<ScalarField>) -> SplitVBA {
        let dom = Arc::new(ChartDomain::cube(&["x", "y"], -1.0, 1.0));
        let base = Arc::new(FrameAlgebroid::abelian("ab", dom, 2));
        let (e, c) = d.shape();
        SplitVBA::new(
            "v",
            base,
            (0..e).map(|i| format!("s{i}")).collect(),
            (0..c).map(|i| format!("k{i}")).collect(),
            d,
            vec![Mat::zero_fields(e, e); 2],
            vec![Mat::zero_fields(c, c); 2],
            |_, _| Mat::zero_fields(c, e),
        )
        .unwrap()
    }

    #[test]
    fn diag_anchor_crossing_zero() {
        let d = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => ScalarField::constant(1.0),
            (1, 1) => ScalarField::coord(0),
            _ => ScalarField::zero(),
        });
        let v = abelian_split(d);
        let dec = decompose_regular(&v, &[0.0, 0.3], 1e-9).unwrap();
        assert_eq!(dec.rank, 1);
        assert_eq!(dec.label, TypeLabel::Mixed);
        let path: Vec<Vec<f64>> = (-2..=2).map(|k| vec![k as f64 * 0.25, 0.0]).collect();
        let pr = path_regularity(&v, &path, 1e-9).unwrap();
        assert!(!pr.regular);
        assert_eq!(pr.ranks, vec![2, 2, 1, 2, 2]);
    }

    #[test]
    fn rectangular_bases_have_full_size() {
        let d = Mat::from_fn(3, 2, |i, j| ScalarField::constant(if i == j { 2.0 } else { 0.0 }));
        let v = abelian_split(d);
        let dec = decompose_regular(&v, &[0.1, 0.1], 1e-9).unwrap();
        assert_eq!(dec.rank, 2);
        assert_eq!(dec.kernel.shape(), (2, 0));
        assert_eq!(dec.image.shape(), (3, 2));
        assert_eq!(dec.cokernel.shape(), (3, 1));
        assert_eq!(dec.label, TypeLabel::Mixed);
    }

    #[test]
    fn near_threshold_is_flagged() {
        let d = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => ScalarField::constant(1.0),
            (1, 1) => ScalarField::constant(2e-9),
            _ => ScalarField::zero(),
        });
        let dec = decompose_regular(&abelian_split(d), &[0.0, 0.0], 1e-9).unwrap();
        assert_eq!(dec.label, TypeLabel::NonregularAtTolerance);
    }

    #[test]
    fn shift_requires_zero_core_anchor() {
        let d = Mat::from_fn(1, 1, |_, _| ScalarField::constant(1.0));
        let v = abelian_split(d);
        let phi = vec![Mat::zero_fields(1, 1); 2];
        assert!(matches!(shift_splitting(&v, &phi), Err(Error::Structural(_))));
    }

    #[test]
    fn sign_parsing() {
        assert_eq!(ConventionSign::parse("+1"), Some(ConventionSign::Plus));
        assert_eq!(ConventionSign::parse("-1"), Some(ConventionSign::Minus));
        assert_eq!(ConventionSign::parse("2"), None);
    }
}
