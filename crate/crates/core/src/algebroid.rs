use std::sync::Arc;

use serde::Serialize;

use crate::chart::ChartDomain;
use crate::dual::{seed_point, Grad, Scalar};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::Mat;

/// Index of the unordered pair `i < j` among `r` elements.
pub(crate) fn pair_index(i: usize, j: usize, r: usize) -> usize {
    debug_assert!(i < j && j < r);
    i * r - i * (i + 1) / 2 + (j - i - 1)
}

pub(crate) fn pair_count(r: usize) -> usize {
    r * r.saturating_sub(1) / 2
}

/// Which frame sections are linear and which coordinates are fiber
/// coordinates, for algebroids that are total spaces of a VB-algebroid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinearCoreSplit {
    /// Frame sections `0..linear` are linear, the rest are core.
    pub linear: usize,
    /// Coordinates `fiber_start..` are fiber coordinates.
    pub fiber_start: usize,
}

/// Lie algebroid over a chart, presented by an anchor matrix and structure
/// functions `c^k_ij` in a global frame.
#[derive(Clone, Debug)]
pub struct FrameAlgebroid {
    name: String,
    domain: Arc<ChartDomain>,
    frame: Vec<String>,
    anchor: Mat<ScalarField>,
    /// `structure[pair_index(i, j)][k] = c^k_ij` for `i < j`.
    structure: Vec<Vec<ScalarField>>,
    split: Option<LinearCoreSplit>,
}

/// Structure functions evaluated at a point, antisymmetric storage expanded.
#[derive(Clone, Debug)]
pub struct StructureValues<S> {
    r: usize,
    data: Vec<S>,
}

impl<S: Scalar> StructureValues<S> {
    /// `c^k_ij`.
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> S {
        self.data[(k * self.r + i) * self.r + j]
    }
}

impl FrameAlgebroid {
    pub fn new(
        name: impl Into<String>,
        domain: Arc<ChartDomain>,
        frame: Vec<String>,
        anchor: Mat<ScalarField>,
        mut structure: impl FnMut(usize, usize) -> Vec<ScalarField>,
    ) -> Result<Self> {
        let name = name.into();
        let r = frame.len();
        let m = domain.dim();
        if r == 0 {
            return Err(Error::structural(format!("algebroid '{name}' has an empty frame")));
        }
        if anchor.shape() != (m, r) {
            return Err(Error::structural(format!(
                "algebroid '{name}': anchor is {:?}, expected {m}x{r}",
                anchor.shape()
            )));
        }
        let mut table = Vec::with_capacity(pair_count(r));
        for i in 0..r {
            for j in i + 1..r {
                let c = structure(i, j);
                if c.len() != r {
                    return Err(Error::structural(format!(
                        "algebroid '{name}': bracket ({}, {}) has {} coefficients, expected {r}",
                        frame[i],
                        frame[j],
                        c.len()
                    )));
                }
                table.push(c);
            }
        }
        let arity = table.iter().flatten().map(ScalarField::arity).max().unwrap_or(0).max(anchor.arity());
        if arity > m {
            return Err(Error::structural(format!("algebroid '{name}': fields use {arity} coordinates, chart has {m}")));
        }
        Ok(FrameAlgebroid { name, domain, frame, anchor, structure: table, split: None })
    }

    /// Abelian algebroid of rank `r` with zero anchor.
    pub fn abelian(name: impl Into<String>, domain: Arc<ChartDomain>, r: usize) -> Self {
        let m = domain.dim();
        let frame = (1..=r).map(|i| format!("e{i}")).collect();
        Self::new(name, domain, frame, Mat::zero_fields(m, r), |_, _| vec![ScalarField::zero(); r]).expect("abelian")
    }

    /// Tangent bundle with the coordinate frame `d_<coord>`.
    pub fn tangent(name: impl Into<String>, domain: Arc<ChartDomain>) -> Self {
        let m = domain.dim();
        let frame = domain.coords().iter().map(|c| format!("d_{c}")).collect();
        let anchor = Mat::from_fn(m, m, |i, j| ScalarField::constant(if i == j { 1.0 } else { 0.0 }));
        Self::new(name, domain, frame, anchor, |_, _| vec![ScalarField::zero(); m]).expect("tangent")
    }

    pub fn with_split(mut self, split: LinearCoreSplit) -> Result<Self> {
        if split.linear > self.rank() || split.fiber_start > self.domain.dim() {
            return Err(Error::structural(format!("linear/core split out of range for '{}'", self.name)));
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Arc<ChartDomain> {
        &self.domain
    }

    pub fn frame(&self) -> &[String] {
        &self.frame
    }

    pub fn frame_index(&self, name: &str) -> Option<usize> {
        self.frame.iter().position(|f| f == name)
    }

    pub fn rank(&self) -> usize {
        self.frame.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn split(&self) -> Option<&LinearCoreSplit> {
        self.split.as_ref()
    }

    pub fn anchor(&self) -> &Mat<ScalarField> {
        &self.anchor
    }

    /// `c^k_ij` as a field, with the antisymmetric sign applied.
    pub fn structure(&self, i: usize, j: usize, k: usize) -> ScalarField {
        use std::cmp::Ordering::*;
        let r = self.rank();
        match i.cmp(&j) {
            Equal => ScalarField::zero(),
            Less => self.structure[pair_index(i, j, r)][k].clone(),
            Greater => {
                let f = &self.structure[pair_index(j, i, r)][k];
                match f.as_const() {
                    Some(v) => ScalarField::constant(-v),
                    None => ScalarField::from_expr(crate::expr::neg(f.expr().clone())),
                }
            }
        }
    }

    /// Returns a copy with `c^k_ij` (for `i < j`) replaced.
    pub fn with_structure(&self, i: usize, j: usize, k: usize, f: ScalarField) -> Self {
        assert!(i < j);
        let mut out = self.clone();
        out.structure[pair_index(i, j, self.rank())][k] = f;
        out
    }

    pub fn anchor_at<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        self.anchor.eval(x)
    }

    pub fn structure_at<S: Scalar>(&self, x: &[S]) -> StructureValues<S> {
        let r = self.rank();
        let mut data = vec![S::zero(); r * r * r];
        for i in 0..r {
            for j in i + 1..r {
                for (k, f) in self.structure[pair_index(i, j, r)].iter().enumerate() {
                    let v = f.eval(x);
                    data[(k * r + i) * r + j] = v;
                    data[(k * r + j) * r + i] = -v;
                }
            }
        }
        StructureValues { r, data }
    }
}

/// `[u, v]` from the jets of the coefficient fields at one point.
///
/// `rho` and `c` are the anchor and structure values at that point.
pub(crate) fn bracket_from_jets(rho: &Mat<f64>, c: &StructureValues<f64>, u: &[Grad], v: &[Grad]) -> Vec<f64> {
    let r = u.len();
    let m = rho.rows();
    let uval: Vec<f64> = u.iter().map(|g| g.re).collect();
    let vval: Vec<f64> = v.iter().map(|g| g.re).collect();
    let rho_u = rho.matvec(&uval);
    let rho_v = rho.matvec(&vval);
    (0..r)
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..r {
                if uval[i] == 0.0 {
                    continue;
                }
                for j in 0..r {
                    acc += uval[i] * vval[j] * c.get(k, i, j);
                }
            }
            for mu in 0..m {
                acc += rho_u[mu] * v[k].eps[mu] - rho_v[mu] * u[k].eps[mu];
            }
            acc
        })
        .collect()
}

/// Frame coefficients of `[u, v]` at `x`.
pub fn bracket_sections(a: &FrameAlgebroid, u: &[ScalarField], v: &[ScalarField], x: &[f64]) -> Result<Vec<f64>> {
    let r = a.rank();
    if u.len() != r || v.len() != r {
        return Err(Error::structural(format!("sections must have {r} coefficients")));
    }
    a.domain.check(x)?;
    let xg = seed_point(x);
    let uj: Vec<Grad> = u.iter().map(|f| f.eval(&xg)).collect();
    let vj: Vec<Grad> = v.iter().map(|f| f.eval(&xg)).collect();
    Ok(bracket_from_jets(&a.anchor_at(x), &a.structure_at(x), &uj, &vj))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WorstCase {
    pub point: Vec<f64>,
    pub frames: Vec<String>,
    pub residual: f64,
}

fn update_worst(slot: &mut Option<WorstCase>, residual: f64, point: &[f64], frames: Vec<String>) {
    let better = match slot {
        None => true,
        Some(w) => residual > w.residual || (residual.is_nan() && !w.residual.is_nan()),
    };
    if better {
        *slot = Some(WorstCase { point: point.to_vec(), frames, residual });
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AxiomReport {
    pub algebroid: String,
    pub n_points: usize,
    pub seed: u64,
    pub anchor_residual: f64,
    pub jacobi_residual: f64,
    pub worst_anchor: Option<WorstCase>,
    pub worst_jacobi: Option<WorstCase>,
}

impl AxiomReport {
    pub fn max(&self) -> f64 {
        self.anchor_residual.max(self.jacobi_residual)
    }
}

/// Anchor compatibility and Jacobi residuals at `n_points` Halton samples.
pub fn check_axioms(a: &FrameAlgebroid, n_points: usize, seed: u64) -> Result<AxiomReport> {
    if n_points == 0 {
        return Err(Error::usage("n_points must be at least 1"));
    }
    let r = a.rank();
    let m = a.dim();
    let pts = a.domain.sample(n_points, seed)?;
    let mut worst_anchor = None;
    let mut worst_jacobi = None;
    let mut anchor_residual: f64 = 0.0;
    let mut jacobi_residual: f64 = 0.0;
    for x in &pts {
        let xg = seed_point(x);
        let rho = a.anchor_at(&xg);
        let c = a.structure_at(&xg);
        let rho_v = rho.values();
        // rho(e_k)(f) for a jet f
        let along = |k: usize, f: &Grad| -> f64 { (0..m).map(|nu| rho_v.get(nu, k) * f.eps[nu]).sum() };

        for i in 0..r {
            for j in i + 1..r {
                let mut res: f64 = 0.0;
                for mu in 0..m {
                    let lhs: f64 = (0..r).map(|k| c.get(k, i, j).re * rho_v.get(mu, k)).sum();
                    let rhs = along(i, rho.get(mu, j)) - along(j, rho.get(mu, i));
                    res = res.max((lhs - rhs).abs());
                }
                anchor_residual = anchor_residual.max(res);
                update_worst(&mut worst_anchor, res, x, vec![a.frame[i].clone(), a.frame[j].clone()]);
            }
        }

        for i in 0..r {
            for j in i + 1..r {
                for k in j + 1..r {
                    let mut res: f64 = 0.0;
                    for mm in 0..r {
                        let mut acc = 0.0;
                        for (p, q, s) in [(i, j, k), (j, k, i), (k, i, j)] {
                            for l in 0..r {
                                acc += c.get(l, p, q).re * c.get(mm, l, s).re;
                            }
                            acc -= along(s, &c.get(mm, p, q));
                        }
                        res = res.max(acc.abs());
                    }
                    jacobi_residual = jacobi_residual.max(res);
                    update_worst(
                        &mut worst_jacobi,
                        res,
                        x,
                        vec![a.frame[i].clone(), a.frame[j].clone(), a.frame[k].clone()],
                    );
                }
            }
        }
    }
    Ok(AxiomReport {
        algebroid: a.name.clone(),
        n_points,
        seed,
        anchor_residual,
        jacobi_residual,
        worst_anchor,
        worst_jacobi,
    })
}

/// Identity-covering morphism given by a matrix field `φ` (target rank × source rank).
#[derive(Clone, Debug)]
pub struct AlgebroidMorphism {
    name: String,
    source: Arc<FrameAlgebroid>,
    target: Arc<FrameAlgebroid>,
    map: Mat<ScalarField>,
}

impl AlgebroidMorphism {
    pub fn new(
        name: impl Into<String>,
        source: Arc<FrameAlgebroid>,
        target: Arc<FrameAlgebroid>,
        map: Mat<ScalarField>,
    ) -> Result<Self> {
        let name = name.into();
        if source.domain.coords() != target.domain.coords() {
            return Err(Error::structural(format!(
                "morphism '{name}': source chart {:?} differs from target chart {:?}",
                source.domain.coords(),
                target.domain.coords()
            )));
        }
        if map.shape() != (target.rank(), source.rank()) {
            return Err(Error::structural(format!(
                "morphism '{name}': map is {:?}, expected {}x{}",
                map.shape(),
                target.rank(),
                source.rank()
            )));
        }
        if map.arity() > source.dim() {
            return Err(Error::structural(format!("morphism '{name}': map uses coordinates outside the chart")));
        }
        Ok(AlgebroidMorphism { name, source, target, map })
    }

    pub fn identity(a: Arc<FrameAlgebroid>) -> Self {
        let r = a.rank();
        let map = Mat::from_fn(r, r, |i, j| ScalarField::constant(if i == j { 1.0 } else { 0.0 }));
        Self::new(format!("id_{}", a.name), a.clone(), a, map).expect("identity")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &Arc<FrameAlgebroid> {
        &self.source
    }

    pub fn target(&self) -> &Arc<FrameAlgebroid> {
        &self.target
    }

    pub fn map(&self) -> &Mat<ScalarField> {
        &self.map
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MorphismReport {
    pub morphism: String,
    pub n_points: usize,
    pub seed: u64,
    pub anchor_residual: f64,
    pub bracket_residual: f64,
    pub worst_bracket: Option<WorstCase>,
}

impl MorphismReport {
    pub fn max(&self) -> f64 {
        self.anchor_residual.max(self.bracket_residual)
    }
}

pub fn morphism_residual(phi: &AlgebroidMorphism, n_points: usize, seed: u64) -> Result<MorphismReport> {
    if n_points == 0 {
        return Err(Error::usage("n_points must be at least 1"));
    }
    let (src, tgt) = (&phi.source, &phi.target);
    let r1 = src.rank();
    let pts = src.domain.sample(n_points, seed)?;
    let mut anchor_residual: f64 = 0.0;
    let mut bracket_residual: f64 = 0.0;
    let mut worst_bracket = None;
    for x in &pts {
        let xg = seed_point(x);
        let map_j = phi.map.eval(&xg);
        let map_v = map_j.values();
        let rho1 = src.anchor_at(x);
        let rho2 = tgt.anchor_at(x);
        anchor_residual = anchor_residual.max((&rho2.matmul(&map_v) - &rho1).max_abs());

        let c1 = src.structure_at(x);
        let c2 = tgt.structure_at(x);
        for i in 0..r1 {
            for j in i + 1..r1 {
                let lhs: Vec<f64> = (0..tgt.rank())
                    .map(|k| (0..r1).map(|l| c1.get(l, i, j) * map_v.get(k, l)).sum())
                    .collect();
                let rhs = bracket_from_jets(&rho2, &c2, &map_j.column(i), &map_j.column(j));
                let res = lhs.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                bracket_residual = bracket_residual.max(res);
                update_worst(&mut worst_bracket, res, x, vec![src.frame[i].clone(), src.frame[j].clone()]);
            }
        }
    }
    Ok(MorphismReport {
        morphism: phi.name.clone(),
        n_points,
        seed,
        anchor_residual,
        bracket_residual,
        worst_bracket,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ComparisonReport {
    pub left: String,
    pub right: String,
    pub n_points: usize,
    pub anchor_difference: f64,
    pub bracket_difference: f64,
}

impl ComparisonReport {
    pub fn max(&self) -> f64 {
        self.anchor_difference.max(self.bracket_difference)
    }
}

/// Pointwise difference of anchors and bracket tables of two algebroids that
/// share frame names (matched by name) and chart coordinates.
pub fn compare_algebroids(a: &FrameAlgebroid, b: &FrameAlgebroid, n_points: usize, seed: u64) -> Result<ComparisonReport> {
    if a.domain.coords() != b.domain.coords() {
        return Err(Error::structural(format!("'{}' and '{}' live on different charts", a.name, b.name)));
    }
    let r = a.rank();
    let perm: Vec<usize> = a
        .frame
        .iter()
        .map(|f| b.frame_index(f).ok_or_else(|| Error::structural(format!("frame '{f}' missing from '{}'", b.name))))
        .collect::<Result<_>>()?;
    if b.rank() != r {
        return Err(Error::structural("frames differ in size"));
    }
    let pts = a.domain.sample(n_points, seed)?;
    let mut anchor_difference: f64 = 0.0;
    let mut bracket_difference: f64 = 0.0;
    for x in &pts {
        let ra = a.anchor_at(x);
        let rb = b.anchor_at(x);
        let ca = a.structure_at(x);
        let cb = b.structure_at(x);
        for i in 0..r {
            for mu in 0..a.dim() {
                anchor_difference = anchor_difference.max((ra.get(mu, i) - rb.get(mu, perm[i])).abs());
            }
            for j in i + 1..r {
                for k in 0..r {
                    let d = ca.get(k, i, j) - cb.get(perm[k], perm[i], perm[j]);
                    bracket_difference = bracket_difference.max(d.abs());
                }
            }
        }
    }
    Ok(ComparisonReport {
        left: a.name.clone(),
        right: b.name.clone(),
        n_points,
        anchor_difference,
        bracket_difference,
    })
}
