use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::pair_index;
use crate::chart::ChartDomain;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::holonomy::transport;
use crate::linalg::Mat;
use crate::split::{Bundle, ConventionSign, SplitVBA};

/// An arrow `x → y` of the pair groupoid, stored as `(target, source)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Arrow {
    pub target: Vec<f64>,
    pub source: Vec<f64>,
}

impl Arrow {
    pub fn new(target: Vec<f64>, source: Vec<f64>) -> Self {
        Arrow { target, source }
    }
}

/// The pair groupoid `M × M ⇉ M` over a chart.
#[derive(Clone, Debug)]
pub struct PairGroupoid {
    domain: Arc<ChartDomain>,
}

impl PairGroupoid {
    pub fn new(domain: Arc<ChartDomain>) -> Self {
        PairGroupoid { domain }
    }

    pub fn domain(&self) -> &Arc<ChartDomain> {
        &self.domain
    }

    pub fn unit(&self, x: &[f64]) -> Arrow {
        Arrow::new(x.to_vec(), x.to_vec())
    }

    pub fn source<'a>(&self, g: &'a Arrow) -> &'a [f64] {
        &g.source
    }

    pub fn target<'a>(&self, g: &'a Arrow) -> &'a [f64] {
        &g.target
    }

    pub fn inverse(&self, g: &Arrow) -> Arrow {
        Arrow::new(g.source.clone(), g.target.clone())
    }

    pub fn multiply(&self, g: &Arrow, h: &Arrow) -> Result<Arrow> {
        if g.source != h.target {
            return Err(Error::structural("arrows are not composable"));
        }
        Ok(Arrow::new(g.target.clone(), h.source.clone()))
    }

    /// `g(r) = (x + r·a, x)`, a curve in the source fiber through the unit.
    pub fn curve(&self, x: &[f64], a: &[f64], r: f64) -> Arrow {
        Arrow::new(x.iter().zip(a).map(|(p, v)| p + r * v).collect(), x.to_vec())
    }

    /// `n` chains `x₀ ← x₁ ← … ← x_len` of composable arrows, seeded.
    pub fn sample_chains(&self, n: usize, len: usize, seed: u64) -> Result<Vec<Vec<Arrow>>> {
        let pts = self.domain.sample(n * (len + 1), seed)?;
        Ok(pts
            .chunks(len + 1)
            .map(|w| (0..len).map(|k| Arrow::new(w[k].clone(), w[k + 1].clone())).collect())
            .collect())
    }
}

type ArrowMat = Arc<dyn Fn(&[f64], &[f64]) -> Mat<f64> + Send + Sync>;
type PairMat = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Mat<f64> + Send + Sync>;

/// 2-term representation up to homotopy of the pair groupoid:
/// `(∂, Δᶜ, Δᴱ, Ω)` with `Δ` evaluated on `(target, source)` and `Ω` on
/// `(t(g₁), s(g₁) = t(g₂), s(g₂))`.
#[derive(Clone)]
pub struct RepUTHGroupoid {
    name: String,
    groupoid: PairGroupoid,
    e: usize,
    c: usize,
    boundary: Mat<ScalarField>,
    delta_c: ArrowMat,
    delta_e: ArrowMat,
    omega: PairMat,
}

impl fmt::Debug for RepUTHGroupoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepUTHGroupoid")
            .field("name", &self.name)
            .field("e", &self.e)
            .field("c", &self.c)
            .finish_non_exhaustive()
    }
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

impl RepUTHGroupoid {
    /// Expression form. `Δ` fields use the `2m` variables `(t, s)`, `Ω`
    /// fields the `3m` variables `(t, m, s)`, `∂` the `m` object coordinates.
    pub fn from_expressions(
        name: impl Into<String>,
        domain: Arc<ChartDomain>,
        boundary: Mat<ScalarField>,
        delta_c: Mat<ScalarField>,
        delta_e: Mat<ScalarField>,
        omega: Mat<ScalarField>,
    ) -> Result<Self> {
        let name = name.into();
        let m = domain.dim();
        let (e, c) = boundary.shape();
        let bad = |msg: String| Err(Error::structural(format!("representation '{name}': {msg}")));
        if e == 0 || c == 0 {
            return bad("ranks must be positive".into());
        }
        if delta_c.shape() != (c, c) || delta_e.shape() != (e, e) || omega.shape() != (c, e) {
            return bad("Δᶜ must be c×c, Δᴱ e×e and Ω c×e".into());
        }
        if boundary.arity() > m || delta_c.arity() > 2 * m || delta_e.arity() > 2 * m || omega.arity() > 3 * m {
            return bad("field uses variables outside its argument list".into());
        }
        let dc = delta_c.clone();
        let de = delta_e.clone();
        let om = omega.clone();
        Ok(RepUTHGroupoid {
            name,
            groupoid: PairGroupoid::new(domain),
            e,
            c,
            boundary,
            delta_c: Arc::new(move |t, s| dc.eval(&concat(&[t, s]))),
            delta_e: Arc::new(move |t, s| de.eval(&concat(&[t, s]))),
            omega: Arc::new(move |t, m, s| om.eval(&concat(&[t, m, s]))),
        })
    }

    /// `Δ ≡ id`, `Ω ≡ 0`, `∂ ≡ 0`.
    pub fn trivial(name: impl Into<String>, domain: Arc<ChartDomain>, e: usize, c: usize) -> Self {
        RepUTHGroupoid {
            name: name.into(),
            groupoid: PairGroupoid::new(domain),
            e,
            c,
            boundary: Mat::zero_fields(e, c),
            delta_c: Arc::new(move |_, _| Mat::identity(c)),
            delta_e: Arc::new(move |_, _| Mat::identity(e)),
            omega: Arc::new(move |_, _, _| Mat::zeros(c, e)),
        }
    }

    /// Parallel transport of the split's connections along straight
    /// segments, `Ω ≡ 0`. Only meaningful when both connections are flat
    /// and `ω = 0`; the base must be a tangent algebroid.
    pub fn from_flat_split(vba: &SplitVBA, steps: usize) -> Result<Self> {
        let base = vba.base();
        let m = base.dim();
        let is_tangent = base.rank() == m
            && (0..m).all(|i| (0..m).all(|j| base.anchor().get(i, j).as_const() == Some(if i == j { 1.0 } else { 0.0 })));
        if !is_tangent {
            return Err(Error::structural(format!(
                "split '{}' is not over a tangent algebroid; the pair groupoid does not integrate it",
                vba.name()
            )));
        }
        let along = |conn: Vec<Mat<ScalarField>>| -> ArrowMat {
            Arc::new(move |y: &[f64], x: &[f64]| {
                let v: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                let theta = |r: f64| {
                    let p: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a + r * d).collect();
                    let n = conn[0].rows();
                    let mut acc = Mat::zeros(n, n);
                    for (i, g) in conn.iter().enumerate() {
                        if v[i] != 0.0 && !g.is_zero() {
                            acc.axpy(v[i], &g.eval(&p));
                        }
                    }
                    acc
                };
                transport(theta, 0.0, 0.0, 1.0, steps).expect("steps checked").holonomy
            })
        };
        if steps < 2 {
            return Err(Error::usage("transport needs at least 2 steps"));
        }
        let (e, c) = (vba.rank_e(), vba.rank_c());
        Ok(RepUTHGroupoid {
            name: format!("{}-transport", vba.name()),
            groupoid: PairGroupoid::new(base.domain().clone()),
            e,
            c,
            boundary: vba.core_anchor().clone(),
            delta_c: along(vba.connection(Bundle::C).to_vec()),
            delta_e: along(vba.connection(Bundle::E).to_vec()),
            omega: Arc::new(move |_, _, _| Mat::zeros(c, e)),
        })
    }

    /// Copy with `Ω` replaced by `Ω + δ`.
    pub fn with_omega_defect(&self, defect: impl Fn(&[f64], &[f64], &[f64]) -> Mat<f64> + Send + Sync + 'static) -> Self {
        let base = self.omega.clone();
        let mut out = self.clone();
        out.omega = Arc::new(move |t, m, s| &base(t, m, s) + &defect(t, m, s));
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn groupoid(&self) -> &PairGroupoid {
        &self.groupoid
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.e, self.c)
    }

    pub fn boundary_at(&self, x: &[f64]) -> Mat<f64> {
        self.boundary.eval(x)
    }

    pub fn delta(&self, bundle: Bundle, g: &Arrow) -> Mat<f64> {
        match bundle {
            Bundle::C => (self.delta_c)(&g.target, &g.source),
            Bundle::E => (self.delta_e)(&g.target, &g.source),
        }
    }

    /// `Ω_{g₁,g₂}`; the caller guarantees `s(g₁) = t(g₂)`.
    pub fn omega(&self, g1: &Arrow, g2: &Arrow) -> Mat<f64> {
        (self.omega)(&g1.target, &g1.source, &g2.source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuthConvention {
    /// Second term of the composition axioms read as `Δ_{g₂}Δ_{g₁}`.
    Literal,
    /// Second term read as `Δ_{g₁g₂}`.
    CompositionCorrected,
}

impl RuthConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal" => Some(RuthConvention::Literal),
            "composition-corrected" | "corrected" => Some(RuthConvention::CompositionCorrected),
            _ => None,
        }
    }
}

/// Max residuals of the four defining equations over the samples.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct RuthAxiomSet {
    /// `Δᴱ_g ∂ − ∂ Δᶜ_g`
    pub chain_map: f64,
    pub core_composition: f64,
    pub side_composition: f64,
    pub cocycle: f64,
}

impl RuthAxiomSet {
    pub fn max(&self) -> f64 {
        self.chain_map.max(self.core_composition).max(self.side_composition).max(self.cocycle)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RuthAxiomReport {
    pub name: String,
    pub samples: usize,
    pub literal: RuthAxiomSet,
    pub composition_corrected: RuthAxiomSet,
    /// `max |Δ(1ₓ) − id|`
    pub unitality: f64,
    /// `max |Ω(1, g)|, |Ω(g, 1)|`
    pub normalization: f64,
}

impl RuthAxiomReport {
    pub fn set(&self, conv: RuthConvention) -> &RuthAxiomSet {
        match conv {
            RuthConvention::Literal => &self.literal,
            RuthConvention::CompositionCorrected => &self.composition_corrected,
        }
    }

    /// Worst residual in one convention, including unitality and normalization.
    pub fn max(&self, conv: RuthConvention) -> f64 {
        self.set(conv).max().max(self.unitality).max(self.normalization)
    }
}

#[derive(Clone, Copy, Default)]
struct Partial {
    lit: RuthAxiomSet,
    cor: RuthAxiomSet,
    unit: f64,
    norm: f64,
}

fn merge(a: Partial, b: Partial) -> Partial {
    let m = |x: RuthAxiomSet, y: RuthAxiomSet| RuthAxiomSet {
        chain_map: x.chain_map.max(y.chain_map),
        core_composition: x.core_composition.max(y.core_composition),
        side_composition: x.side_composition.max(y.side_composition),
        cocycle: x.cocycle.max(y.cocycle),
    };
    Partial { lit: m(a.lit, b.lit), cor: m(a.cor, b.cor), unit: a.unit.max(b.unit), norm: a.norm.max(b.norm) }
}

fn triple_residuals(rep: &RepUTHGroupoid, chain: &[Arrow]) -> Partial {
    let gp = &rep.groupoid;
    let (g1, g2, g3) = (&chain[0], &chain[1], &chain[2]);
    let g12 = gp.multiply(g1, g2).expect("sampled chain");
    let g23 = gp.multiply(g2, g3).expect("sampled chain");
    let bd_s = rep.boundary_at(&g1.source);
    let bd_t = rep.boundary_at(&g1.target);
    let bd_ss = rep.boundary_at(&g2.source);
    let (dc1, dc2, dc12) = (rep.delta(Bundle::C, g1), rep.delta(Bundle::C, g2), rep.delta(Bundle::C, &g12));
    let (de1, de2, de12) = (rep.delta(Bundle::E, g1), rep.delta(Bundle::E, g2), rep.delta(Bundle::E, &g12));
    let w12 = rep.omega(g1, g2);

    let chain_map = (&de1.matmul(&bd_s) - &bd_t.matmul(&dc1)).max_abs();
    let core_common = &dc1.matmul(&dc2) + &w12.matmul(&bd_ss);
    let side_common = &de1.matmul(&de2) + &bd_t.matmul(&w12);
    let lit_core = (&core_common - &dc2.matmul(&dc1)).max_abs();
    let lit_side = (&side_common - &de2.matmul(&de1)).max_abs();
    let cor_core = (&core_common - &dc12).max_abs();
    let cor_side = (&side_common - &de12).max_abs();

    let cocycle = {
        let w23 = rep.omega(g2, g3);
        let w12_3 = rep.omega(&g12, g3);
        let w1_23 = rep.omega(g1, &g23);
        let de3 = rep.delta(Bundle::E, g3);
        let mut r = dc1.matmul(&w23);
        r = &r - &w12_3;
        r = &r + &w1_23;
        r = &r - &w12.matmul(&de3);
        r.max_abs()
    };

    let unit = {
        let u = gp.unit(&g1.source);
        let a = (&rep.delta(Bundle::C, &u) - &Mat::identity(rep.c)).max_abs();
        let b = (&rep.delta(Bundle::E, &u) - &Mat::identity(rep.e)).max_abs();
        a.max(b)
    };
    let norm = {
        let ut = gp.unit(&g1.target);
        let us = gp.unit(&g1.source);
        rep.omega(&ut, g1).max_abs().max(rep.omega(g1, &us).max_abs())
    };
    Partial {
        lit: RuthAxiomSet { chain_map, core_composition: lit_core, side_composition: lit_side, cocycle },
        cor: RuthAxiomSet { chain_map, core_composition: cor_core, side_composition: cor_side, cocycle },
        unit,
        norm,
    }
}

/// Evaluates the four defining equations on `n` sampled composable triples,
/// in both readings of the composition axioms.
pub fn ruth_axiom_residuals(rep: &RepUTHGroupoid, n: usize, seed: u64) -> Result<RuthAxiomReport> {
    if n == 0 {
        return Err(Error::usage("need at least one sample"));
    }
    let chains = rep.groupoid.sample_chains(n, 3, seed)?;
    let parts: Vec<Partial> = chains.par_iter().map(|ch| triple_residuals(rep, ch)).collect();
    let total = parts.into_iter().fold(Partial::default(), merge);
    Ok(RuthAxiomReport {
        name: rep.name.clone(),
        samples: n,
        literal: total.lit,
        composition_corrected: total.cor,
        unitality: total.unit,
        normalization: total.norm,
    })
}

/// An element `(c, g, e)` of `t*C ⊕ s*E`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VbArrow {
    pub c: Vec<f64>,
    pub g: Arrow,
    pub e: Vec<f64>,
}

/// VB-groupoid `t*C ⊕ s*E ⇉ E` built from a representation.
#[derive(Clone, Debug)]
pub struct VbGroupoid {
    rep: RepUTHGroupoid,
    convention: RuthConvention,
    axioms: RuthAxiomReport,
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct VbGroupoidReport {
    pub samples: usize,
    pub source: f64,
    pub target: f64,
    pub associativity: f64,
    pub left_unit: f64,
    pub right_unit: f64,
}

impl VbGroupoidReport {
    pub fn max(&self) -> f64 {
        self.source.max(self.target).max(self.associativity).max(self.left_unit).max(self.right_unit)
    }
}

fn vsub(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn vadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub const RUTH_AXIOM_TOL: f64 = 1e-6;

pub fn vb_groupoid_from_ruth(rep: &RepUTHGroupoid, convention: RuthConvention, n: usize, seed: u64) -> Result<VbGroupoid> {
    let axioms = ruth_axiom_residuals(rep, n, seed)?;
    let worst = axioms.max(convention);
    if !(worst <= RUTH_AXIOM_TOL) {
        return Err(Error::structural(format!(
            "representation '{}' fails its axioms ({worst:.3e} > {RUTH_AXIOM_TOL:e}); refusing to build the VB-groupoid",
            rep.name
        )));
    }
    Ok(VbGroupoid { rep: rep.clone(), convention, axioms })
}

impl VbGroupoid {
    pub fn representation(&self) -> &RepUTHGroupoid {
        &self.rep
    }

    pub fn convention(&self) -> RuthConvention {
        self.convention
    }

    pub fn axioms(&self) -> &RuthAxiomReport {
        &self.axioms
    }

    pub fn source(&self, p: &VbArrow) -> Vec<f64> {
        p.e.clone()
    }

    /// `∂(c) + Δᴱ_g(e)`
    pub fn target(&self, p: &VbArrow) -> Vec<f64> {
        let bd = self.rep.boundary_at(&p.g.target);
        vadd(&bd.matvec(&p.c), &self.rep.delta(Bundle::E, &p.g).matvec(&p.e))
    }

    pub fn unit(&self, x: &[f64], e: &[f64]) -> VbArrow {
        VbArrow { c: vec![0.0; self.rep.c], g: self.rep.groupoid.unit(x), e: e.to_vec() }
    }

    /// `(c₁ + Δᶜ_{g₁}c₂ − Ω_{g₁,g₂}e₂, g₁g₂, e₂)`; composability of the base
    /// arrows is checked, that of the fiber components is the caller's.
    pub fn multiply(&self, p: &VbArrow, q: &VbArrow) -> Result<VbArrow> {
        let g = self.rep.groupoid.multiply(&p.g, &q.g)?;
        let mut c = vadd(&p.c, &self.rep.delta(Bundle::C, &p.g).matvec(&q.c));
        let w = self.rep.omega(&p.g, &q.g).matvec(&q.e);
        for (a, b) in c.iter_mut().zip(&w) {
            *a -= b;
        }
        Ok(VbArrow { c, g, e: q.e.clone() })
    }

    /// Structure-map residuals on `n` sampled composable triples with
    /// seeded fiber components in `[-1, 1]`.
    pub fn residuals(&self, n: usize, seed: u64) -> Result<VbGroupoidReport> {
        let chains = self.rep.groupoid.sample_chains(n, 3, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (e, c) = (self.rep.e, self.rep.c);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect() };
        let fibers: Vec<[Vec<f64>; 4]> = (0..n).map(|_| [draw(c), draw(c), draw(c), draw(e)]).collect();
        let parts: Vec<Result<VbGroupoidReport>> = chains
            .par_iter()
            .zip(fibers.par_iter())
            .map(|(ch, f)| {
                let r = VbArrow { c: f[2].clone(), g: ch[2].clone(), e: f[3].clone() };
                let q = VbArrow { c: f[1].clone(), g: ch[1].clone(), e: self.target(&r) };
                let p = VbArrow { c: f[0].clone(), g: ch[0].clone(), e: self.target(&q) };
                let pq = self.multiply(&p, &q)?;
                let left = self.multiply(&pq, &r)?;
                let right = self.multiply(&p, &self.multiply(&q, &r)?)?;
                let lu = self.multiply(&self.unit(&p.g.target, &self.target(&p)), &p)?;
                let ru = self.multiply(&p, &self.unit(&p.g.source, &p.e))?;
                Ok(VbGroupoidReport {
                    samples: 1,
                    source: vsub(&self.source(&pq), &self.source(&q)),
                    target: vsub(&self.target(&pq), &self.target(&p)),
                    associativity: vsub(&left.c, &right.c).max(vsub(&left.e, &right.e)),
                    left_unit: vsub(&lu.c, &p.c).max(vsub(&lu.e, &p.e)),
                    right_unit: vsub(&ru.c, &p.c).max(vsub(&ru.e, &p.e)),
                })
            })
            .collect();
        let mut out = VbGroupoidReport { samples: n, ..Default::default() };
        for p in parts {
            let p = p?;
            out.source = out.source.max(p.source);
            out.target = out.target.max(p.target);
            out.associativity = out.associativity.max(p.associativity);
            out.left_unit = out.left_unit.max(p.left_unit);
            out.right_unit = out.right_unit.max(p.right_unit);
        }
        Ok(out)
    }
}

pub const OMEGA_DIFF_CONVENTION: &str =
    "omega_ij = sign * (M_ij - M_ji), M_ij = d2/dr du Omega(g_i(r) after g_j(u)) at 0";

/// Connection data recovered by differentiating a representation at the units.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DifferentiatedRuth {
    pub name: String,
    pub points: Vec<Vec<f64>>,
    pub step: f64,
    /// `d/dr Δ_{g_i(r)}` at `r = 0`, per point and coordinate direction.
    pub raw_c: Vec<Vec<Mat<f64>>>,
    pub raw_e: Vec<Vec<Mat<f64>>>,
    /// Connection matrices `Γ_i = −d/dr Δ_{g_i(r)}`, matching the transport
    /// convention `dτ/dt = −Θτ`.
    pub conn_c: Vec<Vec<Mat<f64>>>,
    pub conn_e: Vec<Vec<Mat<f64>>>,
    /// `ω_ij`, `i < j` in pair order.
    pub omega: Vec<Vec<Mat<f64>>>,
    pub omega_convention: &'static str,
}

fn central(f: impl Fn(f64) -> Mat<f64>, h: f64) -> Mat<f64> {
    (&f(h) - &f(-h)).scale(0.5 / h)
}

/// Central first differences of `Δ` along `g(r) = (x + r·eᵢ, x)` and
/// antisymmetrized mixed second differences of `Ω`.
pub fn differentiate_ruth(rep: &RepUTHGroupoid, points: &[Vec<f64>], h: f64, sign: ConventionSign) -> Result<DifferentiatedRuth> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::usage(format!("finite-difference step must be positive, got {h}")));
    }
    let gp = &rep.groupoid;
    let m = gp.domain().dim();
    for x in points {
        gp.domain().check(x)?;
    }
    let unit = |i: usize| -> Vec<f64> { (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect() };
    let per_point: Vec<_> = points
        .par_iter()
        .map(|x| {
            let raw = |b: Bundle| -> Vec<Mat<f64>> {
                (0..m).map(|i| central(|r| rep.delta(b, &gp.curve(x, &unit(i), r)), h)).collect()
            };
            let (rc, re) = (raw(Bundle::C), raw(Bundle::E));
            // Ω(g_i(r) after g_j(u)): t = x + u eⱼ + r eᵢ, m = x + u eⱼ, s = x.
            let mixed = |i: usize, j: usize| -> Mat<f64> {
                let f = |r: f64, u: f64| {
                    let mid: Vec<f64> = x.iter().enumerate().map(|(k, v)| v + if k == j { u } else { 0.0 }).collect();
                    let top: Vec<f64> = mid.iter().enumerate().map(|(k, v)| v + if k == i { r } else { 0.0 }).collect();
                    (rep.omega)(&top, &mid, x)
                };
                let mut acc = &f(h, h) - &f(h, -h);
                acc = &acc - &f(-h, h);
                acc = &acc + &f(-h, -h);
                acc.scale(0.25 / (h * h))
            };
            let mut om = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    om.push((&mixed(i, j) - &mixed(j, i)).scale(sign.value()));
                }
            }
            let neg = |v: &[Mat<f64>]| v.iter().map(|g| g.scale(-1.0)).collect::<Vec<_>>();
            (neg(&rc), neg(&re), rc, re, om)
        })
        .collect();
    let mut out = DifferentiatedRuth {
        name: rep.name.clone(),
        points: points.to_vec(),
        step: h,
        raw_c: vec![],
        raw_e: vec![],
        conn_c: vec![],
        conn_e: vec![],
        omega: vec![],
        omega_convention: OMEGA_DIFF_CONVENTION,
    };
    for (gc, ge, rc, re, om) in per_point {
        out.conn_c.push(gc);
        out.conn_e.push(ge);
        out.raw_c.push(rc);
        out.raw_e.push(re);
        out.omega.push(om);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct RoundtripReport {
    pub conn_c: f64,
    pub conn_e: f64,
    pub omega: f64,
}

impl RoundtripReport {
    pub fn max(&self) -> f64 {
        self.conn_c.max(self.conn_e).max(self.omega)
    }
}

/// Distance between differentiated data and a split over the same chart.
pub fn roundtrip_residual(d: &DifferentiatedRuth, vba: &SplitVBA) -> Result<RoundtripReport> {
    let m = vba.base().dim();
    if vba.base().rank() != m || d.points.iter().any(|p| p.len() != m) {
        return Err(Error::structural("differentiated data and split live over different charts"));
    }
    let mut out = RoundtripReport::default();
    for (k, x) in d.points.iter().enumerate() {
        for i in 0..m {
            let gc = vba.connection(Bundle::C)[i].eval(x);
            let ge = vba.connection(Bundle::E)[i].eval(x);
            out.conn_c = out.conn_c.max((&gc - &d.conn_c[k][i]).max_abs());
            out.conn_e = out.conn_e.max((&ge - &d.conn_e[k][i]).max_abs());
            for j in i + 1..m {
                let w = vba.omega_at(i, j, x);
                out.omega = out.omega.max((&w - &d.omega[k][pair_index(i, j, m)]).max_abs());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn line() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::cube(&["x"], -1.0, 1.0))
    }

    fn field(src: &str, vars: &[&str]) -> ScalarField {
        ScalarField::from_expr(parse(src, vars).unwrap())
    }

    #[test]
    fn trivial_rep_is_exact() {
        let rep = RepUTHGroupoid::trivial("flat", line(), 1, 1);
        let ax = ruth_axiom_residuals(&rep, 50, 1).unwrap();
        assert_eq!(ax.max(RuthConvention::Literal), 0.0);
        assert_eq!(ax.max(RuthConvention::CompositionCorrected), 0.0);
        let d = differentiate_ruth(&rep, &[vec![0.3]], 1e-4, ConventionSign::Plus).unwrap();
        assert_eq!(d.conn_c[0][0].max_abs(), 0.0);
        assert_eq!(d.conn_e[0][0].max_abs(), 0.0);
        assert!(d.omega[0].is_empty());
    }

    #[test]
    fn vb_multiplication_source_is_exact() {
        let v = ["t_x", "s_x"];
        let rep = RepUTHGroupoid::from_expressions(
            "exp",
            line(),
            Mat::zero_fields(1, 1),
            Mat::from_rows(vec![vec![field("exp(t_x^2 - s_x^2)", &v)]]),
            Mat::from_rows(vec![vec![field("exp(t_x^2 - s_x^2)", &v)]]),
            Mat::zero_fields(1, 1),
        )
        .unwrap();
        let vb = vb_groupoid_from_ruth(&rep, RuthConvention::CompositionCorrected, 100, 3).unwrap();
        let r = vb.residuals(100, 3).unwrap();
        assert_eq!(r.source, 0.0);
        assert!(r.max() < 1e-12, "{r:?}");
    }

    #[test]
    fn failing_axioms_refuse_construction() {
        let v = ["t_x", "m_x", "s_x"];
        let rep = RepUTHGroupoid::trivial("flat", line(), 1, 1);
        let om = Mat::from_rows(vec![vec![field("(t_x - m_x)*(m_x - s_x)^2", &v)]]);
        let bad = rep.with_omega_defect(move |t, m, s| om.eval(&[t[0], m[0], s[0]]));
        assert!(vb_groupoid_from_ruth(&bad, RuthConvention::CompositionCorrected, 50, 0).is_err());
    }

    #[test]
    fn curve_starts_at_unit() {
        let g = PairGroupoid::new(line());
        assert_eq!(g.curve(&[0.2], &[1.0], 0.0), g.unit(&[0.2]));
        let a = Arrow::new(vec![0.1], vec![0.2]);
        assert!(g.multiply(&a, &a).is_err());
        assert_eq!(g.multiply(&a, &g.inverse(&a)).unwrap(), g.unit(&[0.1]));
    }
}
