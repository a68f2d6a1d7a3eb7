use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::holonomy::{pullback_sphere, transport_nodes, ASphereFrame, PullbackFamily, TRANSPORT_CONVENTION};
use crate::linalg::{simpson_weights, Mat};
use crate::split::{decompose_matrix, SplitVBA, TypeLabel};

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PeriodResult {
    pub sphere: String,
    pub grid: usize,
    pub coarse_grid: usize,
    /// `c×e`
    pub matrix: Mat<f64>,
    /// `|P_N − P_coarse|∞`
    pub error_estimate: f64,
    pub convention: &'static str,
}

impl PeriodResult {
    pub fn max_abs(&self) -> f64 {
        self.matrix.max_abs()
    }
}

fn period_on_grid(p: &dyn PullbackFamily, n: usize) -> Result<Mat<f64>> {
    let (e, c) = p.ranks();
    let h = 1.0 / (n - 1) as f64;
    let w = simpson_weights(n);
    let rows: Vec<Result<Mat<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let s = j as f64 * h;
            let vals: Vec<_> = (0..=2 * (n - 1)).map(|k| p.values(0.5 * h * k as f64, s)).collect();
            let the: Vec<Mat<f64>> = vals.iter().map(|v| v.theta_e_t.clone()).collect();
            let thc: Vec<Mat<f64>> = vals.iter().map(|v| v.theta_c_t.clone()).collect();
            let he = transport_nodes(&the, h);
            let hc = transport_nodes(&thc, h);
            let hc1 = &hc[n - 1];
            let mut row = Mat::zeros(c, e);
            for k in 0..n {
                let t = k as f64 * h;
                let wk = &vals[2 * k].w;
                if !wk.is_finite() {
                    return Err(Error::numeric(format!("non-finite integrand at (t, s) = ({t}, {s})")));
                }
                if wk.max_abs() == 0.0 {
                    continue;
                }
                let inv = hc[k]
                    .inverse()
                    .ok_or_else(|| Error::numeric(format!("singular core holonomy at (t, s) = ({t}, {s})")))?;
                let term = hc1.matmul(&inv).matmul(wk).matmul(&he[k]);
                if !term.is_finite() {
                    return Err(Error::numeric(format!("non-finite integrand at (t, s) = ({t}, {s})")));
                }
                row.axpy(w[k], &term);
            }
            Ok(row)
        })
        .collect();
    let mut total = Mat::zeros(c, e);
    for (j, row) in rows.into_iter().enumerate() {
        total.axpy(w[j], &row?);
    }
    Ok(total)
}

fn coarse_size(n: usize) -> usize {
    let m = n.div_ceil(2);
    if m % 2 == 0 {
        m + 1
    } else {
        m
    }
}

/// `∫∫ hol^C_{1,t} W(t,s) hol^E_{t,0} dt ds` by iterated Simpson on `n` nodes
/// per axis, with a Richardson-style error estimate from a coarser grid.
pub fn period(p: &dyn PullbackFamily, n: usize) -> Result<PeriodResult> {
    if n < 17 || n % 2 == 0 {
        return Err(Error::usage(format!("period grid must be odd and at least 17, got {n}")));
    }
    let fine = period_on_grid(p, n)?;
    let nc = coarse_size(n);
    let coarse = period_on_grid(p, nc)?;
    let error_estimate = (&fine - &coarse).max_abs();
    Ok(PeriodResult {
        sphere: p.id().to_string(),
        grid: n,
        coarse_grid: nc,
        matrix: fine,
        error_estimate,
        convention: TRANSPORT_CONVENTION,
    })
}

/// Periods of one split along several spheres, in order; failures stay per sphere.
pub fn period_batch(vba: &Arc<SplitVBA>, spheres: &[ASphereFrame], n: usize) -> Vec<Result<PeriodResult>> {
    spheres
        .iter()
        .map(|s| pullback_sphere(s, vba.clone()).and_then(|p| period(&p, n)))
        .collect()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    PeriodComputed { sphere: String },
    UserAsserted { citation: String },
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Generator {
    pub a_part: Vec<f64>,
    pub c_part: Vec<f64>,
    pub provenance: Provenance,
}

/// Candidate generators of `Mon(D)` in the fiber over one base point.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MonodromyEvidence {
    pub point: Vec<f64>,
    pub generators: Vec<Generator>,
}

impl MonodromyEvidence {
    pub fn new(point: Vec<f64>, rank_a: usize, rank_c: usize, generators: Vec<Generator>) -> Result<Self> {
        for g in &generators {
            if g.a_part.len() != rank_a || g.c_part.len() != rank_c {
                return Err(Error::structural(format!(
                    "generator of shape ({}, {}), expected ({rank_a}, {rank_c})",
                    g.a_part.len(),
                    g.c_part.len()
                )));
            }
        }
        Ok(MonodromyEvidence { point, generators })
    }

    /// Generators `(0, P·ξ)` for every period and every basis vector `ξ` of
    /// the side fiber, scaled by `fiber`.
    pub fn period_generators(periods: &[PeriodResult], rank_a: usize, fiber: &[f64]) -> Vec<Generator> {
        let mut out = Vec::new();
        for p in periods {
            for (beta, &scale) in fiber.iter().enumerate() {
                if scale == 0.0 {
                    continue;
                }
                out.push(Generator {
                    a_part: vec![0.0; rank_a],
                    c_part: p.matrix.column(beta).iter().map(|v| v * scale).collect(),
                    provenance: Provenance::PeriodComputed { sphere: p.sphere.clone() },
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum LatticeCheck {
    Trivial { discarded_zero_generators: usize },
    Nontrivial { witness: Vec<i64>, c_part: Vec<f64> },
    Inconclusive { reason: String },
}

const MAX_COMBINATIONS: u128 = 4_000_000;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Searches integer combinations of the generators for a nonzero element of
/// `Mon(D) ∩ ker p`.
pub fn kernel_intersection_check(ev: &MonodromyEvidence, tol: f64, coeff_bound: i64) -> Result<LatticeCheck> {
    if coeff_bound < 1 {
        return Err(Error::usage("coefficient bound must be at least 1"));
    }
    let (kept, zero): (Vec<&Generator>, Vec<&Generator>) =
        ev.generators.iter().partition(|g| inf_norm(&g.a_part).max(inf_norm(&g.c_part)) > tol);
    let discarded = zero.len();
    if kept.is_empty() {
        return Ok(LatticeCheck::Trivial { discarded_zero_generators: discarded });
    }
    let g = kept.len();
    if kept.iter().all(|v| inf_norm(&v.a_part) <= tol) {
        let i = kept.iter().position(|v| inf_norm(&v.c_part) > tol).expect("kept generators are nonzero");
        let idx = ev.generators.iter().position(|v| std::ptr::eq(v, kept[i])).expect("present");
        let mut witness = vec![0; ev.generators.len()];
        witness[idx] = 1;
        return Ok(LatticeCheck::Nontrivial { witness, c_part: kept[i].c_part.clone() });
    }
    let side = (2 * coeff_bound + 1) as u128;
    if side.checked_pow(g as u32).is_none_or(|n| n > MAX_COMBINATIONS) {
        return Ok(LatticeCheck::Inconclusive {
            reason: format!("{g} generators with bound {coeff_bound} exceed the enumeration budget"),
        });
    }
    let ra = kept[0].a_part.len();
    let rc = kept[0].c_part.len();
    let mut n = vec![-coeff_bound; g];
    let mut annihilating_zero = false;
    let mut best: Option<(i64, Vec<i64>, Vec<f64>)> = None;
    loop {
        if n.iter().any(|&v| v != 0) {
            let mut a = vec![0.0; ra];
            let mut c = vec![0.0; rc];
            for (k, gen) in kept.iter().enumerate() {
                let nk = n[k] as f64;
                for (x, y) in a.iter_mut().zip(&gen.a_part) {
                    *x += nk * y;
                }
                for (x, y) in c.iter_mut().zip(&gen.c_part) {
                    *x += nk * y;
                }
            }
            if inf_norm(&a) <= tol {
                if inf_norm(&c) > tol {
                    let l1: i64 = n.iter().map(|v| v.abs()).sum();
                    if best.as_ref().is_none_or(|(b, _, _)| l1 < *b) {
                        best = Some((l1, n.clone(), c));
                    }
                } else {
                    annihilating_zero = true;
                }
            }
        }
        let mut k = 0;
        while k < g {
            if n[k] < coeff_bound {
                n[k] += 1;
                break;
            }
            n[k] = -coeff_bound;
            k += 1;
        }
        if k == g {
            break;
        }
    }
    if let Some((_, combo, c_part)) = best {
        let mut witness = vec![0; ev.generators.len()];
        for (k, gen) in kept.iter().enumerate() {
            let idx = ev.generators.iter().position(|v| std::ptr::eq(v, *gen)).expect("present");
            witness[idx] = combo[k];
        }
        return Ok(LatticeCheck::Nontrivial { witness, c_part });
    }
    if annihilating_zero {
        return Ok(LatticeCheck::Inconclusive {
            reason: "a nonzero combination vanishes entirely; generators are dependent".into(),
        });
    }
    Ok(LatticeCheck::Trivial { discarded_zero_generators: discarded })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Decision {
    NonIntegrable,
    #[serde(rename = "Integrable-conditional")]
    IntegrableConditional,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "claim", rename_all = "kebab-case")]
pub enum BaseIntegrability {
    Integrable { citation: String },
    NonIntegrable { citation: String },
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Premises {
    pub base: Option<BaseIntegrability>,
    pub generators_complete: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictOptions {
    pub tol: f64,
    pub n_points: usize,
    pub seed: u64,
    pub rank_tol: f64,
    pub coeff_bound: i64,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions { tol: 1e-4, n_points: 100, seed: 0, rank_tol: 1e-9, coeff_bound: 10 }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PeriodSummary {
    pub sphere: String,
    pub max_abs: f64,
    pub error_estimate: f64,
    pub exceeds_tolerance: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Verdict {
    pub decision: Decision,
    pub premises: Premises,
    pub tol: f64,
    pub shortcut: Option<String>,
    pub periods: Vec<PeriodSummary>,
    pub lattice: Option<LatticeCheck>,
    pub missing_premise: Option<String>,
    pub rationale: Vec<String>,
}

fn core_anchor_injective(vba: &SplitVBA, opts: &VerdictOptions) -> Result<bool> {
    let c = vba.rank_c();
    if vba.core_anchor().is_zero() {
        return Ok(false);
    }
    for x in vba.base().domain().sample(opts.n_points, opts.seed)? {
        let dec = decompose_matrix(&vba.core_anchor().eval(&x), &x, opts.rank_tol)?;
        if dec.rank != c || dec.label == TypeLabel::NonregularAtTolerance {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn verdict(
    vba: &SplitVBA,
    periods: &[PeriodResult],
    evidence: Option<&MonodromyEvidence>,
    premises: &Premises,
    opts: &VerdictOptions,
) -> Result<Verdict> {
    let tol = opts.tol;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::usage(format!("tolerance must be positive, got {tol}")));
    }
    if let Some(p) = periods.iter().find(|p| p.error_estimate >= tol) {
        return Err(Error::usage(format!(
            "tolerance {tol} is below the quadrature error {} of sphere '{}'",
            p.error_estimate, p.sphere
        )));
    }
    let summaries: Vec<PeriodSummary> = periods
        .iter()
        .map(|p| PeriodSummary {
            sphere: p.sphere.clone(),
            max_abs: p.max_abs(),
            error_estimate: p.error_estimate,
            exceeds_tolerance: p.max_abs() > tol + p.error_estimate,
        })
        .collect();
    let mut out = Verdict {
        decision: Decision::Inconclusive,
        premises: premises.clone(),
        tol,
        shortcut: None,
        periods: summaries,
        lattice: None,
        missing_premise: None,
        rationale: Vec::new(),
    };

    if let Some(BaseIntegrability::NonIntegrable { .. }) = &premises.base {
        out.decision = Decision::NonIntegrable;
        out.rationale.push("the base algebroid is asserted non-integrable; D integrable would force A integrable".into());
        return Ok(out);
    }
    let base_integrable = matches!(premises.base, Some(BaseIntegrability::Integrable { .. }));
    if base_integrable && core_anchor_injective(vba, opts)? {
        out.decision = Decision::IntegrableConditional;
        out.shortcut = Some("injective core anchor".into());
        out.rationale.push(format!(
            "core anchor has full column rank {} at {} sampled points; periods are not needed",
            vba.rank_c(),
            opts.n_points
        ));
        return Ok(out);
    }
    if let Some(p) = out.periods.iter().find(|p| p.exceeds_tolerance) {
        out.decision = Decision::NonIntegrable;
        out.rationale.push(format!(
            "period along '{}' has norm {:.12} > tol + error; rescaling the fiber point by λ → 0 yields \
             nonzero monodromy elements of ker p accumulating at 0",
            p.sphere, p.max_abs
        ));
    }
    if let Some(ev) = evidence {
        let check = kernel_intersection_check(ev, tol, opts.coeff_bound)?;
        if let LatticeCheck::Nontrivial { witness, .. } = &check {
            out.decision = Decision::NonIntegrable;
            out.rationale.push(format!("integer combination {witness:?} lies in Mon(D) ∩ ker p"));
        }
        out.lattice = Some(check);
    }
    if out.decision == Decision::NonIntegrable {
        return Ok(out);
    }

    let mut missing = Vec::new();
    if !base_integrable {
        missing.push("integrability of the base algebroid (--assert-A-integrable)");
    }
    if premises.generators_complete.is_none() {
        missing.push("completeness of the sphere/generator list (--assert-generators-complete)");
    }
    if let Some(LatticeCheck::Inconclusive { .. }) = &out.lattice {
        missing.push("a conclusive Mon(D) ∩ ker p lattice check");
    }
    if missing.is_empty() {
        out.decision = Decision::IntegrableConditional;
        out.rationale.push(format!("all {} periods are within tolerance and Mon(D) ∩ ker p is trivial", periods.len()));
    } else {
        out.missing_premise = Some(missing.join("; "));
    }
    Ok(out)
}
