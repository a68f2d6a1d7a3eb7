//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to see
//! the table.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde_json::Value;
use vbob_core::expr;
use vbob_core::fixtures::{linear_family, synthetic};
use vbob_core::holonomy::PullbackFamily;
use vbob_core::ruth::RuthConvention;
use vbob_core::{
    build_total_algebroid, compare_algebroids, compat_residuals, differentiate_ruth, holonomy_curvature_residual,
    kernel_intersection_check, leaf_symplectic_area, load_model, mon_variation, morphism_residual, period,
    pullback_sphere, roundtrip_residual, transport, verdict, BaseIntegrability, ChartDomain, ConventionSign, Decision,
    LatticeCheck, Mat, MonodromyEvidence, Premises, RepUTHGroupoid, ScalarField, VerdictOptions,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cli_json(args: &[&str]) -> (i32, Value) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["vbob"];
    full.extend_from_slice(args);
    full.push("--json");
    let code = vbob_cli::run(full, &mut out, &mut err);
    let v = serde_json::from_slice(&out).unwrap_or(Value::Null);
    (code, v)
}

fn max_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).max_abs()
}

fn ac1() -> Outcome {
    let t = Instant::now();
    let (code, v) = cli_json(&["period", "sphere-trivial", "--sphere", "gen", "--grid", "201"]);
    let secs = t.elapsed().as_secs_f64();
    let p = v["period_matrix"][0][0].as_f64().unwrap_or(f64::NAN);
    let err = v["error_estimate"].as_f64().unwrap_or(f64::NAN);
    let shape_ok = v["period_matrix"].as_array().is_some_and(|r| r.len() == 1 && r[0].as_array().unwrap().len() == 1);
    let (_, verdict) = cli_json(&["verdict", "sphere-trivial"]);
    let decision = verdict["decision"].as_str().unwrap_or("?").to_string();
    check(
        code == 0 && shape_ok && (p - 4.0 * PI).abs() <= 1e-6 && secs < 2.0 && decision == "NonIntegrable",
        format!("P = {p:.12} (|P-4pi| = {:.2e}, err {err:.1e}, {secs:.2}s), verdict {decision}", (p - 4.0 * PI).abs()),
    )
}

fn ac2() -> Outcome {
    let m = load_model("su2-star").unwrap();
    let t = Instant::now();
    let r = morphism_residual(&m.morphisms[0], 100, 0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(
        r.anchor_residual <= 1e-7 && r.bracket_residual <= 1e-7 && secs < 1.0,
        format!("anchor {:.1e}, bracket {:.1e} over 100 samples ({secs:.2}s)", r.anchor_residual, r.bracket_residual),
    )
}

fn ac3() -> Outcome {
    let m = load_model("su2-star").unwrap();
    let p = m.poisson("piE").unwrap();
    let area = |r: f64, e: f64| -> vbob_core::Result<f64> {
        Ok(leaf_symplectic_area(&p.bivector, &p.leaf_sphere(r, e)?, 201)?.area)
    };
    let t = Instant::now();
    let mut worst_rel: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for r in [0.5, 1.0, 1.5, 2.0] {
        for e in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let f = 1.0 + e * e / 2.0;
            let want = 4.0 * PI * r / f;
            worst_rel = worst_rel.max((area(r, e).unwrap() - want).abs() / want);
            let (dr, de) = mon_variation(area, r, e, 1e-4).unwrap();
            worst_grad = worst_grad.max((dr - 4.0 * PI / f).abs()).max((de + 4.0 * PI * r * e / (f * f)).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst_rel <= 1e-6 && worst_grad <= 1e-3 && secs < 5.0,
        format!("max rel area error {worst_rel:.1e}, max gradient error {worst_grad:.1e} on 4x5 grid ({secs:.2}s)"),
    )
}

fn ac4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detected: f64 = f64::INFINITY;
    for model in ["sphere-trivial", "su2-star"] {
        let m = load_model(model).unwrap();
        let v = &m.split("V").unwrap().vba;
        worst = worst.max(compat_residuals(v, 100, 0, ConventionSign::Plus).unwrap().max());
        let bump = ScalarField::parse("0.01*(x + y + z)", &["x", "y", "z"]).unwrap();
        let w = v
            .with_omega(|i, j| {
                let base = v.omega_field(i, j).clone();
                if (i, j) == (0, 1) {
                    Mat::from_fn(1, 1, |_, _| ScalarField::from_expr(expr::add(base.get(0, 0).expr().clone(), bump.expr().clone())))
                } else {
                    base
                }
            })
            .unwrap();
        detected = detected.min(compat_residuals(&w, 100, 0, ConventionSign::Plus).unwrap().omega_closedness);
    }
    check(
        worst <= 1e-6 && detected > 1e-3,
        format!("max compat residual {worst:.1e}; perturbed omega closedness >= {detected:.2e}"),
    )
}

fn orders(fam: &dyn PullbackFamily) -> (Vec<f64>, f64) {
    let r: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| holonomy_curvature_residual(fam, vbob_core::Bundle::E, n).unwrap().residual)
        .collect();
    let order = (r[1] / r[2]).log2();
    (r, order)
}

fn ac5() -> Outcome {
    let fam = linear_family([[0.3, 1.2], [-0.7, 0.1]], [[0.5, -0.4], [0.9, -0.2]]);
    let (r, order) = orders(&fam);
    let (rich, rich_order) = orders(&synthetic());
    check(
        r[2] <= 1e-4 && order >= 2.0,
        format!(
            "t*K1, s*K2 family N=50/100/200: {:.2e} {:.2e} {:.2e}, order {order:.3}; \
             richer family {:.2e} {:.2e} {:.2e}, order {rich_order:.3}",
            r[0], r[1], r[2], rich[0], rich[1], rich[2]
        ),
    )
}

fn ac6() -> Outcome {
    let m = load_model("su2-star").unwrap();
    let built = build_total_algebroid(&m.split("V").unwrap().vba, ConventionSign::Plus).unwrap();
    let cmp = compare_algebroids(&built, m.algebroid("D").unwrap(), 100, 0).unwrap();
    check(cmp.max() <= 1e-9, format!("bracket {:.1e}, anchor {:.1e} at 100 samples", cmp.bracket_difference, cmp.anchor_difference))
}

fn ac7() -> Outcome {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let xyz = ["x", "y", "z"];
    let phi: Vec<Mat<ScalarField>> = ["0.3*x*y", "sin(z)", "0.2*x*x - y"]
        .iter()
        .map(|s| Mat::from_rows(vec![vec![ScalarField::parse(s, &xyz).unwrap()]]))
        .collect();
    let shifted = Arc::new(vbob_core::shift_splitting(&v, &phi).unwrap());
    let gen = &m.sphere("gen").unwrap().sphere;
    let a = period(&pullback_sphere(gen, v.clone()).unwrap(), 201).unwrap();
    let b = period(&pullback_sphere(gen, shifted).unwrap(), 201).unwrap();
    let c = period(&pullback_sphere(&m.sphere("gen-reparam").unwrap().sphere, v).unwrap(), 201).unwrap();
    let shift = (a.matrix.get(0, 0) - b.matrix.get(0, 0)).abs();
    let rep = (a.matrix.get(0, 0) - c.matrix.get(0, 0)).abs();
    let tol_b = 2.0 * a.error_estimate.max(b.error_estimate);
    let tol_c = 2.0 * a.error_estimate.max(c.error_estimate);
    check(
        shift <= tol_b && rep <= tol_c,
        format!("type-0 shift {shift:.1e} (bound {tol_b:.1e}), reparameterization {rep:.1e} (bound {tol_c:.1e})"),
    )
}

fn ac8() -> Outcome {
    let opts = VerdictOptions::default();
    let st = load_model("sphere-trivial").unwrap();
    let v = st.split("V").unwrap().vba.clone();
    let p = period(&pullback_sphere(&st.sphere("gen").unwrap().sphere, v.clone()).unwrap(), 201).unwrap();
    let gens = MonodromyEvidence::period_generators(std::slice::from_ref(&p), v.base().rank(), &[1.0]);
    let ev = MonodromyEvidence::new(vec![1.0, 0.0, 0.0], v.base().rank(), v.rank_c(), gens).unwrap();
    let first = kernel_intersection_check(&ev, opts.tol, opts.coeff_bound).unwrap();
    let first_ok = matches!(&first, LatticeCheck::Nontrivial { witness, .. } if witness == &vec![1]);

    let su2 = load_model("su2-star").unwrap();
    let ev = su2.asserted_evidence("V").unwrap().unwrap();
    let second = kernel_intersection_check(&ev, opts.tol, opts.coeff_bound).unwrap();
    let second_ok = matches!(second, LatticeCheck::Trivial { .. });

    let t1 = load_model("t1-toy").unwrap();
    let premises = Premises { base: Some(BaseIntegrability::Integrable { citation: "tangent algebroid".into() }), generators_complete: None };
    let out = verdict(&t1.split("V").unwrap().vba, &[], None, &premises, &opts).unwrap();
    let third_ok = out.decision == Decision::IntegrableConditional && out.shortcut.as_deref() == Some("injective core anchor");
    check(
        first_ok && second_ok && third_ok,
        format!("sphere-trivial {first:?}; su2-star {second:?}; t1-toy {:?} via {:?}", out.decision, out.shortcut),
    )
}

fn ac9() -> Outcome {
    let m = load_model("pair-ruth-flat").unwrap();
    let v = &m.split("V").unwrap().vba;
    let rep = RepUTHGroupoid::from_flat_split(v, 256).unwrap();
    let pts = v.base().domain().sample(25, 0).unwrap();
    let d = differentiate_ruth(&rep, &pts, 1e-4, ConventionSign::Plus).unwrap();
    let rt = roundtrip_residual(&d, v).unwrap();
    let axioms_ok = vbob_core::ruth_axiom_residuals(&rep, 100, 0).unwrap().max(RuthConvention::CompositionCorrected) <= 1e-6;

    let flat = RepUTHGroupoid::trivial("flat", Arc::new(ChartDomain::cube(&["x", "y"], -1.0, 1.0)), 2, 2);
    let z = differentiate_ruth(&flat, &pts, 1e-4, ConventionSign::Plus).unwrap();
    let zero = z.conn_c.iter().chain(&z.conn_e).chain(&z.omega).flatten().all(|g| g.max_abs() == 0.0);
    check(
        rt.max() <= 1e-5 && zero && axioms_ok,
        format!("roundtrip conn_e {:.1e}, conn_c {:.1e}, omega {:.1e}; flat data exactly zero: {zero}", rt.conn_e, rt.conn_c, rt.omega),
    )
}

fn rk4_inner(p: &dyn PullbackFamily, s: f64, steps: usize) -> Mat<f64> {
    let (e, c) = p.ranks();
    let f = |t: f64, he: &Mat<f64>, z: &Mat<f64>| {
        let v = p.values(t, s);
        (v.theta_e_t.matmul(he).scale(-1.0), &v.theta_c_t.matmul(z).scale(-1.0) + &v.w.matmul(he))
    };
    let h = 1.0 / steps as f64;
    let (mut he, mut z) = (Mat::identity(e), Mat::zeros(c, e));
    let plus = |a: &Mat<f64>, b: &Mat<f64>, k: f64| {
        let mut o = a.clone();
        o.axpy(k, b);
        o
    };
    for k in 0..steps {
        let t = k as f64 * h;
        let (a1, b1) = f(t, &he, &z);
        let (a2, b2) = f(t + h / 2.0, &plus(&he, &a1, h / 2.0), &plus(&z, &b1, h / 2.0));
        let (a3, b3) = f(t + h / 2.0, &plus(&he, &a2, h / 2.0), &plus(&z, &b2, h / 2.0));
        let (a4, b4) = f(t + h, &plus(&he, &a3, h), &plus(&z, &b3, h));
        for (a, b, w) in [(&a1, &b1, 1.0), (&a2, &b2, 2.0), (&a3, &b3, 2.0), (&a4, &b4, 1.0)] {
            he.axpy(h * w / 6.0, a);
            z.axpy(h * w / 6.0, b);
        }
    }
    z
}

fn ac10() -> Outcome {
    let fam = synthetic();
    let midpoint = |slices: usize| {
        let (e, c) = fam.ranks();
        let mut acc = Mat::zeros(c, e);
        for j in 0..slices {
            acc.axpy(1.0 / slices as f64, &rk4_inner(&fam, (j as f64 + 0.5) / slices as f64, 400));
        }
        acc
    };
    let oracle = (&midpoint(400).scale(4.0) - &midpoint(200)).scale(1.0 / 3.0);
    let got = period(&fam, 201).unwrap();
    let d_period = max_diff(&got.matrix, &oracle);

    let mut d_exp: f64 = 0.0;
    for th in [
        Mat::from_rows(vec![vec![0.0, -1.2], vec![1.2, 0.0]]),
        Mat::from_rows(vec![vec![0.3, 0.5, -0.1], vec![-0.4, 0.2, 0.7], vec![0.6, -0.3, -0.5]]),
    ] {
        let hol = transport(|_| th.clone(), 0.0, 0.0, 1.0, 400).unwrap().holonomy;
        let na = -DMatrix::from_fn(th.rows(), th.cols(), |i, j| *th.get(i, j));
        let e = na.exp();
        d_exp = d_exp.max(max_diff(&hol, &Mat::from_fn(e.nrows(), e.ncols(), |i, j| e[(i, j)])));
    }
    check(
        d_period <= 1e-8 && d_exp <= 1e-10,
        format!("period vs midpoint/RK4 oracle {d_period:.1e}; transport vs expm {d_exp:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("non-integrable example period and verdict", ac1),
        ("integrable example morphism", ac2),
        ("leaf-area law and gradients", ac3),
        ("compatibility relations and omega detection", ac4),
        ("holonomy-curvature identity", ac5),
        ("total-algebroid reconstruction", ac6),
        ("splitting and reparameterization invariance", ac7),
        ("kernel-lattice logic", ac8),
        ("ruth roundtrip", ac9),
        ("oracle equivalence", ac10),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!("AC{:<2} {} {name}: {} [{secs:.2}s]", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: 10/10 passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
