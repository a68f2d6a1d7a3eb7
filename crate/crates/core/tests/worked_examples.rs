use std::f64::consts::PI;
use std::sync::Arc;

use vbob_core::expr;
use vbob_core::obstruction::{kernel_intersection_check, LatticeCheck};
use vbob_core::{
    build_total_algebroid, check_axioms, compare_algebroids, compat_residuals, leaf_symplectic_area, load_model,
    morphism_residual, mon_variation, period, period_batch, pullback_sphere, shift_splitting, sphere_morphism_residual,
    verdict, BaseIntegrability, ConventionSign, Decision, Mat, MonodromyEvidence, Premises, ScalarField, VerdictOptions,
};

fn field(src: &str, vars: &[&str]) -> ScalarField {
    ScalarField::parse(src, vars).unwrap()
}

#[test]
fn sphere_trivial_period_is_four_pi() {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let s = &m.sphere("gen").unwrap().sphere;
    let p = period(&pullback_sphere(s, v).unwrap(), 201).unwrap();
    assert_eq!(p.matrix.shape(), (1, 1));
    // PAPER: Mon(D) = 4π e c̄ ℤ at e = 1
    assert!((p.matrix.get(0, 0) - 4.0 * PI).abs() < 1e-6, "{}", p.matrix.get(0, 0));
    assert!(p.error_estimate <= 1e-6, "{}", p.error_estimate);
}

#[test]
fn sphere_trivial_verdict_is_nonintegrable() {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let spheres: Vec<_> = m.spheres_of("V").into_iter().cloned().collect();
    let periods: Vec<_> = period_batch(&v, &spheres, 201).into_iter().map(Result::unwrap).collect();
    let gens = MonodromyEvidence::period_generators(&periods, 3, &[1.0]);
    let ev = MonodromyEvidence::new(vec![0.0, 0.0, 1.0, 1.0], 3, 1, gens).unwrap();
    let premises =
        Premises { base: Some(BaseIntegrability::Integrable { citation: "tangent bundle".into() }), generators_complete: None };
    let out = verdict(&v, &periods, Some(&ev), &premises, &VerdictOptions::default()).unwrap();
    assert_eq!(out.decision, Decision::NonIntegrable);
    assert!(matches!(out.lattice, Some(LatticeCheck::Nontrivial { .. })));
}

#[test]
fn reparameterized_sphere_has_same_period() {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let a = period(&pullback_sphere(&m.sphere("gen").unwrap().sphere, v.clone()).unwrap(), 201).unwrap();
    let b = period(&pullback_sphere(&m.sphere("gen-reparam").unwrap().sphere, v).unwrap(), 201).unwrap();
    let tol = 2.0 * a.error_estimate.max(b.error_estimate);
    assert!((a.matrix.get(0, 0) - b.matrix.get(0, 0)).abs() <= tol.max(1e-12));
}

#[test]
fn type0_shift_leaves_period_unchanged() {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let xyz = ["x", "y", "z"];
    let phi: Vec<Mat<ScalarField>> = ["0.3*x*y", "sin(z)", "0.2*x*x - y"]
        .iter()
        .map(|s| Mat::from_rows(vec![vec![field(s, &xyz)]]))
        .collect();
    let shifted = Arc::new(shift_splitting(&v, &phi).unwrap());
    assert!(compat_residuals(&shifted, 100, 0, ConventionSign::Plus).unwrap().max() < 1e-9);
    let s = &m.sphere("gen").unwrap().sphere;
    let a = period(&pullback_sphere(s, v).unwrap(), 201).unwrap();
    let b = period(&pullback_sphere(s, shifted).unwrap(), 201).unwrap();
    let tol = 2.0 * a.error_estimate.max(b.error_estimate);
    assert!((a.matrix.get(0, 0) - b.matrix.get(0, 0)).abs() <= tol, "{a:?} {b:?}");
}

#[test]
fn psi_is_a_morphism() {
    let m = load_model("su2-star").unwrap();
    assert_eq!(m.morphisms.len(), 1);
    let r = morphism_residual(&m.morphisms[0], 100, 0).unwrap();
    assert!(r.max() <= 1e-7, "{r:?}");
}

#[test]
fn su2_total_algebroid_matches_declared_brackets() {
    let m = load_model("su2-star").unwrap();
    let v = &m.split("V").unwrap().vba;
    let built = build_total_algebroid(v, ConventionSign::Plus).unwrap();
    let declared = m.algebroid("D").unwrap();
    let cmp = compare_algebroids(&built, declared, 100, 0).unwrap();
    assert!(cmp.max() <= 1e-9, "{cmp:?}");
    let flipped = build_total_algebroid(v, ConventionSign::Minus).unwrap();
    assert!(compare_algebroids(&flipped, declared, 100, 0).unwrap().max() > 0.1);
}

#[test]
fn builtin_splits_are_compatible() {
    for (model, split) in [("sphere-trivial", "V"), ("su2-star", "V"), ("t1-toy", "V"), ("pair-ruth-flat", "V"), ("pair-ruth-twisted", "V")] {
        let m = load_model(model).unwrap();
        let r = compat_residuals(&m.split(split).unwrap().vba, 100, 0, ConventionSign::Plus).unwrap();
        assert!(r.max() <= 1e-6, "{model}: {r:?}");
    }
}

#[test]
fn builtin_algebroids_satisfy_axioms() {
    for (name, _) in vbob_core::BUILTIN_MODELS {
        let m = load_model(name).unwrap();
        for (a, alg) in &m.algebroids {
            let r = check_axioms(alg, 100, 0).unwrap();
            assert!(r.max() <= 1e-9, "{name}/{a}: {r:?}");
        }
    }
}

#[test]
fn builtin_spheres_are_a_spheres() {
    for (name, _) in vbob_core::BUILTIN_MODELS {
        let m = load_model(name).unwrap();
        for (id, s) in &m.spheres {
            let r = sphere_morphism_residual(&s.sphere, 64).unwrap();
            assert!(r.max() <= 1e-9, "{name}/{id}: {r:?}");
        }
    }
}

fn perturbed_omega(model: &str) -> f64 {
    let m = load_model(model).unwrap();
    let v = &m.split("V").unwrap().vba;
    let xyz = ["x", "y", "z"];
    let bump = field("0.01*(x + y + z)", &xyz);
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
    compat_residuals(&w, 100, 0, ConventionSign::Plus).unwrap().omega_closedness
}

#[test]
fn omega_perturbation_is_detected() {
    for model in ["sphere-trivial", "su2-star"] {
        let r = perturbed_omega(model);
        assert!(r > 1e-3, "{model}: {r}");
    }
}

#[test]
fn leaf_area_law() {
    let m = load_model("su2-star").unwrap();
    let p = m.poisson("piE").unwrap();
    let closed = p.area_closed_form.clone().unwrap();
    for r in [0.5, 1.0, 1.5, 2.0] {
        for e in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let a = leaf_symplectic_area(&p.bivector, &p.leaf_sphere(r, e).unwrap(), 201).unwrap().area;
            // PAPER: A(r,e) = 4πr/(1+e²/2)
            let want = 4.0 * PI * r / (1.0 + e * e / 2.0);
            assert!(((a - want) / want).abs() < 1e-6, "r={r} e={e}: {a} vs {want}");
            assert!((closed.eval(&[r, e]) - want).abs() < 1e-12);
        }
    }
    let area = |r: f64, e: f64| leaf_symplectic_area(&p.bivector, &p.leaf_sphere(r, e)?, 201).map(|a| a.area);
    let (dr, de) = mon_variation(area, 1.0, 1.0, 1e-4).unwrap();
    assert!((dr - 4.0 * PI / 1.5).abs() < 1e-3, "{dr}");
    assert!((de + 4.0 * PI / 2.25).abs() < 1e-3, "{de}");
    let (dr0, de0) = mon_variation(area, 1.0, 0.0, 1e-4).unwrap();
    assert!((dr0 - 4.0 * PI).abs() < 1e-4 && de0.abs() < 1e-4);
}

#[test]
fn area_scales_inversely_with_bivector() {
    let m = load_model("su2-star").unwrap();
    let p = m.poisson("piE").unwrap();
    let s = p.leaf_sphere(1.3, 0.4).unwrap();
    let a = leaf_symplectic_area(&p.bivector, &s, 101).unwrap().area;
    for lambda in [0.5, 2.0, 3.0] {
        let b = leaf_symplectic_area(&p.bivector.scaled(lambda), &s, 101).unwrap().area;
        assert!((b * lambda - a).abs() < 1e-9 * a.abs(), "{lambda}");
    }
}

#[test]
fn su2_asserted_generator_meets_kernel_trivially() {
    let m = load_model("su2-star").unwrap();
    let ev = m.asserted_evidence("V").unwrap().unwrap();
    let g = &ev.generators[0];
    // PAPER: 4π(r⁻¹(x,y,z), −re) at (1,0,0), e = 1
    assert!((g.a_part[0] - 4.0 * PI).abs() < 1e-12 && g.a_part[1] == 0.0 && g.a_part[2] == 0.0);
    assert!((g.c_part[0] + 4.0 * PI).abs() < 1e-12);
    assert!(matches!(kernel_intersection_check(&ev, 1e-6, 10).unwrap(), LatticeCheck::Trivial { .. }));
}

#[test]
fn su2_verdict_is_conditional_with_both_premises() {
    let m = load_model("su2-star").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let spheres: Vec<_> = m.spheres_of("V").into_iter().cloned().collect();
    let periods: Vec<_> = period_batch(&v, &spheres, 201).into_iter().map(Result::unwrap).collect();
    assert!(periods[0].max_abs() < 1e-12);
    let mut ev = m.asserted_evidence("V").unwrap().unwrap();
    ev.generators.extend(MonodromyEvidence::period_generators(&periods, 3, &[1.0]));
    let opts = VerdictOptions::default();
    let none = verdict(&v, &periods, Some(&ev), &Premises::default(), &opts).unwrap();
    assert_eq!(none.decision, Decision::Inconclusive);
    assert!(none.missing_premise.is_some());
    let both = Premises {
        base: Some(BaseIntegrability::Integrable { citation: "linear Poisson".into() }),
        generators_complete: Some("leaf spheres generate".into()),
    };
    let out = verdict(&v, &periods, Some(&ev), &both, &opts).unwrap();
    assert_eq!(out.decision, Decision::IntegrableConditional);
    assert!(out.shortcut.is_none());
}

#[test]
fn t1_toy_uses_injective_shortcut() {
    let m = load_model("t1-toy").unwrap();
    let v = &m.split("V").unwrap().vba;
    let premises =
        Premises { base: Some(BaseIntegrability::Integrable { citation: "tangent algebroid".into() }), generators_complete: None };
    let out = verdict(v, &[], None, &premises, &VerdictOptions::default()).unwrap();
    assert_eq!(out.decision, Decision::IntegrableConditional);
    assert_eq!(out.shortcut.as_deref(), Some("injective core anchor"));
}

#[test]
fn asserted_nonintegrable_base_decides() {
    let m = load_model("t1-toy").unwrap();
    let v = &m.split("V").unwrap().vba;
    let premises = Premises { base: Some(BaseIntegrability::NonIntegrable { citation: "x".into() }), generators_complete: None };
    assert_eq!(verdict(v, &[], None, &premises, &VerdictOptions::default()).unwrap().decision, Decision::NonIntegrable);
}

#[test]
fn tolerance_below_quadrature_error_is_rejected() {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let p = period(&pullback_sphere(&m.sphere("gen").unwrap().sphere, v.clone()).unwrap(), 17).unwrap();
    let opts = VerdictOptions { tol: p.error_estimate / 2.0, ..Default::default() };
    assert!(matches!(verdict(&v, &[p], None, &Premises::default(), &opts), Err(vbob_core::Error::Usage(_))));
}
