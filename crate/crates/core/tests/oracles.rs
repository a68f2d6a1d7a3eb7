mod common;

use nalgebra::DMatrix;
use vbob_core::holonomy::PullbackFamily;
use vbob_core::split::curvature;
use vbob_core::{
    holonomy_curvature_residual, load_model, period, transport, Bundle, FrameAlgebroid, Mat,
};

fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| *m.get(i, j))
}

fn from_na(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

#[test]
fn constant_transport_matches_expm() {
    let thetas = [
        Mat::from_rows(vec![vec![0.0, -1.2], vec![1.2, 0.0]]),
        Mat::from_rows(vec![vec![0.3, 0.5, -0.1], vec![-0.4, 0.2, 0.7], vec![0.6, -0.3, -0.5]]),
        Mat::from_rows(vec![vec![2.0, 1.0], vec![0.0, -1.5]]),
    ];
    for th in thetas {
        let got = transport(|_| th.clone(), 0.0, 0.0, 1.0, 400).unwrap().holonomy;
        let want = from_na(&(-to_na(&th)).exp());
        assert!(common::max_diff(&got, &want) < 1e-10, "{:?}", common::max_diff(&got, &want));
    }
}

fn rk4_pair(p: &dyn PullbackFamily, s: f64, steps: usize) -> Mat<f64> {
    // (H^E, Z) with H^E' = −Θ_E H^E, Z' = −Θ_C Z + W H^E; Z(1) is the inner integral.
    let (e, c) = p.ranks();
    let f = |t: f64, he: &Mat<f64>, z: &Mat<f64>| {
        let v = p.values(t, s);
        let dhe = v.theta_e_t.matmul(he).scale(-1.0);
        let dz = &v.theta_c_t.matmul(z).scale(-1.0) + &v.w.matmul(he);
        (dhe, dz)
    };
    let h = 1.0 / steps as f64;
    let mut he = Mat::identity(e);
    let mut z = Mat::zeros(c, e);
    for k in 0..steps {
        let t = k as f64 * h;
        let add = |a: &Mat<f64>, b: &Mat<f64>, k: f64| {
            let mut o = a.clone();
            o.axpy(k, b);
            o
        };
        let (a1, b1) = f(t, &he, &z);
        let (a2, b2) = f(t + h / 2.0, &add(&he, &a1, h / 2.0), &add(&z, &b1, h / 2.0));
        let (a3, b3) = f(t + h / 2.0, &add(&he, &a2, h / 2.0), &add(&z, &b2, h / 2.0));
        let (a4, b4) = f(t + h, &add(&he, &a3, h), &add(&z, &b3, h));
        for (a, w) in [(&a1, 1.0), (&a2, 2.0), (&a3, 2.0), (&a4, 1.0)] {
            he.axpy(h * w / 6.0, a);
        }
        for (b, w) in [(&b1, 1.0), (&b2, 2.0), (&b3, 2.0), (&b4, 1.0)] {
            z.axpy(h * w / 6.0, b);
        }
    }
    z
}

fn midpoint_oracle(p: &dyn PullbackFamily, slices: usize, steps: usize) -> Mat<f64> {
    let (e, c) = p.ranks();
    let mut acc = Mat::zeros(c, e);
    for j in 0..slices {
        let s = (j as f64 + 0.5) / slices as f64;
        acc.axpy(1.0 / slices as f64, &rk4_pair(p, s, steps));
    }
    acc
}

#[test]
fn period_matches_midpoint_rk4_oracle() {
    let fam = common::synthetic();
    let coarse = midpoint_oracle(&fam, 200, 400);
    let fine = midpoint_oracle(&fam, 400, 400);
    // Richardson on the midpoint rule in s.
    let oracle = (&fine.scale(4.0) - &coarse).scale(1.0 / 3.0);
    let got = period(&fam, 201).unwrap();
    let d = common::max_diff(&got.matrix, &oracle);
    assert!(d < 1e-8, "period vs oracle: {d:e}");
    assert!(got.error_estimate < 1e-6);
}

#[test]
fn period_is_linear_in_integrand() {
    let a = period(&common::synthetic(), 101).unwrap();
    let b = period(&common::synthetic_scaled(-2.5), 101).unwrap();
    assert!(common::max_diff(&b.matrix, &a.matrix.scale(-2.5)) < 1e-12);
}

#[test]
fn holonomy_curvature_identity_converges() {
    let fam = common::synthetic();
    let mut res = Vec::new();
    for n in [50, 100, 200] {
        let r = holonomy_curvature_residual(&fam, Bundle::E, n).unwrap();
        assert!(r.boundary_term > 1e-3);
        res.push(r.residual);
    }
    assert!(res[2] <= 1e-4, "{res:?}");
    let order = (res[1] / res[2]).log2();
    assert!(order >= 1.9, "order {order}, {res:?}");
    let rc = holonomy_curvature_residual(&fam, Bundle::C, 200).unwrap();
    assert!(rc.residual <= 1e-4);
}

#[test]
fn holonomy_curvature_identity_on_sphere_pullback() {
    let m = load_model("pair-ruth-twisted").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let base = v.base().clone();
    let sphere = vbob_core::ASphereFrame::new(
        "disc",
        base,
        vbob_core::SphereKind::TangentLift {
            gamma: vec![
                vbob_core::ScalarField::parse("0.4*sin(pi*t)^2*sin(pi*s)", &["t", "s"]).unwrap(),
                vbob_core::ScalarField::parse("0.3*sin(pi*t)*sin(pi*s)^2", &["t", "s"]).unwrap(),
            ],
        },
    )
    .unwrap();
    let p = vbob_core::pullback_sphere(&sphere, v).unwrap();
    let r = holonomy_curvature_residual(&p, Bundle::C, 200).unwrap();
    assert!(r.residual <= 1e-4 && r.boundary_term < 1e-12, "{r:?}");
}

fn fd_curvature(a: &FrameAlgebroid, conn: &[Mat<vbob_core::ScalarField>], i: usize, j: usize, x: &[f64]) -> Mat<f64> {
    let h = 1e-5;
    let d = |g: &Mat<vbob_core::ScalarField>, v: &[f64]| {
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
        (&g.eval(&xp) - &g.eval(&xm)).scale(0.5 / h)
    };
    let rho = a.anchor().eval(x);
    let (gi, gj) = (conn[i].eval(x), conn[j].eval(x));
    let mut r = &d(&conn[j], &rho.column(i)) - &d(&conn[i], &rho.column(j));
    r = &r + &gi.commutator(&gj);
    for (k, gk) in conn.iter().enumerate() {
        r.axpy(-a.structure(i, j, k).eval(x), &gk.eval(x));
    }
    r
}

#[test]
fn curvature_ad_matches_finite_differences() {
    for model in ["pair-ruth-flat", "pair-ruth-twisted", "su2-star"] {
        let m = load_model(model).unwrap();
        let v = &m.split("V").unwrap().vba;
        let base = v.base();
        for x in base.domain().sample(20, 4).unwrap() {
            for bundle in [Bundle::E, Bundle::C] {
                let r = base.rank();
                for i in 0..r {
                    for j in i + 1..r {
                        let ad = curvature(v, bundle).get(i, j, &x).unwrap();
                        let fd = fd_curvature(base, v.connection(bundle), i, j, &x);
                        assert!(common::max_diff(&ad, &fd) < 1e-7, "{model} {bundle} ({i},{j})");
                    }
                }
            }
        }
    }
    let m = load_model("pair-ruth-twisted").unwrap();
    let v = &m.split("V").unwrap().vba;
    let r = curvature(v, Bundle::C).get(0, 1, &[0.2, 0.3]).unwrap();
    assert_eq!(*r.get(0, 0), -1.0);
}
