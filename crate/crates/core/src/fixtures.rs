//! Synthetic pullback families with known structure, for tests and benches.

use crate::dual::{Jet, Scalar};
use crate::holonomy::{FnPullback, PullbackFamily, PullbackValues};
use crate::linalg::Mat;

fn m2(a: [[Jet; 2]; 2]) -> Mat<Jet> {
    Mat::from_rows(a.iter().map(|r| r.to_vec()).collect())
}

fn k(v: f64) -> Jet {
    Jet::from_f64(v)
}

/// Smooth non-abelian connection forms and integrand on the unit square,
/// rank 2 on both sides. Not an A-sphere: boundary terms do not vanish.
pub fn synthetic() -> FnPullback {
    FnPullback::new("synthetic", 2, 2, |t, s| {
        let pi = k(std::f64::consts::PI);
        PullbackValues {
            theta_e_t: m2([[(pi * s).sin() * t, s * s], [-(s * t), k(0.5) * (t + s).cos()]]),
            theta_e_s: m2([[t * s, t.sin()], [(k(2.0) * s).cos() * t, -t]]),
            theta_c_t: m2([[k(0.3) * s.cos(), t], [-s, k(0.2) * t * s]]),
            theta_c_s: m2([[t, k(0.5)], [k(-0.5) * t * t, s]]),
            w: m2([[(-t).exp() * s, t * s], [(pi * t).sin() * (pi * s).sin(), k(1.0) - t]]),
        }
    })
}

/// [`synthetic`] with `W` scaled by `lambda`, connections untouched.
pub fn synthetic_scaled(lambda: f64) -> FnPullback {
    let base = synthetic();
    FnPullback::new("synthetic-scaled", 2, 2, move |t, s| {
        let mut v = base.jet(t, s);
        v.w = v.w.scale(Jet::from_f64(lambda));
        v
    })
}

/// `Θ_T = t·K₁`, `Θ_S = s·K₂` on both bundles with `W = 0`.
pub fn linear_family(k1: [[f64; 2]; 2], k2: [[f64; 2]; 2]) -> FnPullback {
    let m = |c: [[f64; 2]; 2], x: Jet| Mat::from_fn(2, 2, |i, j| x * k(c[i][j]));
    FnPullback::new("linear", 2, 2, move |t, s| PullbackValues {
        theta_e_t: m(k1, t),
        theta_e_s: m(k2, s),
        theta_c_t: m(k1, t),
        theta_c_s: m(k2, s),
        w: Mat::zeros(2, 2),
    })
}
