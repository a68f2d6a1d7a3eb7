#![allow(dead_code)]

use vbob_core::Mat;

pub use vbob_core::fixtures::{synthetic, synthetic_scaled};

pub fn max_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).max_abs()
}
