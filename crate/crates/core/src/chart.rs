use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::MAX_VARS;
use crate::error::{Error, Result};

const PRIMES: [u64; MAX_VARS] = [2, 3, 5, 7, 11, 13, 17, 19];

/// A coordinate box, optionally with a ball around the origin removed.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartDomain {
    coords: Vec<String>,
    bounds: Vec<(f64, f64)>,
    excluded_radius: Option<f64>,
    ball_dims: usize,
    sample_count: usize,
}

impl ChartDomain {
    pub fn new(coords: Vec<String>, bounds: Vec<(f64, f64)>, excluded_radius: Option<f64>, sample_count: usize) -> Result<Self> {
        let m = coords.len();
        Self::with_ball_dims(coords, bounds, excluded_radius, m, sample_count)
    }

    /// Like [`ChartDomain::new`], but the excluded ball is measured in the
    /// first `ball_dims` coordinates only (a cylinder over the rest).
    pub fn with_ball_dims(
        coords: Vec<String>,
        bounds: Vec<(f64, f64)>,
        excluded_radius: Option<f64>,
        ball_dims: usize,
        sample_count: usize,
    ) -> Result<Self> {
        let m = coords.len();
        if m == 0 || m > MAX_VARS {
            return Err(Error::structural(format!("chart dimension must be in 1..={MAX_VARS}, got {m}")));
        }
        if bounds.len() != m {
            return Err(Error::structural(format!("{m} coordinates but {} bounds", bounds.len())));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::structural(format!("empty interval [{lo}, {hi}] for '{}'", coords[i])));
            }
        }
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].contains(c) {
                return Err(Error::structural(format!("duplicate coordinate '{c}'")));
            }
        }
        if ball_dims == 0 || ball_dims > m {
            return Err(Error::structural("ball dimension out of range"));
        }
        if let Some(r) = excluded_radius {
            let far: f64 = bounds[..ball_dims].iter().map(|&(lo, hi)| lo.abs().max(hi.abs()).powi(2)).sum::<f64>().sqrt();
            if !(r >= 0.0 && r < far) {
                return Err(Error::structural(format!("excluded radius {r} must be in [0, {far})")));
            }
        }
        if sample_count == 0 {
            return Err(Error::structural("sample_count must be positive"));
        }
        Ok(ChartDomain { coords, bounds, excluded_radius, ball_dims, sample_count })
    }

    /// Plain box without exclusion.
    pub fn cube(coords: &[&str], lo: f64, hi: f64) -> Self {
        let n = coords.len();
        Self::new(coords.iter().map(|s| s.to_string()).collect(), vec![(lo, hi); n], None, 100).expect("valid box")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_names(&self) -> Vec<&str> {
        self.coords.iter().map(String::as_str).collect()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn excluded_radius(&self) -> Option<f64> {
        self.excluded_radius
    }

    pub fn ball_dims(&self) -> usize {
        self.ball_dims
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        if x.len() != self.dim() {
            return false;
        }
        let in_box = x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v >= lo - SLACK && v <= hi + SLACK);
        let outside_ball = match self.excluded_radius {
            Some(r) => x[..self.ball_dims].iter().map(|v| v * v).sum::<f64>().sqrt() >= r,
            None => true,
        };
        in_box && outside_ball
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }

    /// `n` seeded Halton points with a random shift, inside the box and
    /// outside the excluded ball.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let m = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let mut out = Vec::with_capacity(n);
        let max_tries = 1000 * n.max(1) as u64;
        let mut k = 1u64;
        while out.len() < n {
            if k > max_tries {
                return Err(Error::numeric("excluded ball rejects almost every sample"));
            }
            let x: Vec<f64> = (0..m)
                .map(|i| {
                    let u = (radical_inverse(k, PRIMES[i]) + shift[i]).fract();
                    let (lo, hi) = self.bounds[i];
                    lo + (hi - lo) * u
                })
                .collect();
            k += 1;
            if self.contains(&x) {
                out.push(x);
            }
        }
        Ok(out)
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}
