//! Invariant suites shared by the `verify` command and the acceptance tests.
//! Bracket constants are calibrated on the grids below and frozen.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::local::{local_log_moment_weighted, local_moment, WeightedRoute};
use crate::model::{h_deriv, h_fn};
use crate::monte_carlo::{
    empirical_moment, estimate_tail_plain, estimate_tail_tilted, sample_angle, sato_tate_cdf, SamplerConfig,
};
use crate::profile::Profile;
use crate::quadrature::{adaptive_gk, QuadratureSpec};
use crate::saddle::Tail;

pub const SUITES: [&str; 5] = ["convexity", "modulus", "brackets", "reproducibility", "ks"];

/// `[low, high]` for `u^{j+3/2} int_0^pi e^{2u(cos - 1)} (1 - cos)^j sin^2`, `u in [1, 50]`.
pub const GROWTH_BRACKETS: [(f64, f64); 3] = [(0.3, 0.5), (0.15, 0.4), (0.12, 0.5)];

/// `C_j` in `E_{p,j}(sigma) / E_p(sigma) <= C_j (p / sigma)^j`, `j = 1, 2`.
pub const RATIO_CONSTANTS: [f64; 2] = [1.0, 1.25];

/// Kolmogorov-Smirnov critical value at level about 0.01, times `sqrt(n)`.
pub const KS_CRITICAL: f64 = 1.63;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_suite(name: &str, quad: &QuadratureSpec) -> Result<SuiteReport> {
    match name {
        "convexity" => convexity(quad),
        "modulus" => modulus(quad),
        "brackets" => brackets(quad),
        "reproducibility" => reproducibility(),
        "ks" => ks(100_000, 2024),
        _ => Err(Error::domain(format!("unknown suite {name:?}; expected one of {}", SUITES.join(", ")))),
    }
}

/// `phi_2(sigma, y) > 0` on a grid.
pub fn convexity(quad: &QuadratureSpec) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("convexity");
    for y in [10.0, 100.0, 1e3, 1e4] {
        let prof = Profile::new(y, quad)?;
        for sigma in [-20.0, -5.0, -1.0, 0.0, 0.5, 1.0, 5.0, 20.0, 100.0, 1000.0] {
            let d = prof.derivatives(sigma, 2, true)?;
            r.check(d.phi(2) > 0.0, || format!("phi_2({sigma}, {y}) = {}", d.phi(2)));
        }
    }
    Ok(r)
}

/// `|E(sigma + i tau, y)| <= E(sigma, y)`, globally and per prime.
pub fn modulus(quad: &QuadratureSpec) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("modulus");
    for y in [50.0, 1e3] {
        let prof = Profile::new(y, quad)?;
        for sigma in [0.5, 2.0, 10.0, 50.0] {
            let base = prof.log_moment(Complex64::new(sigma, 0.0))?.re;
            for tau in [0.5, 1.0, 5.0, 20.0, 100.0] {
                let v = prof.log_moment(Complex64::new(sigma, tau))?.re;
                r.check(v <= base + 1e-12, || format!("log|E({sigma}+{tau}i, {y})| = {v} > {base}"));
            }
        }
    }
    for p in [2u64, 3, 17, 1009] {
        for sigma in [0.5, 5.0, 50.0] {
            let base = local_moment(p, Complex64::new(sigma, 0.0), quad)?.re;
            for tau in [0.3, 3.0, 30.0] {
                let v = local_moment(p, Complex64::new(sigma, tau), quad)?.norm();
                r.check(v <= base * (1.0 + 1e-12), || format!("|E_{p}({sigma}+{tau}i)| = {v} > {base}"));
            }
        }
    }
    Ok(r)
}

/// Growth of the weighted angle integral, the weighted-moment ratio bound and
/// the magnitude brackets of `h` and its derivatives.
pub fn brackets(quad: &QuadratureSpec) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("brackets");
    for (j, &(lo, hi)) in GROWTH_BRACKETS.iter().enumerate() {
        for k in 0..=49 {
            let u = 1.0 + k as f64;
            let v = adaptive_gk(
                |th: f64| (2.0 * u * (th.cos() - 1.0)).exp() * (1.0 - th.cos()).powi(j as i32) * th.sin().powi(2),
                0.0,
                PI,
                1e-15,
                1e-12,
            )?
            .value
                * u.powf(j as f64 + 1.5);
            r.check((lo..=hi).contains(&v), || format!("growth j={j}, u={u}: {v}"));
        }
    }
    for (i, &c) in RATIO_CONSTANTS.iter().enumerate() {
        let j = i as u32 + 1;
        for p in [2u64, 5, 17, 101, 1009, 10007] {
            for sigma in [0.1, 1.0, 5.0, 50.0, 1000.0] {
                let a = local_log_moment_weighted(p, j, sigma, quad, WeightedRoute::Theta)?;
                let b = local_log_moment_weighted(p, 0, sigma, quad, WeightedRoute::Theta)?;
                let ratio = (a - b).exp();
                let bound = c * (p as f64 / sigma).powi(j as i32);
                r.check(ratio <= bound, || format!("ratio j={j}, p={p}, sigma={sigma}: {ratio} > {bound}"));
            }
        }
    }
    for k in 1..100 {
        let u = 0.01 * k as f64;
        let (h, h1, h2, h3) = (h_fn(u)?, h_deriv(u, 1)?, h_deriv(u, 2)?, h_deriv(u, 3)?.abs());
        r.check(h >= 0.4 * u * u && h <= 0.5 * u * u, || format!("h({u}) = {h}"));
        r.check(h1 >= 0.8 * u && h1 <= u, || format!("h'({u}) = {h1}"));
        r.check(h2 > 0.5 && h2 <= 1.0, || format!("h''({u}) = {h2}"));
        r.check(h3 <= u, || format!("|h'''({u})| = {h3}"));
    }
    for k in 0..400 {
        let u = 1.0 + 0.25 * k as f64;
        let l = (2.0 * u).ln();
        let (h, h1) = (-h_fn(u)?, -h_deriv(u, 1)?);
        r.check(h >= l && h <= 2.5 * l, || format!("|h({u})| = {h}"));
        r.check(h1 >= 1.0 / u && h1 <= 1.5 / u, || format!("|h'({u})| = {h1}"));
        if u > 1.0 {
            let h2 = h_deriv(u, 2)? * u * u;
            r.check((0.5..=2.0).contains(&h2), || format!("u^2 h''({u}) = {h2}"));
        }
        if u >= 1.5 {
            let h3 = h_deriv(u, 3)?.abs() * u.powi(3);
            r.check((0.5..=4.0).contains(&h3), || format!("u^3 |h'''({u})| = {h3}"));
        }
    }
    Ok(r)
}

/// Bitwise identical Monte Carlo output for 1, 2 and 4 worker threads.
pub fn reproducibility() -> Result<SuiteReport> {
    let mut r = SuiteReport::new("reproducibility");
    let run = || -> Result<Vec<u64>> {
        let cfg = SamplerConfig::new(77, 50_000, 50.0);
        let plain = estimate_tail_plain(1.3, Tail::Upper, &cfg)?;
        let tilted = estimate_tail_tilted(2.0, Tail::Upper, 6.0, &cfg)?;
        let moment = empirical_moment(2.0, &cfg)?;
        Ok([plain.mean, plain.stderr, tilted.mean, tilted.stderr, moment.mean, moment.stderr]
            .iter()
            .map(|v| v.to_bits())
            .collect())
    };
    let reference = with_threads(1, run)??;
    for threads in [2, 4] {
        let other = with_threads(threads, run)??;
        r.check(other == reference, || format!("{threads} threads differ from 1 thread"));
    }
    Ok(r)
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

/// Kolmogorov-Smirnov distance between `samples` and the Sato-Tate law.
pub fn ks_statistic(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = sato_tate_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks(n: usize, seed: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("ks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..n).map(|_| sample_angle(&mut rng)).collect();
    let d = ks_statistic(&mut xs);
    let crit = KS_CRITICAL / (n as f64).sqrt();
    r.check(d < crit, || format!("KS statistic {d} >= {crit}"));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_detects_a_wrong_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut uniform: Vec<f64> = (0..20_000).map(|_| PI * rand::Rng::random::<f64>(&mut rng)).collect();
        assert!(ks_statistic(&mut uniform) > KS_CRITICAL / (20_000f64).sqrt());
        assert!(ks(20_000, 3).unwrap().passed());
    }

    #[test]
    fn suites_pass() {
        let q = QuadratureSpec::default();
        for name in ["convexity", "modulus", "brackets"] {
            let r = run_suite(name, &q).unwrap();
            assert!(r.passed(), "{name}: {:?}", r.failures);
            assert!(r.checks > 10);
        }
        assert!(run_suite("nope", &q).is_err());
    }
}
