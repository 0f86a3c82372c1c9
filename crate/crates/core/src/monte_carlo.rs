//! Simulation of the random Euler product: Sato-Tate angle sampling, plain and
//! exponentially tilted tail estimators, and empirical moments.
//!
//! Randomness comes from ChaCha8 keyed by `seed`, with `stream_id` selecting
//! the ChaCha stream and the sample index fixing the word position. Sample `i`
//! always consumes the same words, so results do not depend on how samples are
//! split between threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::log_d_p;
use crate::parallel;
use crate::primes::{shared_table, PrimeTable};
use crate::saddle::Tail;
use crate::tail::{Method, TailEstimate};

/// Samples per deterministic work unit.
pub const CHUNK: usize = 4096;

/// Cells in each tilted inverse-CDF table.
pub const TABLE_SIZE: usize = 4096;

const FINE_CELLS: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_samples: u64,
    pub y: f64,
    /// Exponential tilt `sigma`: angles are drawn from `D_p^sigma` times Sato-Tate.
    pub tilt: Option<f64>,
    pub stream_id: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64, n_samples: u64, y: f64) -> Self {
        SamplerConfig {
            seed,
            n_samples,
            y,
            tilt: None,
            stream_id: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::domain("n_samples must be >= 1"));
        }
        if !(self.y >= 2.0) || !self.y.is_finite() {
            return Err(Error::domain(format!("y must be finite and >= 2, got {}", self.y)));
        }
        if let Some(k) = self.tilt {
            if !k.is_finite() {
                return Err(Error::domain("tilt must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// A probability or moment, or its natural log when `log_domain` is set.
    pub mean: f64,
    /// Standard error, of the log when `log_domain` is set.
    pub stderr: f64,
    pub n: u64,
    pub log_domain: bool,
    /// Samples that fell in the event (tail estimators only).
    pub hits: u64,
    /// No sample hit: `mean` is a one-sided 95% upper bound.
    pub bound_only: bool,
    /// Relative standard error above 1.
    pub advisory: bool,
}

impl McEstimate {
    pub fn log_value(&self) -> f64 {
        if self.log_domain {
            self.mean
        } else {
            self.mean.ln()
        }
    }

    /// Delta-method standard error of `log_value`.
    pub fn log_stderr(&self) -> f64 {
        if self.log_domain {
            self.stderr
        } else {
            self.stderr / self.mean
        }
    }

    pub fn to_tail_estimate(&self, t: f64, y: f64, tail: Tail) -> TailEstimate {
        TailEstimate {
            t,
            y,
            tail,
            log_value: self.log_value(),
            method: Method::MonteCarlo,
            error_indicator: self.log_stderr(),
            j: None,
        }
    }
}

fn x_minus_sin(x: f64) -> f64 {
    if x < 0.1 {
        let x2 = x * x;
        x * x2 * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 / 362880.0)))
    } else {
        x - x.sin()
    }
}

/// Sato-Tate CDF `(theta - sin theta cos theta) / pi`.
pub fn sato_tate_cdf(theta: f64) -> f64 {
    x_minus_sin(2.0 * theta) / (2.0 * PI)
}

/// Inverse of [`sato_tate_cdf`], by Newton on `x - sin x = 2 pi u` with a
/// bisection safeguard.
pub fn sato_tate_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return PI;
    }
    if u > 0.5 {
        return PI - sato_tate_quantile(1.0 - u);
    }
    let m = 2.0 * PI * u;
    let (mut lo, mut hi) = (0.0f64, PI);
    // x - sin x <= x^3/6, so the root is at least cbrt(6m)
    let mut x = (6.0 * m).cbrt().min(PI);
    for _ in 0..60 {
        let g = x_minus_sin(x) - m;
        if g.abs() <= 1e-15 * m {
            break;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = 1.0 - x.cos();
        let mut next = x - g / d;
        if !(next > lo && next < hi) || d == 0.0 {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break;
        }
        x = next;
    }
    0.5 * x
}

/// One Sato-Tate angle.
pub fn sample_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    sato_tate_quantile(rng.random::<f64>())
}

/// `log L = sum_p log D_p(theta_p)` for given angles.
pub fn log_product(primes: &[u64], angles: &[f64]) -> f64 {
    primes.iter().zip(angles).map(|(&p, &th)| log_d_p(p as f64, th)).sum()
}

/// `log L` with independent Sato-Tate angles.
pub fn random_product<R: Rng + ?Sized>(table: &PrimeTable, rng: &mut R) -> f64 {
    table.primes().iter().map(|&p| log_d_p(p as f64, sample_angle(rng))).sum()
}

/// Generator positioned at the first word of sample `index`.
fn rng_at(config: &SamplerConfig, index: u64, words_per_sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream_id);
    rng.set_word_pos(index as u128 * words_per_sample as u128);
    rng
}

/// Runs `per_sample` over all samples in fixed chunks and returns the chunk
/// results in order.
fn run_chunks<A, F>(config: &SamplerConfig, n_primes: usize, per_chunk: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> A + Sync + Send,
{
    let n = config.n_samples;
    let chunks = n.div_ceil(CHUNK as u64) as usize;
    // one u64 (two ChaCha words) per prime
    let words = 2 * n_primes as u64;
    parallel::map_range(chunks, |c| {
        let start = c as u64 * CHUNK as u64;
        let len = (n - start).min(CHUNK as u64) as usize;
        let mut rng = rng_at(config, start, words);
        per_chunk(&mut rng, len)
    })
}

fn mean_and_stderr(sums: &[f64], squares: &[f64], n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = parallel::compensated_sum(sums) / nf;
    let second = parallel::compensated_sum(squares) / nf;
    let var = ((second - mean * mean) * nf / (nf - 1.0).max(1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Sample mean of `L^s`. Restricted to `|s| <= 10`, `y <= 200`.
pub fn empirical_moment(s: f64, config: &SamplerConfig) -> Result<McEstimate> {
    config.validate()?;
    if !(s.abs() <= 10.0) || config.y > 200.0 {
        return Err(Error::domain(format!("empirical moments need |s| <= 10 and y <= 200, got s={s}, y={}", config.y)));
    }
    let table = shared_table(config.y)?;
    let parts = run_chunks(config, table.len(), |rng, len| {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..len {
            let v = (s * random_product(&table, rng)).exp();
            a += v;
            b += v * v;
        }
        (a, b)
    });
    let (sums, squares): (Vec<f64>, Vec<f64>) = parts.into_iter().unzip();
    let (mean, stderr) = mean_and_stderr(&sums, &squares, config.n_samples);
    Ok(McEstimate {
        mean,
        stderr,
        n: config.n_samples,
        log_domain: false,
        hits: 0,
        bound_only: false,
        advisory: stderr > mean,
    })
}

fn in_event(tail: Tail, log_l: f64, threshold: f64) -> bool {
    tail.sign() * (log_l - threshold) >= 0.0
}

/// Frequency of the tail event under the untilted model.
pub fn estimate_tail_plain(t: f64, tail: Tail, config: &SamplerConfig) -> Result<McEstimate> {
    config.validate()?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("t must be positive, got {t}")));
    }
    let table = shared_table(config.y)?;
    let threshold = tail.log_threshold(t);
    let hits: u64 = run_chunks(config, table.len(), |rng, len| {
        (0..len).filter(|_| in_event(tail, random_product(&table, rng), threshold)).count() as u64
    })
    .into_iter()
    .sum();
    let n = config.n_samples;
    if hits == 0 {
        return Ok(McEstimate {
            mean: 1.0 - 0.05f64.powf(1.0 / n as f64),
            stderr: 0.0,
            n,
            log_domain: false,
            hits,
            bound_only: true,
            advisory: true,
        });
    }
    let p = hits as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    Ok(McEstimate {
        mean: p,
        stderr,
        n,
        log_domain: false,
        hits,
        bound_only: false,
        advisory: stderr > p,
    })
}

/// Per-prime inverse-CDF tables for angles with density proportional to
/// `D_p(theta)^sigma sin^2 theta`. Each table cell carries probability
/// `1 / TABLE_SIZE` with uniform density inside, and the likelihood ratio
/// against Sato-Tate is evaluated for that piecewise density exactly.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    tilt: f64,
    primes: Vec<u64>,
    nodes: Vec<Vec<f64>>,
    /// `log E_p(sigma)` from the table construction.
    log_norm: Vec<f64>,
}

impl TiltedSampler {
    pub fn new(table: &PrimeTable, tilt: f64) -> Result<Self> {
        if !tilt.is_finite() {
            return Err(Error::domain("tilt must be finite"));
        }
        let built = parallel::map_ordered(table.primes(), |&p| build_table(p, tilt));
        let (nodes, log_norm) = built.into_iter().unzip();
        Ok(TiltedSampler {
            tilt,
            primes: table.primes().to_vec(),
            nodes,
            log_norm,
        })
    }

    pub fn tilt(&self) -> f64 {
        self.tilt
    }

    /// Approximate `log E(sigma, y)` implied by the tables.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm.iter().sum()
    }

    /// Draws one tilted sample, returning `log L` and the log likelihood
    /// ratio of Sato-Tate against the sampling density.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let mut log_l = 0.0;
        let mut log_w = 0.0;
        for (&p, nodes) in self.primes.iter().zip(&self.nodes) {
            let x = rng.random::<f64>() * TABLE_SIZE as f64;
            let i = (x as usize).min(TABLE_SIZE - 1);
            let width = nodes[i + 1] - nodes[i];
            let theta = nodes[i] + (x - i as f64) * width;
            log_l += log_d_p(p as f64, theta);
            log_w += (2.0 / PI).ln() + 2.0 * theta.sin().ln() + (TABLE_SIZE as f64 * width).ln();
        }
        (log_l, log_w)
    }
}

fn build_table(p: u64, tilt: f64) -> (Vec<f64>, f64) {
    let pf = p as f64;
    let peak = if tilt >= 0.0 { 0.0 } else { PI };
    let l_peak = log_d_p(pf, peak);
    let density = |th: f64| {
        let s = th.sin();
        (tilt * (log_d_p(pf, th) - l_peak)).exp() * s * s
    };
    let h = PI / FINE_CELLS as f64;
    let mut cum = Vec::with_capacity(FINE_CELLS + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    let mut left = density(0.0);
    for k in 0..FINE_CELLS {
        let a = k as f64 * h;
        let right = density(a + h);
        acc += h / 6.0 * (left + 4.0 * density(a + 0.5 * h) + right);
        cum.push(acc);
        left = right;
    }
    let total = acc;
    let log_norm = tilt * l_peak + (2.0 / PI * total).ln();
    let mut nodes = Vec::with_capacity(TABLE_SIZE + 1);
    nodes.push(0.0);
    let mut k = 0;
    for i in 1..TABLE_SIZE {
        let target = total * i as f64 / TABLE_SIZE as f64;
        while cum[k + 1] < target {
            k += 1;
        }
        let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
        nodes.push((k as f64 + frac) * h);
    }
    nodes.push(PI);
    (nodes, log_norm)
}

/// Importance-sampling estimate of the tail with angles tilted by
/// `sign * kappa`. The result is in the log domain.
pub fn estimate_tail_tilted(t: f64, tail: Tail, kappa: f64, config: &SamplerConfig) -> Result<McEstimate> {
    config.validate()?;
    if !(t > 0.0) || !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::domain(format!("need t > 0 and finite kappa > 0, got t={t}, kappa={kappa}")));
    }
    let table = shared_table(config.y)?;
    let sampler = TiltedSampler::new(&table, tail.sign() * kappa)?;
    let threshold = tail.log_threshold(t);
    // weights are near exp(log_norm - sigma log L); scale by their value at the threshold
    let shift = sampler.log_normalizer() - sampler.tilt() * threshold;
    let parts = run_chunks(config, table.len(), |rng, len| {
        let (mut a, mut b, mut hits) = (0.0, 0.0, 0u64);
        for _ in 0..len {
            let (log_l, log_w) = sampler.draw(rng);
            if in_event(tail, log_l, threshold) {
                let w = (log_w - shift).exp();
                a += w;
                b += w * w;
                hits += 1;
            }
        }
        (a, b, hits)
    });
    let hits = parts.iter().map(|x| x.2).sum();
    let sums: Vec<f64> = parts.iter().map(|x| x.0).collect();
    let squares: Vec<f64> = parts.iter().map(|x| x.1).collect();
    let (mean, stderr) = mean_and_stderr(&sums, &squares, config.n_samples);
    if hits == 0 || !(mean > 0.0) {
        return Err(Error::Accuracy {
            what: format!("tilted estimate at t={t}: no sample reached the threshold"),
            achieved: f64::INFINITY,
        });
    }
    let rel = stderr / mean;
    Ok(McEstimate {
        mean: shift + mean.ln(),
        stderr: rel,
        n: config.n_samples,
        log_domain: true,
        hits,
        bound_only: false,
        advisory: rel > 1.0,
    })
}

/// Dispatches on `config.tilt`: plain sampling without a tilt, otherwise
/// tilted sampling with `kappa = |tilt|`.
pub fn estimate_tail(t: f64, tail: Tail, config: &SamplerConfig) -> Result<McEstimate> {
    match config.tilt {
        None => estimate_tail_plain(t, tail, config),
        Some(k) => estimate_tail_tilted(t, tail, k.abs(), config),
    }
}

/// Sample mean of the likelihood ratio under the tilted measure, which has
/// expectation exactly 1.
pub fn tilted_weight_mean(tilt: f64, config: &SamplerConfig) -> Result<McEstimate> {
    config.validate()?;
    let table = shared_table(config.y)?;
    let sampler = TiltedSampler::new(&table, tilt)?;
    let parts = run_chunks(config, table.len(), |rng, len| {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..len {
            let w = sampler.draw(rng).1.exp();
            a += w;
            b += w * w;
        }
        (a, b)
    });
    let (sums, squares): (Vec<f64>, Vec<f64>) = parts.into_iter().unzip();
    let (mean, stderr) = mean_and_stderr(&sums, &squares, config.n_samples);
    Ok(McEstimate {
        mean,
        stderr,
        n: config.n_samples,
        log_domain: false,
        hits: 0,
        bound_only: false,
        advisory: stderr > mean,
    })
}
