//! Prime enumeration and the prime sums used as asymptotic baselines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::consts::EULER_GAMMA;
use crate::error::{Error, Result};
use crate::parallel;

/// Numbers per sieve segment.
pub const SEGMENT_LEN: u64 = 1 << 20;

/// All primes up to a truncation level `limit`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeTable {
    limit: u64,
    primes: Vec<u64>,
}

impl PrimeTable {
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// `pi(x)` for `x <= limit`.
    pub fn count_up_to(&self, x: f64) -> usize {
        self.primes.partition_point(|&p| (p as f64) <= x)
    }

    /// Restriction of the table to primes `<= x`.
    pub fn truncate(&self, x: u64) -> PrimeTable {
        let n = self.primes.partition_point(|&p| p <= x);
        PrimeTable {
            limit: x.min(self.limit),
            primes: self.primes[..n].to_vec(),
        }
    }
}

fn simple_sieve(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

fn sieve_segment(lo: u64, hi: u64, base: &[u64]) -> Vec<u64> {
    // primes in [lo, hi)
    let len = (hi - lo) as usize;
    let mut composite = vec![false; len];
    for &p in base {
        if p * p >= hi {
            break;
        }
        let start = (p * p).max(lo.div_ceil(p) * p);
        let mut m = start;
        while m < hi {
            composite[(m - lo) as usize] = true;
            m += p;
        }
    }
    composite
        .iter()
        .enumerate()
        .filter(|(i, &c)| !c && lo + *i as u64 >= 2)
        .map(|(i, _)| lo + i as u64)
        .collect()
}

/// Segmented sieve of Eratosthenes. Segments are sieved independently and
/// concatenated in segment order.
pub fn primes_up_to(limit: u64) -> Result<PrimeTable> {
    if limit < 2 {
        return Err(Error::domain(format!("primes_up_to needs limit >= 2, got {limit}")));
    }
    let root = (limit as f64).sqrt() as u64 + 1;
    let base = simple_sieve(root);
    let n_seg = (limit + 1).div_ceil(SEGMENT_LEN) as usize;
    let segments = parallel::map_range(n_seg, |k| {
        let lo = k as u64 * SEGMENT_LEN;
        let hi = (lo + SEGMENT_LEN).min(limit + 1);
        sieve_segment(lo, hi, &base)
    });
    let primes = segments.concat();
    Ok(PrimeTable { limit, primes })
}

/// Process-wide shared table for `floor(y)`, sieved once per level.
pub fn shared_table(y: f64) -> Result<Arc<PrimeTable>> {
    type Tables = Mutex<HashMap<u64, Arc<PrimeTable>>>;
    static TABLES: OnceLock<Tables> = OnceLock::new();
    if !(y >= 2.0) || !y.is_finite() {
        return Err(Error::domain(format!("prime truncation level must be >= 2, got {y}")));
    }
    let limit = y.floor() as u64;
    let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = tables.lock().expect("prime cache poisoned").get(&limit) {
        return Ok(Arc::clone(t));
    }
    let t = Arc::new(primes_up_to(limit)?);
    tables
        .lock()
        .expect("prime cache poisoned")
        .entry(limit)
        .or_insert_with(|| Arc::clone(&t));
    Ok(t)
}

/// Primes up to the real truncation level `y` (`floor(y)`).
pub fn primes_up_to_real(y: f64) -> Result<PrimeTable> {
    if !(y >= 2.0) || !y.is_finite() {
        return Err(Error::domain(format!("prime truncation level must be >= 2, got {y}")));
    }
    primes_up_to(y.floor() as u64)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// `sum_{p <= x} log(1 - 1/p)^-1` with its deviation from `log log x + gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertensSum {
    pub value: f64,
    pub deviation: f64,
}

pub fn mertens_log_sum(x: f64) -> Result<MertensSum> {
    let table = primes_up_to_real(x)?;
    let terms: Vec<f64> = table
        .primes()
        .iter()
        .map(|&p| -(-1.0 / p as f64).ln_1p())
        .collect();
    let value = parallel::compensated_sum(&terms);
    Ok(MertensSum {
        value,
        deviation: value - (x.ln().ln() + EULER_GAMMA),
    })
}

/// Exponential integral `Ei(w)` for `w > 0` by its convergent power series.
fn ei(w: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..400 {
        term *= w / k as f64;
        let add = term / k as f64;
        sum += add;
        if add < sum * 1e-18 {
            break;
        }
    }
    EULER_GAMMA + w.ln() + sum
}

/// `int_2^x dv / log v`.
pub fn pnt_pi_reference(x: f64) -> Result<f64> {
    if !(x >= 2.0) {
        return Err(Error::domain(format!("pnt_pi_reference needs x >= 2, got {x}")));
    }
    if x == 2.0 {
        return Ok(0.0);
    }
    Ok(ei(x.ln()) - ei(std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gl_composite;

    #[test]
    fn small_tables() {
        assert_eq!(primes_up_to(10).unwrap().primes(), &[2, 3, 5, 7]);
        assert_eq!(primes_up_to(2).unwrap().primes(), &[2]);
        assert!(primes_up_to(1).is_err());
        assert!(primes_up_to_real(1.5).is_err());
    }

    #[test]
    fn million_has_78498_primes() {
        let t = primes_up_to(1_000_000).unwrap();
        assert_eq!(t.len(), 78498);
        // independent count: trial primality on every integer
        let brute = (2..=1_000_000u64).filter(|&n| is_prime(n)).count();
        assert_eq!(brute, 78498);
    }

    #[test]
    fn segment_boundaries_are_seamless() {
        let limit = 3 * SEGMENT_LEN + 17;
        let t = primes_up_to(limit).unwrap();
        let brute: Vec<u64> = (2..=limit).filter(|&n| is_prime(n)).collect();
        assert_eq!(t.primes(), brute.as_slice());
    }

    #[test]
    fn table_invariants() {
        let t = primes_up_to(100_000).unwrap();
        assert!(t.primes().windows(2).all(|w| w[0] < w[1]));
        assert!(t.primes().iter().all(|&p| is_prime(p)));
        let last = *t.primes().last().unwrap();
        assert!(last <= t.limit());
        let next = (last + 1..).find(|&n| is_prime(n)).unwrap();
        assert!(next > t.limit());
        // pi(x) monotone
        let mut prev = 0;
        for x in (2..2000).map(|k| k as f64 * 37.5) {
            let c = t.count_up_to(x);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn mertens_small_cases() {
        let m = mertens_log_sum(2.0).unwrap();
        assert!((m.value - 2f64.ln()).abs() < 1e-15);
        let m = mertens_log_sum(3.0).unwrap();
        assert!((m.value - 3f64.ln()).abs() < 1e-15);
        assert!((m.value - 1.098_612_3).abs() < 1e-7);
        assert!(mertens_log_sum(1.0).is_err());
    }

    #[test]
    fn mertens_envelope() {
        for x in [1e3, 1e4, 1e5, 1e6] {
            let m = mertens_log_sum(x).unwrap();
            assert!(m.deviation.abs() < 0.05, "x={x}: {}", m.deviation);
        }
        assert!(mertens_log_sum(1e5).unwrap().deviation.abs() < 0.01);
    }

    #[test]
    fn li_reference_values() {
        assert_eq!(pnt_pi_reference(2.0).unwrap(), 0.0);
        // oracle: composite Gauss-Legendre in v
        let breaks: Vec<f64> = (0..=98).map(|k| 2.0 + k as f64).collect();
        let oracle = gl_composite(|v| 1.0 / v.ln(), &breaks, 20);
        let v = pnt_pi_reference(100.0).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        assert!((v - 29.081).abs() < 1e-3);
        let big = pnt_pi_reference(1e6).unwrap();
        assert!((big - 78498.0).abs() < 200.0, "{big}");
    }
}
