//! The global log-moment `phi(s, y) = log E(s, y) = sum_{p <= y} log E_p(s)`,
//! its derivatives in `sigma`, large-`sigma` asymptotics, and the decay of
//! `|E(sigma + i tau, y)|` along vertical lines.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::EULER_GAMMA;
use crate::error::{Error, Result};
use crate::local::{self, LocalCumulants, SERIES_MOMENTS};
use crate::model;
use crate::parallel;
use crate::primes::{self, PrimeTable};
use crate::quadrature::QuadratureSpec;

/// Primes above `FAST_PATH_FACTOR * max(sigma, 1)` may use the closed forms.
pub const FAST_PATH_FACTOR: f64 = 16.0;

/// `(phi_0, ..., phi_4)` at `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileDerivatives {
    pub sigma: f64,
    pub y: f64,
    /// Orders above the requested maximum are `NaN`.
    pub values: [f64; 5],
}

impl ProfileDerivatives {
    pub fn phi(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// `phi(., y)` over a fixed prime table.
#[derive(Debug, Clone)]
pub struct Profile {
    table: Arc<PrimeTable>,
    y: f64,
    quad: QuadratureSpec,
    moments: Arc<OnceLock<Vec<[f64; SERIES_MOMENTS]>>>,
}

impl Profile {
    pub fn new(y: f64, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate(None)?;
        Ok(Profile {
            table: primes::shared_table(y)?,
            y,
            quad: quad.clone(),
            moments: Arc::new(OnceLock::new()),
        })
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn table(&self) -> &PrimeTable {
        &self.table
    }

    pub fn quad(&self) -> &QuadratureSpec {
        &self.quad
    }

    fn use_fast(sigma: f64, p: u64) -> bool {
        sigma > 0.0 && p as f64 > FAST_PATH_FACTOR * sigma.max(1.0)
    }

    /// Per-prime cumulants in prime order.
    pub fn local_terms(&self, sigma: f64, fast_path: bool) -> Result<Vec<LocalCumulants>> {
        if !sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be finite, got {sigma}")));
        }
        let nodes = self.quad.nodes;
        let primes = self.table.primes();
        let terms = if fast_path {
            let moments = self
                .moments
                .get_or_init(|| parallel::map_ordered(primes, |&p| local::scaled_log_moments(p)));
            let idx: Vec<usize> = (0..primes.len()).collect();
            parallel::map_ordered(&idx, |&i| {
                let p = primes[i];
                if Self::use_fast(sigma, p) {
                    local::cumulants_from_moments(p, sigma, &moments[i])
                } else {
                    local::local_cumulants(p, sigma, nodes)
                }
            })
        } else {
            parallel::map_ordered(primes, |&p| local::local_cumulants(p, sigma, nodes))
        };
        if fast_path {
            // monitor the closed forms at the first prime that uses them
            if let Some(&p) = self.table.primes().iter().find(|&&p| Self::use_fast(sigma, p)) {
                let fast = local::local_cumulants_fast(p, sigma);
                let slow = local::local_cumulants(p, sigma, nodes);
                let pf = p as f64;
                let discrepancy = (fast.k[0] - slow.k[0]).abs();
                if discrepancy > 1e-6 * slow.k[0].abs() + 1e-15 / (pf * pf) {
                    return Err(Error::Consistency {
                        what: format!("closed-form local derivative at p={p}, sigma={sigma}"),
                        discrepancy,
                    });
                }
            }
        }
        Ok(terms)
    }

    pub fn derivatives(&self, sigma: f64, max_order: usize, fast_path: bool) -> Result<ProfileDerivatives> {
        if max_order > 4 {
            return Err(Error::domain(format!("max_order must be <= 4, got {max_order}")));
        }
        let terms = self.local_terms(sigma, fast_path)?;
        let mut values = [f64::NAN; 5];
        let mut column = Vec::with_capacity(terms.len());
        for (n, v) in values.iter_mut().enumerate().take(max_order + 1) {
            column.clear();
            column.extend(terms.iter().map(|c| if n == 0 { c.log_value } else { c.k[n - 1] }));
            *v = parallel::compensated_sum(&column);
        }
        Ok(ProfileDerivatives { sigma, y: self.y, values })
    }

    /// `log E(s, y)` as the sum of principal-branch local logarithms; the
    /// imaginary part is defined modulo `2 pi`.
    pub fn log_moment(&self, s: Complex64) -> Result<Complex64> {
        let logs = parallel::map_ordered(self.table.primes(), |&p| local::local_log_moment(p, s, &self.quad));
        let mut re = Vec::with_capacity(logs.len());
        let mut im = Vec::with_capacity(logs.len());
        for l in logs {
            let l = l?;
            re.push(l.re);
            im.push(l.im);
        }
        Ok(Complex64::new(
            parallel::compensated_sum(&re),
            parallel::compensated_sum(&im),
        ))
    }
}

pub fn phi_profile(
    sigma: f64,
    y: f64,
    max_order: usize,
    quad: &QuadratureSpec,
    fast_path: bool,
) -> Result<ProfileDerivatives> {
    Profile::new(y, quad)?.derivatives(sigma, max_order, fast_path)
}

/// `log E(s, y)`.
pub fn moment_complex(s: Complex64, y: f64, quad: &QuadratureSpec) -> Result<Complex64> {
    Profile::new(y, quad)?.log_moment(s)
}

/// `R_J(k, y) = (log k)^-(J+1) + k / (y log y)`.
pub fn remainder(j: usize, k: f64, y: f64) -> f64 {
    let tail = if y.is_finite() { k / (y * y.ln()) } else { 0.0 };
    k.ln().powi(-(j as i32 + 1)) + tail
}

/// An asymptotic main term together with the size of its remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotic {
    pub value: f64,
    pub remainder: f64,
}

/// Large-`sigma` main terms of `phi_0`, `phi_1`, `phi_2` with `J` constants:
///
/// * `phi_0 ~ sigma (2 log log sigma + 2 gamma + sum b_{j,0} / (log sigma)^j)`
/// * `phi_1 ~ 2 log log sigma + 2 gamma + sum b_{j,1} / (log sigma)^j`
/// * `phi_2 ~ sum b_{j,2} / (log sigma)^j / sigma`
///
/// The remainder is reported in the same scale as the value.
pub fn phi_asymptotic(sigma: f64, y: f64, n: u32, j_max: usize, quad: &QuadratureSpec) -> Result<Asymptotic> {
    if !(sigma >= 3.0) || !(y >= sigma) {
        return Err(Error::domain(format!("phi_asymptotic needs y >= sigma >= 3, got sigma={sigma}, y={y}")));
    }
    if n > 2 {
        return Err(Error::domain(format!("phi_asymptotic order must be 0, 1 or 2, got {n}")));
    }
    let c = model::expansion_coefficients(j_max, quad)?;
    let l = sigma.ln();
    let series: f64 = (1..=j_max).map(|j| c.b(j, n) / l.powi(j as i32)).sum();
    let r = remainder(j_max, sigma, y);
    let main = 2.0 * l.ln() + 2.0 * EULER_GAMMA;
    Ok(match n {
        0 => Asymptotic {
            value: sigma * (main + series),
            remainder: sigma * r,
        },
        1 => Asymptotic {
            value: main + series,
            remainder: r,
        },
        _ => Asymptotic {
            value: series / sigma,
            remainder: r / sigma,
        },
    })
}

/// Constant of the `|phi_n| <= C / (sigma^(n-1) log sigma)` envelope for
/// `n = 3, 4`, calibrated on `3 <= sigma <= 10^4`.
pub const HIGHER_ORDER_ENVELOPE: f64 = 8.0;

/// Calibrated stand-ins for the constants of the three decay regimes of
/// `|E(sigma + i tau, y) / E(sigma, y)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub const DECAY: DecayConstants = DecayConstants {
    c1: 1.0,
    c2: 1.0,
    c3: 0.5,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRegime {
    /// `|tau| <= c1 sqrt(sigma) log sigma` or `|tau| >= y^(1/delta)`: bound 1.
    Trivial,
    /// `c1 sqrt(sigma) log sigma <= |tau| <= sigma`: Gaussian bound.
    Gaussian,
    /// `sigma <= |tau| <= y^(1/delta)`: stretched-exponential bound.
    Stretched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub tau: f64,
    pub log_ratio: f64,
    pub regime: DecayRegime,
    pub log_bound: f64,
    pub holds: bool,
}

/// Classify `tau` into a decay regime and return the log of its bound.
pub fn decay_bound(sigma: f64, y: f64, tau: f64, delta: f64, c: &DecayConstants) -> (DecayRegime, f64) {
    let a = tau.abs();
    let l = sigma.ln();
    let far = y.powf(1.0 / delta);
    if a <= c.c1 * sigma.sqrt() * l || a >= far {
        (DecayRegime::Trivial, 0.0)
    } else if a <= sigma {
        (DecayRegime::Gaussian, -c.c2 * a * a / (sigma * l * l))
    } else {
        (DecayRegime::Stretched, -c.c3 * a.powf(delta))
    }
}

/// Evaluate `|E(sigma + i tau, y) / E(sigma, y)|` on a grid and test it
/// against the calibrated regime bounds.
pub fn decay_ratio_check(sigma: f64, y: f64, tau_grid: &[f64], delta: f64, quad: &QuadratureSpec) -> Result<Vec<DecayPoint>> {
    if !(sigma >= 3.0) || !(y >= sigma) {
        return Err(Error::domain(format!("decay check needs y >= sigma >= 3, got sigma={sigma}, y={y}")));
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::domain(format!("delta must be in (0, 1/4), got {delta}")));
    }
    let profile = Profile::new(y, quad)?;
    let base = profile.log_moment(Complex64::new(sigma, 0.0))?.re;
    tau_grid
        .iter()
        .map(|&tau| {
            let log_ratio = profile.log_moment(Complex64::new(sigma, tau))?.re - base;
            let (regime, log_bound) = decay_bound(sigma, y, tau, delta, &DECAY);
            Ok(DecayPoint {
                tau,
                log_ratio,
                regime,
                log_bound,
                holds: log_ratio <= log_bound + 1e-12,
            })
        })
        .collect()
}
