//! `Phi(t, y)` and `Psi(t, y)` by the Gaussian saddle formula, by asymptotic
//! expansions, and by a smoothed Perron integral along `Re s = kappa`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::EULER_GAMMA;
use crate::error::{Error, Result};
use crate::model;
use crate::parallel;
use crate::profile::{remainder, Profile};
use crate::quadrature::{adaptive_simpson, QuadratureSpec};
use crate::saddle::{self, SaddleSolution, Tail};

/// Multiple of `t e^{-t}` reported as the saddle formula's relative error.
pub const SADDLE_ERROR_MULTIPLE: f64 = 1.0;

/// `y_eff = Y_INFINITY_FACTOR * e^t` stands in for `y = infinity`.
pub const Y_INFINITY_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SaddleGauss,
    Expansion,
    Perron,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SaddleGauss => "saddle",
            Method::Expansion => "expansion",
            Method::Perron => "perron",
            Method::MonteCarlo => "mc",
        }
    }
}

/// A log-probability with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: f64,
    pub y: f64,
    pub tail: Tail,
    /// Natural log of `Phi` or `Psi`.
    pub log_value: f64,
    pub method: Method,
    /// Relative error estimate, or standard error in the log domain for
    /// Monte Carlo.
    pub error_indicator: f64,
    pub j: Option<usize>,
}

/// Gaussian saddle formula from a solved saddle point.
pub fn saddle_formula(sol: &SaddleSolution) -> TailEstimate {
    let p = &sol.profile_at_kappa;
    let s = sol.tail.sign() * sol.kappa;
    let log_value = p.phi(0) - s * sol.target - sol.log_kappa - 0.5 * (2.0 * PI * p.phi(2)).ln();
    TailEstimate {
        t: sol.t,
        y: sol.y,
        tail: sol.tail,
        log_value,
        method: Method::SaddleGauss,
        error_indicator: SADDLE_ERROR_MULTIPLE * sol.t * (-sol.t).exp(),
        j: None,
    }
}

pub fn tail_saddle_on(profile: &Profile, t: f64, tail: Tail) -> Result<TailEstimate> {
    let sol = match tail {
        Tail::Upper => saddle::solve_saddle_on(profile, t, saddle::DEFAULT_TOL)?,
        Tail::Lower => saddle::solve_saddle_lower_on(profile, t, saddle::DEFAULT_TOL)?,
    };
    Ok(saddle_formula(&sol))
}

/// `log Phi(t, y)` by the Gaussian saddle formula.
pub fn tail_saddle(t: f64, y: f64) -> Result<TailEstimate> {
    saddle::check_regime(t, y)?;
    tail_saddle_on(&Profile::new(y, &QuadratureSpec::default())?, t, Tail::Upper)
}

/// `log Psi(t, y)` by the mirrored saddle formula.
pub fn tail_saddle_lower(t: f64, y: f64) -> Result<TailEstimate> {
    saddle::check_regime(t, y)?;
    tail_saddle_on(&Profile::new(y, &QuadratureSpec::default())?, t, Tail::Lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionRoute {
    /// `-kappa sum_j a_j / (log kappa)^j` with the solved saddle point.
    LogKappa,
    /// `-e^{t - gamma_0} sum_j a*_j / t^j`, `J <= 2`.
    PowersOfT,
}

/// Asymptotic expansions of `log Phi`. `y = infinity` uses
/// `y_eff = 1e3 e^t` for the saddle point. The error indicator is the
/// remainder term converted to an absolute error in `log Phi`.
pub fn tail_expansion(t: f64, y: f64, j_max: usize, route: ExpansionRoute, quad: &QuadratureSpec) -> Result<TailEstimate> {
    let y_eff = if y.is_infinite() { Y_INFINITY_FACTOR * t.exp() } else { y };
    saddle::check_regime(t, y_eff)?;
    let (log_value, error_indicator) = match route {
        ExpansionRoute::LogKappa => {
            let c = model::expansion_coefficients(j_max, quad)?;
            let sol = saddle::solve_saddle_on(&Profile::new(y_eff, quad)?, t, saddle::DEFAULT_TOL)?;
            let l = sol.log_kappa;
            let sum: f64 = (1..=j_max).map(|j| c.a(j) / l.powi(j as i32)).sum();
            (-sol.kappa * sum, sol.kappa * remainder(j_max, sol.kappa, y))
        }
        ExpansionRoute::PowersOfT => {
            if j_max > 2 {
                return Err(Error::domain(format!("the powers-of-t route supports J <= 2, got {j_max}")));
            }
            let c = model::expansion_coefficients(2, quad)?;
            let scale = (t - c.gamma0.value).exp();
            let sum: f64 = (1..=j_max).map(|j| c.a_star(j) / t.powi(j as i32)).sum();
            (-scale * sum, scale * remainder(j_max, t.exp(), y))
        }
    };
    Ok(TailEstimate {
        t,
        y,
        tail: Tail::Upper,
        log_value,
        method: Method::Expansion,
        error_indicator,
        j: Some(j_max),
    })
}

/// Smoothing of the Perron kernel `((e^{lambda s} - 1) / (lambda s))^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub lambda: f64,
    pub n: u32,
    /// Truncation height of the contour; `None` selects `20 sqrt(kappa) log kappa`.
    pub tau_max: Option<f64>,
}

impl SmoothingParams {
    /// `lambda = e^{-t}/4`, `N = 1`.
    pub fn for_t(t: f64) -> Self {
        SmoothingParams {
            lambda: 0.25 * (-t).exp(),
            n: 1,
            tau_max: None,
        }
    }

    /// `lambda = kappa^-2`, `N = 1`.
    pub fn kappa_preset(kappa: f64) -> Self {
        SmoothingParams {
            lambda: kappa.powi(-2),
            n: 1,
            tau_max: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.n < 1 {
            return Err(Error::domain("N must be >= 1"));
        }
        if let Some(tm) = self.tau_max {
            if !(tm > 0.0) {
                return Err(Error::domain(format!("tau_max must be positive, got {tm}")));
            }
        }
        Ok(())
    }

    /// Factor `e^{-lambda N / 2}` relating the two sides of the sandwich.
    pub fn shift(&self) -> f64 {
        (-0.5 * self.lambda * self.n as f64).exp()
    }
}

/// `e^z - 1` without cancellation for small `|z|`.
fn exp_m1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

/// `log ((e^{lambda s} - 1) / (lambda s))^N`.
pub fn log_smoothing_kernel(s: Complex64, params: &SmoothingParams) -> Complex64 {
    let z = s * params.lambda;
    let ratio = if z.norm() < 1e-4 {
        // 1 + z/2 + z^2/6 + z^3/24
        Complex64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        exp_m1(z) / z
    };
    ratio.ln() * params.n as f64
}

pub fn smoothing_kernel(s: Complex64, params: &SmoothingParams) -> Complex64 {
    log_smoothing_kernel(s, params).exp()
}

/// `(1/2 pi i) int_{c - iT}^{c + iT} x^s K(s) ds / s`, returning the value and
/// a bound for the truncated part.
pub fn perron_indicator(x: f64, c: f64, tau_max: f64, params: &SmoothingParams) -> Result<(f64, f64)> {
    params.validate()?;
    let lx = x.ln();
    let integrand = |tau: f64| -> f64 {
        let s = Complex64::new(c, tau);
        (s * lx + log_smoothing_kernel(s, params) - s.ln()).exp().re
    };
    let mut breaks = vec![0.0];
    let mut b = 1.0;
    while b < tau_max {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(tau_max);
    let mut total = 0.0;
    for ab in breaks.windows(2) {
        total += adaptive_simpson(integrand, ab[0], ab[1], 1e-10, 40)?.value;
    }
    let s = Complex64::new(c, tau_max);
    let edge = (s * lx + log_smoothing_kernel(s, params) - s.ln()).exp().norm();
    Ok((total / PI, edge * tau_max / (PI * params.n as f64)))
}

/// Result of the smoothed Perron integral `V`, which satisfies
/// `Phi(t) <= V <= Phi(t e^{-lambda N / 2})` (or the same for `Psi`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerronBracket {
    /// `V` as an upper estimate of the tail at `t`.
    pub upper: TailEstimate,
    /// `V` as a lower estimate of the tail at `t e^{-lambda N / 2}`.
    pub lower: TailEstimate,
    pub kappa: f64,
    pub tau_max: f64,
    /// Truncation bound relative to `V`.
    pub truncation: f64,
}

pub fn tail_perron_on(profile: &Profile, t: f64, tail: Tail, params: &SmoothingParams) -> Result<PerronBracket> {
    params.validate()?;
    if params.lambda * params.n as f64 > (-t).exp() * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "lambda N = {} exceeds e^-t = {}",
            params.lambda * params.n as f64,
            (-t).exp()
        )));
    }
    let sol = match tail {
        Tail::Upper => saddle::solve_saddle_on(profile, t, saddle::DEFAULT_TOL)?,
        Tail::Lower => saddle::solve_saddle_lower_on(profile, t, saddle::DEFAULT_TOL)?,
    };
    let kappa = sol.kappa;
    let sign = tail.sign();
    let thr = tail.log_threshold(t);
    let log_f = |tau: f64| -> Result<Complex64> {
        let s = Complex64::new(kappa, tau);
        let le = profile.log_moment(Complex64::new(sign * kappa, sign * tau))?;
        Ok(le - s * (sign * thr) + log_smoothing_kernel(s, params) - s.ln())
    };
    let base = log_f(0.0)?;
    let tau_max = params.tau_max.unwrap_or(20.0 * kappa.sqrt() * kappa.ln().max(1.0));
    let width = 1.0 / sol.profile_at_kappa.phi(2).sqrt();
    let mut breaks = vec![0.0];
    for k in 1..=16 {
        let b = 0.5 * width * k as f64;
        if b >= tau_max {
            break;
        }
        breaks.push(b);
    }
    let mut b = 16.0 * width;
    while b < tau_max {
        breaks.push(b);
        b *= 1.5;
    }
    breaks.push(tau_max);
    let panels: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();
    let abs_tol = 1e-9 * width / panels.len() as f64;
    let pieces = parallel::map_ordered(&panels, |&(a, b)| {
        let mut failure = None;
        let r = adaptive_simpson(
            |tau| match log_f(tau) {
                Ok(l) => (l - base).exp().re,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            abs_tol,
            30,
        );
        match failure {
            Some(e) => Err(e),
            None => r,
        }
    });
    let mut values = Vec::with_capacity(pieces.len());
    let mut quad_err = 0.0;
    for p in pieces {
        let p = p?;
        values.push(p.value);
        quad_err += p.abs_error;
    }
    let integral = parallel::compensated_sum(&values) / PI;
    if !(integral > 0.0) {
        return Err(Error::Accuracy {
            what: format!("Perron integral at t={t} is not positive"),
            achieved: integral,
        });
    }
    let edge = (log_f(tau_max)? - base).exp().norm();
    let truncation = edge * tau_max / PI / integral;
    if truncation > 0.1 {
        return Err(Error::Accuracy {
            what: format!("Perron truncation at tau_max={tau_max}: raise tau_max"),
            achieved: truncation,
        });
    }
    let log_v = base.re + integral.ln();
    let error_indicator = truncation + quad_err / PI / integral;
    let y = profile.y();
    let make = |tt: f64| TailEstimate {
        t: tt,
        y,
        tail,
        log_value: log_v,
        method: Method::Perron,
        error_indicator,
        j: None,
    };
    Ok(PerronBracket {
        upper: make(t),
        lower: make(t * params.shift()),
        kappa,
        tau_max,
        truncation,
    })
}

pub fn tail_perron(t: f64, y: f64, params: &SmoothingParams) -> Result<PerronBracket> {
    saddle::check_regime(t, y)?;
    tail_perron_on(&Profile::new(y, &QuadratureSpec::default())?, t, Tail::Upper, params)
}

pub fn tail_perron_lower(t: f64, y: f64, params: &SmoothingParams) -> Result<PerronBracket> {
    saddle::check_regime(t, y)?;
    tail_perron_on(&Profile::new(y, &QuadratureSpec::default())?, t, Tail::Lower, params)
}

/// Upper-tail threshold on `log L` (`2 (gamma + log t)`).
pub fn upper_log_threshold(t: f64) -> f64 {
    2.0 * (EULER_GAMMA + t.ln())
}
