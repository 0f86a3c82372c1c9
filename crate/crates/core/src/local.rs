//! A single Euler factor: `D_p(theta)`, its Sato-Tate moments `E_p(s)`, the
//! weighted moments `E_{p,j}`, local log-derivatives, and large-`p` closed
//! forms.
//!
//! Every integral over `[0, pi]` is evaluated relative to the peak of
//! `D_p(theta)^sigma` (at `theta = 0` for `sigma > 0`, at `theta = pi` for
//! `sigma < 0`) on composite Gauss-Legendre panels that grow geometrically
//! away from the peak. Moments are therefore carried as logarithms and never
//! overflow.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model;
use crate::quadrature::{adaptive_simpson, nodes_on, QuadScheme, QuadratureSpec};

/// Integrand drop (in natural log units) past which panels are no longer added.
const LOG_CUTOFF: f64 = 80.0;

/// `D_p(theta) = (1 - 2 cos(theta)/p + p^-2)^-1`.
pub fn d_p(p: u64, theta: f64) -> f64 {
    let pf = p as f64;
    1.0 / (1.0 - 2.0 * theta.cos() / pf + 1.0 / (pf * pf))
}

/// `log D_p(theta)`, accurate for large `p`.
#[inline]
pub fn log_d_p(p: f64, theta: f64) -> f64 {
    -(-2.0 * theta.cos() / p + 1.0 / (p * p)).ln_1p()
}

/// `log D_p` at the peak of `D_p^sigma`.
#[inline]
fn log_d_peak(p: f64, sigma: f64) -> f64 {
    if sigma >= 0.0 {
        -2.0 * (-1.0 / p).ln_1p()
    } else {
        -2.0 * (1.0 / p).ln_1p()
    }
}

/// `log D_p(theta) - log D_p(peak)`, computed without cancellation.
#[inline]
fn log_d_rel(p: f64, sigma: f64, theta: f64) -> f64 {
    if sigma >= 0.0 {
        // D(0)/D(theta) = 1 + 2p(1 - cos)/(p - 1)^2
        let one_minus_cos = 2.0 * (0.5 * theta).sin().powi(2);
        -(2.0 * p * one_minus_cos / ((p - 1.0) * (p - 1.0))).ln_1p()
    } else {
        // D(pi)/D(theta) = 1 - 2p(1 + cos)/(p + 1)^2
        let one_plus_cos = 2.0 * (0.5 * theta).cos().powi(2);
        -(-2.0 * p * one_plus_cos / ((p + 1.0) * (p + 1.0))).ln_1p()
    }
}

/// Panel breakpoints on `[0, pi]` for `D_p^(sigma + i tau) sin^2`.
pub(crate) fn theta_breaks(p: f64, sigma: f64, tau: f64) -> Vec<f64> {
    let abs_sigma = sigma.abs();
    let width = if abs_sigma > 0.0 {
        let a = if sigma >= 0.0 { p - 1.0 } else { p + 1.0 };
        a / (abs_sigma * p).sqrt()
    } else {
        f64::INFINITY
    };
    // distances from the peak
    let mut dist = vec![0.0];
    if width >= 0.5 * PI {
        dist.push(0.5 * PI);
        dist.push(PI);
    } else {
        let mut d = width;
        loop {
            if d >= PI {
                dist.push(PI);
                break;
            }
            dist.push(d);
            let theta = if sigma >= 0.0 { d } else { PI - d };
            if -abs_sigma * log_d_rel(p, sigma, theta) > LOG_CUTOFF {
                break;
            }
            d *= 2.0;
        }
    }
    let mut breaks: Vec<f64> = if sigma >= 0.0 {
        dist
    } else {
        dist.iter().rev().map(|d| PI - d).collect()
    };
    if tau != 0.0 {
        let mut refined = vec![breaks[0]];
        for ab in breaks.windows(2) {
            let phase = tau.abs() * (log_d_p(p, ab[0]) - log_d_p(p, ab[1])).abs();
            let m = (phase / 3.0).ceil().max(1.0) as usize;
            let h = (ab[1] - ab[0]) / m as f64;
            for k in 1..m {
                refined.push(ab[0] + h * k as f64);
            }
            refined.push(ab[1]);
        }
        breaks = refined;
    }
    breaks
}

/// Per-prime log-moment and cumulants of `log D_p` under the tilted measure
/// `D_p^sigma dmu_st / E_p(sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalCumulants {
    /// `log E_p(sigma)`
    pub log_value: f64,
    /// `[k1, k2, k3, k4]`: the `n`-th derivative of `log E_p` at `sigma`.
    pub k: [f64; 4],
}

/// Cumulants of `log D_p` under the `sigma`-tilted Sato-Tate measure by
/// composite Gauss-Legendre.
pub fn local_cumulants(p: u64, sigma: f64, nodes: usize) -> LocalCumulants {
    let pf = p as f64;
    let breaks = theta_breaks(pf, sigma, 0.0);
    let peak = log_d_peak(pf, sigma);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(nodes * (breaks.len() - 1));
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for ab in breaks.windows(2) {
        for (theta, w) in nodes_on(ab[0], ab[1], nodes) {
            let rel = log_d_rel(pf, sigma, theta);
            let st = theta.sin();
            let weight = w * (sigma * rel).exp() * st * st;
            let ell = log_d_p(pf, theta);
            s0 += weight;
            s1 += weight * ell;
            pts.push((weight, ell));
        }
    }
    let mean = s1 / s0;
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    for &(w, ell) in &pts {
        let d = ell - mean;
        let d2 = d * d;
        c2 += w * d2;
        c3 += w * d2 * d;
        c4 += w * d2 * d2;
    }
    c2 /= s0;
    c3 /= s0;
    c4 /= s0;
    LocalCumulants {
        log_value: sigma * peak + (FRAC_2_PI * s0).ln(),
        k: [mean, c2, c3, c4 - 3.0 * c2 * c2],
    }
}

/// Principal-branch `log E_p(s)` for complex `s`.
pub fn local_log_moment(p: u64, s: Complex64, quad: &QuadratureSpec) -> Result<Complex64> {
    if p < 2 {
        return Err(Error::domain(format!("local factor needs p >= 2, got {p}")));
    }
    quad.validate(None)?;
    let pf = p as f64;
    let sigma = s.re;
    let tau = s.im;
    let peak = log_d_peak(pf, sigma);
    let integrand = |theta: f64| -> Complex64 {
        let rel = log_d_rel(pf, sigma, theta);
        let st = theta.sin();
        let mag = (sigma * rel).exp() * st * st;
        let phase = tau * log_d_p(pf, theta);
        Complex64::from_polar(mag, phase)
    };
    let breaks = theta_breaks(pf, sigma, tau);
    let integral = match quad.scheme {
        QuadScheme::GaussLegendreFixed => {
            let mut acc = Complex64::new(0.0, 0.0);
            for ab in breaks.windows(2) {
                for (theta, w) in nodes_on(ab[0], ab[1], quad.nodes) {
                    acc += integrand(theta) * w;
                }
            }
            acc
        }
        QuadScheme::AdaptiveSimpson | QuadScheme::AdaptiveGaussKronrod => {
            let mut re = 0.0;
            let mut im = 0.0;
            let mut err = 0.0;
            for ab in breaks.windows(2) {
                let r = adaptive_simpson(|x| integrand(x).re, ab[0], ab[1], quad.abs_tol, 50)?;
                let i = adaptive_simpson(|x| integrand(x).im, ab[0], ab[1], quad.abs_tol, 50)?;
                re += r.value;
                im += i.value;
                err += r.abs_error + i.abs_error;
            }
            if err > quad.abs_tol.max(quad.rel_tol * re.hypot(im)) * 10.0 {
                return Err(Error::Accuracy {
                    what: format!("local moment p={p}, s={s}"),
                    achieved: err,
                });
            }
            Complex64::new(re, im)
        }
    };
    Ok((integral * FRAC_2_PI).ln() + sigma * peak)
}

/// `E_p(s) = (2/pi) int_0^pi D_p(theta)^s sin^2(theta) dtheta`.
///
/// Overflows to infinity for very large `Re s` at small `p`; use
/// [`local_log_moment`] there.
pub fn local_moment(p: u64, s: Complex64, quad: &QuadratureSpec) -> Result<Complex64> {
    Ok(local_log_moment(p, s, quad)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightedRoute {
    /// `(2/pi) int D_p^sigma (1 - cos)^j sin^2 dtheta`
    Theta,
    /// The `u = sin^2(theta/2)` form on `[0, 1]`.
    U,
}

/// `log E_{p,j}(sigma)` by either integral representation.
pub fn local_log_moment_weighted(
    p: u64,
    j: u32,
    sigma: f64,
    quad: &QuadratureSpec,
    route: WeightedRoute,
) -> Result<f64> {
    if p < 2 {
        return Err(Error::domain(format!("local factor needs p >= 2, got {p}")));
    }
    quad.validate(None)?;
    let pf = p as f64;
    let peak = log_d_peak(pf, sigma);
    let n = quad.nodes;
    let integral = match route {
        WeightedRoute::Theta => {
            let breaks = theta_breaks(pf, sigma, 0.0);
            let mut acc = 0.0;
            for ab in breaks.windows(2) {
                for (theta, w) in nodes_on(ab[0], ab[1], n) {
                    let st = theta.sin();
                    let omc = 2.0 * (0.5 * theta).sin().powi(2);
                    acc += w * (sigma * log_d_rel(pf, sigma, theta)).exp() * omc.powi(j as i32) * st * st;
                }
            }
            FRAC_2_PI * acc
        }
        WeightedRoute::U => {
            // [(1-1/p)^2 + 4u/p]^-sigma relative to its peak
            let rel = |u: f64| -> f64 {
                if sigma >= 0.0 {
                    -sigma * (4.0 * u / (pf * (1.0 - 1.0 / pf).powi(2))).ln_1p()
                } else {
                    -sigma * (-4.0 * (1.0 - u) / (pf * (1.0 + 1.0 / pf).powi(2))).ln_1p()
                }
            };
            let abs_sigma = sigma.abs();
            let s_half = std::f64::consts::FRAC_1_SQRT_2;
            // width of the peak in sqrt(u) (or sqrt(1-u))
            let width = if abs_sigma > 0.0 {
                let a = if sigma >= 0.0 { pf - 1.0 } else { pf + 1.0 };
                a / (2.0 * (abs_sigma * pf).sqrt())
            } else {
                f64::INFINITY
            };
            let geometric = |peaked: bool| -> Vec<f64> {
                let mut b = vec![0.0];
                if peaked && width < 0.5 * s_half {
                    let mut d = width;
                    while d < s_half {
                        b.push(d);
                        d *= 2.0;
                    }
                } else {
                    b.push(0.5 * s_half);
                }
                b.push(s_half);
                b
            };
            let mut acc = 0.0;
            // u = w^2 on [0, 1/2]
            for ab in geometric(sigma >= 0.0).windows(2) {
                for (w, wt) in nodes_on(ab[0], ab[1], n) {
                    let u = w * w;
                    acc += wt * rel(u).exp() * w.powi(2 * j as i32 + 1) * (1.0 - u).sqrt() * 2.0 * w;
                }
            }
            // 1 - u = v^2 on [1/2, 1]
            for ab in geometric(sigma < 0.0).windows(2) {
                for (v, wt) in nodes_on(ab[0], ab[1], n) {
                    let u = 1.0 - v * v;
                    acc += wt * rel(u).exp() * u.powf(j as f64 + 0.5) * v * 2.0 * v;
                }
            }
            2f64.powi(j as i32 + 3) / PI * acc
        }
    };
    Ok(sigma * peak + integral.ln())
}

/// `E_{p,j}(sigma) = (2/pi) int D_p^sigma (1 - cos)^j sin^2 dtheta`.
pub fn local_moment_weighted(
    p: u64,
    j: u32,
    sigma: f64,
    quad: &QuadratureSpec,
    route: WeightedRoute,
) -> Result<f64> {
    Ok(local_log_moment_weighted(p, j, sigma, quad, route)?.exp())
}

/// `E_p(sigma)`, `E_p'/E_p` and `(E_p'' E_p - E_p'^2)/E_p^2` at real `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDerivatives {
    pub p: u64,
    pub sigma: f64,
    pub value: f64,
    pub log_value: f64,
    pub dlog1: f64,
    pub curvature: f64,
}

pub fn local_log_derivatives(p: u64, sigma: f64, quad: &QuadratureSpec) -> Result<LocalDerivatives> {
    if p < 2 {
        return Err(Error::domain(format!("local factor needs p >= 2, got {p}")));
    }
    quad.validate(None)?;
    let c = local_cumulants(p, sigma, quad.nodes);
    Ok(LocalDerivatives {
        p,
        sigma,
        value: c.log_value.exp(),
        log_value: c.log_value,
        dlog1: c.k[0],
        curvature: c.k[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxOrder {
    Dlog1,
    Curvature,
}

/// Large-`p` closed forms: `g'(sigma/p) log D_p(0) / 2` for the first
/// log-derivative and `g''(sigma/p) / p^2` for the curvature. Valid for
/// `sigma >= 3` and `p >= sqrt(sigma)`.
pub fn local_approx(p: u64, sigma: f64, order: ApproxOrder) -> Result<f64> {
    let pf = p as f64;
    if !(sigma >= 3.0) {
        return Err(Error::domain(format!("local_approx needs sigma >= 3, got {sigma}")));
    }
    if pf < sigma.sqrt() {
        return Err(Error::domain(format!(
            "local_approx needs p >= sqrt(sigma): p={p}, sigma={sigma}"
        )));
    }
    let u = sigma / pf;
    let t = model::tilted(u);
    Ok(match order {
        ApproxOrder::Dlog1 => 0.5 * t.g1 * log_d_peak(pf, 1.0),
        ApproxOrder::Curvature => t.g2 / (pf * pf),
    })
}

/// Number of Sato-Tate moments of `p log D_p` kept for the series path.
pub const SERIES_MOMENTS: usize = 20;

/// `E[(p log D_p)^n]` under the Sato-Tate measure, `n = 0..SERIES_MOMENTS`.
pub fn scaled_log_moments(p: u64) -> [f64; SERIES_MOMENTS] {
    let pf = p as f64;
    let mut m = [0.0; SERIES_MOMENTS];
    for ab in [(0.0, 0.5 * PI), (0.5 * PI, PI)] {
        for (theta, w) in nodes_on(ab.0, ab.1, 32) {
            let x = pf * log_d_p(pf, theta);
            let mut v = w * FRAC_2_PI * theta.sin().powi(2);
            for mn in m.iter_mut() {
                *mn += v;
                v *= x;
            }
        }
    }
    m
}

/// Cumulants from the Taylor series of `E_p(sigma) = sum_n (sigma/p)^n m_n / n!`
/// with `m_n = E[(p log D_p)^n]`. Intended for `|sigma| / p <= 1/16`.
pub fn cumulants_from_moments(p: u64, sigma: f64, m: &[f64; SERIES_MOMENTS]) -> LocalCumulants {
    let pf = p as f64;
    let x = sigma / pf;
    // s[k] = d^k/dx^k of the series; s0m1 = s[0] - 1
    let mut s = [0.0f64; 5];
    let mut s0m1 = 0.0;
    let mut coef = 1.0; // x^n / n!
    for n in 0..SERIES_MOMENTS - 4 {
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += coef * m[n + k];
        }
        if n > 0 {
            s0m1 += coef * m[n];
        }
        coef *= x / (n + 1) as f64;
    }
    let r1 = s[1] / s[0];
    let r2 = s[2] / s[0];
    let r3 = s[3] / s[0];
    let r4 = s[4] / s[0];
    let k2 = r2 - r1 * r1;
    let k3 = r3 - 3.0 * r2 * r1 + 2.0 * r1.powi(3);
    let k4 = r4 - 4.0 * r3 * r1 - 3.0 * r2 * r2 + 12.0 * r2 * r1 * r1 - 6.0 * r1.powi(4);
    LocalCumulants {
        log_value: s0m1.ln_1p(),
        k: [r1 / pf, k2 / pf.powi(2), k3 / pf.powi(3), k4 / pf.powi(4)],
    }
}

/// Series evaluation of [`local_cumulants`] for `p > 16 max(|sigma|, 1)`.
pub fn local_cumulants_fast(p: u64, sigma: f64) -> LocalCumulants {
    cumulants_from_moments(p, sigma, &scaled_log_moments(p))
}
