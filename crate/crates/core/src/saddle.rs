//! Saddle points of `phi(., y)`: the `kappa > 0` with `phi_1(kappa, y)` equal to
//! the upper-tail target `2(log t + gamma)`, and the `kappa > 0` with
//! `phi_1(-kappa, y)` equal to the lower-tail target
//! `-2(log t + gamma - log zeta(2))`.

use serde::{Deserialize, Serialize};

use crate::consts::{ln_zeta2, EULER_GAMMA, T_MAX};
use crate::error::{Error, Result};
use crate::model;
use crate::profile::{Profile, ProfileDerivatives};
use crate::quadrature::QuadratureSpec;

/// Default residual tolerance on `phi_1 - target`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Calibrated bracket factor: `e^t / 8 <= kappa <= 8 e^t`.
pub const UPPER_BRACKET: f64 = 8.0;

/// Calibrated bracket factor for the lower tail, valid for `t >= 1.5`.
pub const LOWER_BRACKET: f64 = 8.0;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `Phi(t, y) = P(L >= (e^gamma t)^2)`
    Upper,
    /// `Psi(t, y) = P(L <= (zeta(2) / (e^gamma t))^2)`
    Lower,
}

impl Tail {
    /// Threshold on `log L`.
    pub fn log_threshold(self, t: f64) -> f64 {
        match self {
            Tail::Upper => 2.0 * (EULER_GAMMA + t.ln()),
            Tail::Lower => -2.0 * (EULER_GAMMA + t.ln() - ln_zeta2()),
        }
    }

    /// Sign of the evaluation point: `sigma = sign * kappa`.
    pub fn sign(self) -> f64 {
        match self {
            Tail::Upper => 1.0,
            Tail::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub tail: Tail,
    pub t: f64,
    pub y: f64,
    /// `kappa > 0`; the profile is evaluated at `tail.sign() * kappa`.
    pub kappa: f64,
    pub log_kappa: f64,
    pub target: f64,
    pub residual: f64,
    /// Final bracket on `kappa`.
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub profile_at_kappa: ProfileDerivatives,
}

/// Check `1 <= t <= T_MAX` and `y >= 2 e^t`.
pub fn check_regime(t: f64, y: f64) -> Result<()> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::domain(format!("t must be >= 1, got {t}")));
    }
    if t > T_MAX {
        return Err(Error::regime(format!(
            "t = {t} exceeds the supported range t <= {T_MAX}"
        )));
    }
    if !(y >= 2.0 * t.exp()) {
        return Err(Error::regime(format!(
            "y = {y} < 2e^t = {:.1}: raise y or lower t",
            2.0 * t.exp()
        )));
    }
    Ok(())
}

/// `log kappa` from `e^{t - gamma_0} (1 + sum_{j <= J} gamma_j / t^j)`.
pub fn saddle_expansion_log(t: f64, j_max: usize, quad: &QuadratureSpec) -> Result<f64> {
    let c = model::expansion_coefficients(j_max.max(1), quad)?;
    let series: f64 = (1..=j_max).map(|j| c.gamma(j) * t.powi(-(j as i32))).sum();
    Ok(t - c.gamma0.value + series.ln_1p())
}

/// `e^{t - gamma_0} (1 + sum_{j <= J} gamma_j / t^j)`, `J <= 4`.
pub fn saddle_expansion(t: f64, j_max: usize) -> Result<f64> {
    Ok(saddle_expansion_log(t, j_max, &QuadratureSpec::default())?.exp())
}

/// Safeguarded Newton on `log kappa`.
fn solve(profile: &Profile, tail: Tail, t: f64, tol: f64, bracket_factor: f64, start: f64) -> Result<SaddleSolution> {
    let sign = tail.sign();
    let target = tail.log_threshold(t);
    // f(L) = sign * (phi_1(sign e^L) - target) is increasing in L
    let eval = |l: f64| -> Result<(f64, f64)> {
        let k = l.exp();
        let d = profile.derivatives(sign * k, 2, true)?;
        Ok((sign * (d.phi(1) - target), k * d.phi(2)))
    };
    let width = bracket_factor.ln();
    let mut lo = t - width;
    let mut hi = t + width;
    let (mut f_lo, _) = eval(lo)?;
    let (mut f_hi, _) = eval(hi)?;
    let mut expansions = 0;
    while f_lo > 0.0 || f_hi < 0.0 {
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Internal(format!(
                "no sign change of the saddle equation near t={t}, y={}",
                profile.y()
            )));
        }
        if f_lo > 0.0 {
            hi = lo;
            f_hi = f_lo;
            lo -= width;
            f_lo = eval(lo)?.0;
        } else {
            lo = hi;
            f_lo = f_hi;
            hi += width;
            f_hi = eval(hi)?.0;
        }
    }
    let mut l = start.clamp(lo, hi);
    let mut iterations = 0;
    let (mut f, mut df) = eval(l)?;
    while f.abs() > tol {
        if iterations >= MAX_ITERATIONS {
            return Err(Error::Accuracy {
                what: format!("saddle solve at t={t}, y={}", profile.y()),
                achieved: f.abs(),
            });
        }
        if f < 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let newton = l - f / df;
        l = if newton > lo && newton < hi && df > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        iterations += 1;
        (f, df) = eval(l)?;
        if hi - lo < 1e-15 * l.abs().max(1.0) {
            break;
        }
    }
    let kappa = l.exp();
    let profile_at_kappa = profile.derivatives(sign * kappa, 4, true)?;
    let residual = (profile_at_kappa.phi(1) - target).abs();
    if residual > tol {
        return Err(Error::Accuracy {
            what: format!("saddle residual at t={t}, y={}", profile.y()),
            achieved: residual,
        });
    }
    Ok(SaddleSolution {
        tail,
        t,
        y: profile.y(),
        kappa,
        log_kappa: l,
        target,
        residual,
        bracket: (lo.exp(), hi.exp()),
        iterations,
        profile_at_kappa,
    })
}

/// Upper-tail saddle on a prepared profile.
pub fn solve_saddle_on(profile: &Profile, t: f64, tol: f64) -> Result<SaddleSolution> {
    check_regime(t, profile.y())?;
    let start = saddle_expansion_log(t, 2, profile.quad())?;
    solve(profile, Tail::Upper, t, tol, UPPER_BRACKET, start)
}

/// Lower-tail saddle on a prepared profile. Fails with a domain error when
/// the target lies above `phi_1(0, y)`, where no positive root exists.
pub fn solve_saddle_lower_on(profile: &Profile, t: f64, tol: f64) -> Result<SaddleSolution> {
    check_regime(t, profile.y())?;
    let target = Tail::Lower.log_threshold(t);
    let at_zero = profile.derivatives(0.0, 1, true)?.phi(1);
    if target >= at_zero {
        return Err(Error::domain(format!(
            "lower-tail threshold at t={t} is not below the mean of log L ({at_zero:.4}); no saddle"
        )));
    }
    solve(profile, Tail::Lower, t, tol, LOWER_BRACKET, t)
}

pub fn solve_saddle(t: f64, y: f64, tol: f64) -> Result<SaddleSolution> {
    check_regime(t, y)?;
    solve_saddle_on(&Profile::new(y, &QuadratureSpec::default())?, t, tol)
}

pub fn solve_saddle_lower(t: f64, y: f64, tol: f64) -> Result<SaddleSolution> {
    check_regime(t, y)?;
    solve_saddle_lower_on(&Profile::new(y, &QuadratureSpec::default())?, t, tol)
}

/// `phi_0(sign kappa, y) - sign kappa target`: minimized at the saddle.
pub fn saddle_objective(profile: &Profile, tail: Tail, t: f64, kappa: f64) -> Result<f64> {
    let s = tail.sign() * kappa;
    Ok(profile.derivatives(s, 0, true)?.phi(0) - s * tail.log_threshold(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_and_regime() {
        let s = solve_saddle(2.0, 100.0, DEFAULT_TOL).unwrap();
        assert!(s.residual <= 1e-10);
        assert!((s.kappa - s.log_kappa.exp()).abs() < 1e-12 * s.kappa);
        assert!(matches!(solve_saddle(3.0, 20.0, DEFAULT_TOL), Err(Error::Regime(_))));
        assert!(matches!(solve_saddle(13.0, 1e7, DEFAULT_TOL), Err(Error::Regime(_))));
        assert!(matches!(solve_saddle(0.5, 100.0, DEFAULT_TOL), Err(Error::Domain(_))));
    }

    #[test]
    fn bracket_and_monotonicity() {
        for k in 0..8 {
            let t = 1.0 + k as f64;
            let y = (2.0 * t.exp()).ceil();
            let s = solve_saddle(t, y, DEFAULT_TOL).unwrap();
            let e = t.exp();
            assert!(s.kappa >= e / UPPER_BRACKET && s.kappa <= UPPER_BRACKET * e, "t={t}: {}", s.kappa);
            assert!(s.iterations <= 8, "t={t}: {}", s.iterations);
        }
        let a = solve_saddle(2.0, 1e3, DEFAULT_TOL).unwrap();
        let b = solve_saddle(2.5, 1e3, DEFAULT_TOL).unwrap();
        assert!(b.kappa > a.kappa);
    }

    #[test]
    fn expansion_algebra() {
        let g0 = model::expansion_coefficients(1, &QuadratureSpec::default()).unwrap().gamma0.value;
        assert!((saddle_expansion(3.0, 0).unwrap() - (3.0 - g0).exp()).abs() < 1e-12);
        let g1 = model::expansion_coefficients(1, &QuadratureSpec::default()).unwrap().gamma(1);
        let r = saddle_expansion(5.0, 1).unwrap() / saddle_expansion(5.0, 0).unwrap();
        assert!((r - (1.0 + g1 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn minimizer_property() {
        let prof = Profile::new(500.0, &QuadratureSpec::default()).unwrap();
        for tail in [Tail::Upper, Tail::Lower] {
            let s = match tail {
                Tail::Upper => solve_saddle_on(&prof, 2.0, DEFAULT_TOL).unwrap(),
                Tail::Lower => solve_saddle_lower_on(&prof, 2.0, DEFAULT_TOL).unwrap(),
            };
            let at = saddle_objective(&prof, tail, 2.0, s.kappa).unwrap();
            for f in [0.9, 1.1] {
                assert!(saddle_objective(&prof, tail, 2.0, f * s.kappa).unwrap() >= at);
            }
        }
    }

    #[test]
    fn uniqueness_from_both_ends() {
        // plain bisection from the bracket ends lands on the Newton root
        let prof = Profile::new(3000.0, &QuadratureSpec::default()).unwrap();
        for t in [1.3, 2.2, 3.7, 5.1] {
            let s = solve_saddle_on(&prof, t, DEFAULT_TOL).unwrap();
            let target = Tail::Upper.log_threshold(t);
            let f = |k: f64| prof.derivatives(k, 1, true).unwrap().phi(1) - target;
            let (mut lo, mut hi) = (t.exp() / UPPER_BRACKET, t.exp() * UPPER_BRACKET);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let rel = (0.5 * (lo + hi) - s.kappa).abs() / s.kappa;
            assert!(rel < 1e-8, "t={t}: {rel}");
        }
    }

    #[test]
    fn lower_tail() {
        let s = solve_saddle_lower(1.5, 50.0, DEFAULT_TOL).unwrap();
        assert!(s.residual <= 1e-10);
        assert!(s.profile_at_kappa.sigma < 0.0);
        let mut prev = 0.0;
        for t in [1.5, 2.0, 2.5, 3.0] {
            let s = solve_saddle_lower(t, 300.0, DEFAULT_TOL).unwrap();
            assert!(s.kappa > prev);
            let e = t.exp();
            assert!(s.kappa >= e / LOWER_BRACKET && s.kappa <= LOWER_BRACKET * e, "t={t}: {}", s.kappa);
            prev = s.kappa;
        }
        assert!(matches!(solve_saddle_lower(1.0, 50.0, DEFAULT_TOL), Err(Error::Domain(_))));
    }
}
