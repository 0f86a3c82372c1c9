//! Numerical constants shared across modules.

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_431;

/// `zeta(2) = pi^2 / 6`.
pub const ZETA2: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

/// `ln zeta(2)`.
pub fn ln_zeta2() -> f64 {
    ZETA2.ln()
}

/// Largest `t` accepted by the saddle solvers.
pub const T_MAX: f64 = 12.0;

#[cfg(test)]
mod tests {
    use super::*;

    /// Euler-Maclaurin on the harmonic numbers, independent of the literal.
    fn gamma_from_harmonic(n: u64) -> f64 {
        let mut h = 0.0f64;
        let mut c = 0.0f64;
        for k in (1..=n).rev() {
            let y = 1.0 / k as f64 - c;
            let t = h + y;
            c = (t - h) - y;
            h = t;
        }
        let nf = n as f64;
        let n2 = nf * nf;
        h - nf.ln() - 1.0 / (2.0 * nf) + 1.0 / (12.0 * n2) - 1.0 / (120.0 * n2 * n2)
            + 1.0 / (252.0 * n2 * n2 * n2)
    }

    #[test]
    fn gamma_literal_matches_harmonic_limit() {
        let g = gamma_from_harmonic(20_000);
        assert!((g - EULER_GAMMA).abs() < 1e-13, "{g}");
    }

    #[test]
    fn zeta2_matches_partial_sum() {
        let n = 1_000_000u64;
        let s: f64 = (1..=n).rev().map(|k| 1.0 / (k as f64 * k as f64)).sum();
        // tail ~ 1/n - 1/(2n^2)
        let tail = 1.0 / n as f64 - 0.5 / (n as f64 * n as f64);
        assert!((s + tail - ZETA2).abs() < 1e-13);
    }
}
