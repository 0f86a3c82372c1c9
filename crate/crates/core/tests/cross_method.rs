use euler_extremes::monte_carlo::{empirical_moment, estimate_tail_plain, SamplerConfig};
use euler_extremes::profile::{phi_profile, Profile};
use euler_extremes::saddle::{self, Tail};
use euler_extremes::tail::{self, ExpansionRoute, SmoothingParams};
use euler_extremes::QuadratureSpec;

#[test]
fn saddle_and_expansion_within_envelope() {
    let q = QuadratureSpec::default();
    let s = tail::tail_saddle(6.0, 1e3).unwrap();
    let e = tail::tail_expansion(6.0, 1e3, 2, ExpansionRoute::LogKappa, &q).unwrap();
    assert!((s.log_value - e.log_value).abs() <= e.error_indicator, "{} vs {}", s.log_value, e.log_value);
}

#[test]
fn saddle_and_expansion_converge() {
    let q = QuadratureSpec::default();
    let mut prev = f64::INFINITY;
    for t in [4.0, 5.0, 6.0, 7.0, 8.0] {
        let s = tail::tail_saddle(t, 1e5).unwrap().log_value;
        let e = tail::tail_expansion(t, 1e5, 2, ExpansionRoute::LogKappa, &q).unwrap().log_value;
        let rel = ((s - e) / s).abs();
        assert!(rel < prev, "t={t}: {rel}");
        prev = rel;
    }
}

#[test]
fn perron_is_stable_in_lambda() {
    // Phi(t) <= V <= Phi(t e^{-lambda/2}), and log Phi moves by about kappa lambda over that range
    let (t, y) = (2.0, 50.0);
    let prof = Profile::new(y, &QuadratureSpec::default()).unwrap();
    let wide = SmoothingParams::for_t(t);
    let narrow = SmoothingParams { lambda: wide.lambda / 4.0, ..wide };
    let a = tail::tail_perron_on(&prof, t, Tail::Upper, &wide).unwrap();
    let b = tail::tail_perron_on(&prof, t, Tail::Upper, &narrow).unwrap();
    assert!(b.upper.log_value <= a.upper.log_value + 1e-9);
    assert!(a.upper.log_value - b.upper.log_value <= a.kappa * wide.lambda);
    let preset = SmoothingParams::kappa_preset(a.kappa);
    let c = tail::tail_perron_on(&prof, t, Tail::Upper, &preset).unwrap();
    assert!((c.upper.log_value - b.upper.log_value).abs() <= a.kappa * wide.lambda);
}

#[test]
fn perron_sandwich_against_monte_carlo() {
    let (t, y) = (1.5, 30.0);
    let v = tail::tail_perron(t, y, &SmoothingParams::for_t(t)).unwrap();
    let cfg = SamplerConfig::new(99, 400_000, y);
    let at_t = estimate_tail_plain(t, Tail::Upper, &cfg).unwrap();
    let at_shift = estimate_tail_plain(v.lower.t, Tail::Upper, &cfg).unwrap();
    let vv = v.upper.log_value;
    assert!(vv >= at_t.log_value() - 4.0 * at_t.log_stderr());
    assert!(vv <= at_shift.log_value() + 4.0 * at_shift.log_stderr());
}

#[test]
fn lower_perron_sandwich_against_monte_carlo() {
    let (t, y) = (2.0, 50.0);
    let v = tail::tail_perron_lower(t, y, &SmoothingParams::for_t(t)).unwrap();
    let cfg = SamplerConfig::new(5, 400_000, y);
    let at_t = estimate_tail_plain(t, Tail::Lower, &cfg).unwrap();
    let at_shift = estimate_tail_plain(v.lower.t, Tail::Lower, &cfg).unwrap();
    let vv = v.upper.log_value;
    assert!(vv >= at_t.log_value() - 4.0 * at_t.log_stderr());
    assert!(vv <= at_shift.log_value() + 4.0 * at_shift.log_stderr());
}

#[test]
fn moments_agree_with_product_formula() {
    let q = QuadratureSpec::default();
    let cfg = SamplerConfig::new(1, 1_000_000, 50.0);
    for s in [2.0, -2.0] {
        let mc = empirical_moment(s, &cfg).unwrap();
        let exact = phi_profile(s, 50.0, 0, &q, true).unwrap().phi(0).exp();
        assert!((mc.mean - exact).abs() < 4.0 * mc.stderr, "s={s}");
    }
    let one = empirical_moment(1.0, &cfg).unwrap();
    assert!((one.mean - 1.0).abs() < 4.0 * one.stderr);
}

#[test]
fn saddle_uniqueness_and_minimizer() {
    let prof = Profile::new(1e3, &QuadratureSpec::default()).unwrap();
    let sol = saddle::solve_saddle_on(&prof, 3.0, 1e-12).unwrap();
    let f = |k: f64| saddle::saddle_objective(&prof, Tail::Upper, 3.0, k).unwrap();
    assert!(f(sol.kappa) <= f(sol.kappa * 0.99) && f(sol.kappa) <= f(sol.kappa * 1.01));
}
