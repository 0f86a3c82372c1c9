//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each.
//!
//! Some criteria fail for reasons analysed in README.md ("Known failures").
//! Those are listed in `KNOWN_FAILURES`; the process exits nonzero if any other
//! criterion fails, if a listed one unexpectedly passes, or, with
//! `ACCEPTANCE_STRICT=1`, if anything fails at all.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use euler_extremes::consts::EULER_GAMMA;
use euler_extremes::invariants::{self, SUITES};
use euler_extremes::local::{local_log_moment_weighted, local_moment, WeightedRoute};
use euler_extremes::model::{self, h_fn, series_h_small};
use euler_extremes::monte_carlo::{estimate_tail_plain, estimate_tail_tilted, McEstimate, SamplerConfig};
use euler_extremes::profile::{phi_profile, remainder};
use euler_extremes::saddle::{self, Tail};
use euler_extremes::tail::{self, SmoothingParams, TailEstimate};
use euler_extremes::QuadratureSpec;

const KNOWN_FAILURES: &[u32] = &[2, 5, 7, 10];

const SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, note: String) {
        if !ok {
            self.passed = false;
            self.notes.push(format!("FAILED: {note}"));
        }
    }

    fn info(&mut self, note: String) {
        self.notes.push(note);
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "orthogonality exactness", secs(1), orthogonality),
        (2, "expansion constants", secs(10), expansion_constants),
        (3, "dual-representation quadrature", secs(5), dual_quadrature),
        (4, "saddle solver", secs(30), saddle_solver),
        (5, "three-way tail agreement", secs(120), three_way),
        (6, "rare-event regime", secs(60), rare_event),
        (7, "double-exponential decay", secs(60), double_exponential),
        (8, "asymptotic profile checks", secs(120), asymptotic_profile),
        (9, "invariant suites", secs(120), invariant_suites),
        (10, "lower tail", secs(60), lower_tail),
    ];
    let mut unexpected = Vec::new();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let mut out = run();
        let elapsed = start.elapsed();
        out.require(elapsed <= budget, format!("runtime {elapsed:.2?} over budget {budget:?}"));
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (out.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("[{tag}] criterion {id}: {name} ({:.2} s)", elapsed.as_secs_f64());
        for n in &out.notes {
            println!("        {n}");
        }
        if !out.passed {
            failed += 1;
        }
        if out.passed == known {
            unexpected.push(id);
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn orthogonality() -> Outcome {
    let mut o = Outcome::new();
    for p in [2u64, 3, 5, 101, 9973] {
        for s in [0.0, 1.0] {
            let e = local_moment(p, Complex64::new(s, 0.0), &q()).unwrap().re;
            o.require((e - 1.0).abs() < 1e-10, format!("|E_{p}({s}) - 1| = {:e}", (e - 1.0).abs()));
        }
    }
    for y in [50.0, 1e3] {
        let phi0 = phi_profile(1.0, y, 0, &q(), true).unwrap().phi(0);
        o.require(phi0.abs() < 1e-8, format!("|phi_0(1, {y})| = {:e}", phi0.abs()));
    }
    o
}

fn expansion_constants() -> Outcome {
    let mut o = Outcome::new();
    let c = model::expansion_coefficients(4, &q()).unwrap();
    let b12 = c.b(1, 2);
    o.require((b12 - 2.0).abs() < 1e-6, format!("b_(1,2) = {b12}, expected 2"));
    let a1 = c.a(1);
    o.require((a1 - 1.0).abs() < 1e-6, format!("a_1 = {a1}, expected 1"));
    let a_star1 = c.a_star(1);
    o.require(a_star1 == 1.0, format!("a*_1 = {a_star1}, expected 1"));
    for j in 1..=3 {
        let d = (c.a(j) - (c.b(j, 1) - c.b(j, 0))).abs();
        o.require(d < 1e-6, format!("|a_{j} - (b_({j},1) - b_({j},0))| = {d:e}"));
    }
    o.info(format!("computed a_1 = {a1:.10}, a*_1 = {a_star1:.10}, b_(1,2) = {b12:.10}"));
    o
}

fn dual_quadrature() -> Outcome {
    let mut o = Outcome::new();
    for j in 0..=2u32 {
        for p in [2u64, 17, 1009] {
            for sigma in [0.5, 5.0, 50.0] {
                let a = local_log_moment_weighted(p, j, sigma, &q(), WeightedRoute::Theta).unwrap();
                let b = local_log_moment_weighted(p, j, sigma, &q(), WeightedRoute::U).unwrap();
                // relative difference of the moments themselves
                let rel = (a - b).exp_m1().abs();
                o.require(rel < 1e-8, format!("E_({p},{j})({sigma}): theta vs u relative {rel:e}"));
            }
        }
    }
    for k in 1..100 {
        let u = 0.01 * k as f64;
        let d = (series_h_small(u, 40).unwrap() - h_fn(u).unwrap()).abs();
        o.require(d < 1e-9, format!("series vs h at u={u}: {d:e}"));
    }
    o
}

fn saddle_solver() -> Outcome {
    let mut o = Outcome::new();
    let (mut worst_res, mut worst_it) = (0.0f64, 0);
    for k in 0..=14 {
        let t = 1.0 + 0.5 * k as f64;
        for mult in [1.0, 10.0] {
            let y = (2.0 * f64::exp(t)).ceil() * mult;
            match saddle::solve_saddle(t, y, 1e-10) {
                Ok(s) => {
                    worst_res = worst_res.max(s.residual);
                    worst_it = worst_it.max(s.iterations);
                    o.require(s.residual <= 1e-10, format!("t={t}, y={y}: residual {:e}", s.residual));
                    o.require(s.iterations <= 8, format!("t={t}, y={y}: {} iterations", s.iterations));
                    let e = t.exp();
                    o.require(s.kappa >= e / 8.0 && s.kappa <= 8.0 * e, format!("t={t}, y={y}: kappa {} outside bracket", s.kappa));
                }
                Err(e) => o.require(false, format!("t={t}, y={y}: {e}")),
            }
        }
    }
    let mut prev = f64::INFINITY;
    let mut errs = Vec::new();
    for t in [4.0, 5.0, 6.0, 7.0, 8.0] {
        let kappa = saddle::solve_saddle(t, 1e5, 1e-10).unwrap().kappa;
        let rel = (saddle::saddle_expansion(t, 2).unwrap() - kappa).abs() / kappa;
        o.require(rel < prev, format!("expansion error not decreasing at t={t}: {rel:e} >= {prev:e}"));
        errs.push(format!("{rel:.3e}"));
        prev = rel;
    }
    o.info(format!("max residual {worst_res:.1e}, max iterations {worst_it}; J=2 relative errors {}", errs.join(", ")));
    o
}

/// `|a - b| <= 4 se`, reported as a z-score.
fn within(a: f64, b: f64, se: f64) -> (bool, f64) {
    let z = (a - b) / se;
    (z.abs() <= 4.0, z)
}

fn plain(t: f64, y: f64, tail: Tail) -> McEstimate {
    estimate_tail_plain(t, tail, &SamplerConfig::new(SEED, 1_000_000, y)).unwrap()
}

fn three_way() -> Outcome {
    let mut o = Outcome::new();
    for (t, y) in [(1.5, 30.0), (2.0, 50.0), (2.5, 80.0)] {
        let s = tail::tail_saddle(t, y).unwrap();
        let params = SmoothingParams::for_t(t);
        let v = tail::tail_perron(t, y, &params).unwrap();
        let t_shift = v.lower.t;
        let s_shift = tail::tail_saddle(t_shift, y).unwrap();
        let mc = plain(t, y, Tail::Upper);
        let mc_shift = plain(t_shift, y, Tail::Upper);
        let vv = v.upper.log_value;
        if mc.bound_only {
            o.require(
                false,
                format!(
                    "(t,y)=({t},{y}): plain MC has no hits in 1e6 samples (95% bound log <= {:.3}); saddle {:.4}",
                    mc.log_value(),
                    s.log_value
                ),
            );
            let kappa = saddle::solve_saddle(t, y, 1e-10).unwrap().kappa;
            let tilted = estimate_tail_tilted(t, Tail::Upper, kappa, &SamplerConfig::new(SEED, 100_000, y)).unwrap();
            o.info(format!(
                "(t,y)=({t},{y}): tilted MC {:.4} +- {:.4}, saddle {:.4}, Perron {vv:.4}",
                tilted.log_value(),
                tilted.log_stderr(),
                s.log_value
            ));
        } else {
            let (ok, z) = within(mc.log_value(), s.log_value, mc.log_stderr());
            o.require(ok, format!("(t,y)=({t},{y}): MC {:.4} vs saddle {:.4}, z = {z:.2}", mc.log_value(), s.log_value));
            let lo = mc.log_value() - 4.0 * mc.log_stderr();
            o.require(vv >= lo, format!("(t,y)=({t},{y}): Perron {vv:.4} below MC at t ({lo:.4})"));
            o.info(format!(
                "(t,y)=({t},{y}): saddle {:.4}, MC {:.4} +- {:.4} (z = {z:.2}), Perron {vv:.4}",
                s.log_value,
                mc.log_value(),
                mc.log_stderr()
            ));
        }
        if !mc_shift.bound_only {
            let hi = mc_shift.log_value() + 4.0 * mc_shift.log_stderr();
            o.require(vv <= hi, format!("(t,y)=({t},{y}): Perron {vv:.4} above MC at t'={t_shift:.4} ({hi:.4})"));
        }
        // the saddle values carry a relative error of t e^-t
        let tol = |e: &TailEstimate| e.error_indicator.ln_1p();
        o.require(vv >= s.log_value - tol(&s), format!("(t,y)=({t},{y}): Perron {vv:.4} below saddle at t"));
        o.require(vv <= s_shift.log_value + tol(&s_shift), format!("(t,y)=({t},{y}): Perron {vv:.4} above saddle at t'"));
    }
    o
}

fn rare_event() -> Outcome {
    let mut o = Outcome::new();
    let (t, y) = (4.0, 200.0);
    let sol = saddle::solve_saddle(t, y, 1e-10).unwrap();
    let s = tail::tail_saddle(t, y).unwrap();
    let mc = estimate_tail_tilted(t, Tail::Upper, sol.kappa, &SamplerConfig::new(SEED, 100_000, y)).unwrap();
    let (ok, z) = within(mc.log_value(), s.log_value, mc.log_stderr());
    o.require(ok, format!("tilted {:.4} vs saddle {:.4}, z = {z:.2}", mc.log_value(), s.log_value));
    o.info(format!("tilted MC {:.4} +- {:.4}, saddle {:.4}, z = {z:.2}", mc.log_value(), mc.log_stderr(), s.log_value));
    o
}

fn double_exponential() -> Outcome {
    let mut o = Outcome::new();
    let gamma0 = model::expansion_coefficients(2, &q()).unwrap().gamma0.value;
    for t in [3.0, 4.0, 5.0, 6.0] {
        let s = tail::tail_saddle(t, 1e4).unwrap();
        let d = (-s.log_value).ln() - (t - gamma0 - t.ln());
        o.require(d.abs() <= 1.0, format!("t={t}: deviation {d:.4}"));
        o.info(format!("t={t}: log(-log Phi) - (t - gamma_0 - log t) = {d:.4}"));
    }
    o
}

fn asymptotic_profile() -> Outcome {
    let mut o = Outcome::new();
    let y = 1e6;
    let b11 = model::coefficient_b(1, 1, &q()).unwrap();
    for sigma in [50.0, 200.0, 1e3] {
        let phi1 = phi_profile(sigma, y, 1, &q(), true).unwrap().phi(1);
        let l = f64::ln(sigma);
        let main = 2.0 * l.ln() + 2.0 * EULER_GAMMA + b11 / l;
        let env = 20.0 * remainder(2, sigma, y);
        let d = (phi1 - main).abs();
        o.require(d <= env, format!("sigma={sigma}: |phi_1 - main| = {d:.3e} > {env:.3e}"));
        o.info(format!("sigma={sigma}: |phi_1 - main| = {d:.3e}, envelope {env:.3e}"));
    }
    let sigma = 1e3;
    let phi2 = phi_profile(sigma, y, 2, &q(), true).unwrap().phi(2);
    let scaled = phi2 * sigma * sigma.ln();
    o.require((1.0..=4.0).contains(&scaled), format!("phi_2 sigma log sigma = {scaled:.4}"));
    o.info(format!("phi_2 sigma log sigma at sigma=1e3: {scaled:.4}"));
    o
}

fn invariant_suites() -> Outcome {
    let mut o = Outcome::new();
    for name in SUITES {
        let r = invariants::run_suite(name, &q()).unwrap();
        o.require(r.passed(), format!("{name}: {:?}", r.failures));
        o.info(format!("{name}: {} checks", r.checks));
    }
    o
}

fn lower_tail() -> Outcome {
    let mut o = Outcome::new();
    let (t, y) = (1.5, 50.0);
    let s = tail::tail_saddle_lower(t, y).unwrap();
    let mc = plain(t, y, Tail::Lower);
    let (ok, z) = within(mc.log_value(), s.log_value, mc.log_stderr());
    o.require(ok, format!("Psi saddle {:.4} vs MC {:.4} +- {:.4}, z = {z:.1}", s.log_value, mc.log_value(), mc.log_stderr()));
    let v = tail::tail_perron_lower(t, y, &SmoothingParams::for_t(t)).unwrap();
    o.info(format!(
        "Perron {:.4}; saddle relative error indicator {:.3}",
        v.upper.log_value, s.error_indicator
    ));
    let mut prev = 0.0;
    // y = 50 admits t <= log 25
    for k in 0..=6 {
        let t = 1.5 + 0.25 * k as f64;
        let v = tail::tail_saddle_lower(t, y).unwrap().log_value;
        o.require(v <= prev, format!("Psi increases at t={t}"));
        prev = v;
    }
    o
}
