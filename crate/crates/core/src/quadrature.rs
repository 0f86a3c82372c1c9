//! Quadrature rules: fixed Gauss-Legendre (optionally composite), adaptive
//! Gauss-Kronrod (G7/K15) and adaptive Simpson.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadScheme {
    GaussLegendreFixed,
    AdaptiveSimpson,
    AdaptiveGaussKronrod,
}

/// Node count and tolerance policy for an integral.
///
/// `nodes` is the per-panel Gauss-Legendre order for the fixed scheme.
/// `abs_tol`/`rel_tol` drive the adaptive schemes. `split_points` force
/// subdivision and must lie strictly inside the integration interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadScheme,
    pub nodes: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    #[serde(default)]
    pub split_points: Vec<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadScheme::GaussLegendreFixed,
            nodes: 32,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            split_points: Vec::new(),
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_legendre(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }

    pub fn adaptive_simpson(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            scheme: QuadScheme::AdaptiveSimpson,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn adaptive_gauss_kronrod(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            scheme: QuadScheme::AdaptiveGaussKronrod,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Checks the structural invariants; `interval` is the integration range
    /// the split points must fall strictly inside of.
    pub fn validate(&self, interval: Option<(f64, f64)>) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::domain(format!(
                "quadrature needs at least 8 nodes, got {}",
                self.nodes
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::domain("quadrature tolerances must be positive"));
        }
        if let Some((a, b)) = interval {
            if let Some(s) = self.split_points.iter().find(|&&s| !(s > a && s < b)) {
                return Err(Error::domain(format!(
                    "split point {s} not strictly inside [{a}, {b}]"
                )));
            }
        }
        Ok(())
    }

    /// Stable textual key used by caches and manifests.
    pub fn fingerprint(&self) -> String {
        let scheme = match self.scheme {
            QuadScheme::GaussLegendreFixed => "gl",
            QuadScheme::AdaptiveSimpson => "simpson",
            QuadScheme::AdaptiveGaussKronrod => "gk15",
        };
        let splits: Vec<String> = self.split_points.iter().map(|s| format!("{s:e}")).collect();
        format!(
            "{scheme}:n{}:a{:e}:r{:e}:s[{}]",
            self.nodes,
            self.abs_tol,
            self.rel_tol,
            splits.join(",")
        )
    }
}

/// Value and error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn rule_cache() -> &'static Mutex<HashMap<usize, Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on `P_n` and memoized per order.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    if let Some(r) = rule_cache().lock().unwrap().get(&n) {
        return r.clone();
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    let rule = Arc::new((x, w));
    rule_cache().lock().unwrap().insert(n, rule.clone());
    rule
}

/// Gauss-Legendre nodes mapped to `[a, b]` as `(x, weight)` pairs.
pub fn nodes_on(a: f64, b: f64, n: usize) -> impl Iterator<Item = (f64, f64)> {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (0..n).map(move |i| (mid + half * rule.0[i], half * rule.1[i]))
}

/// Fixed-order Gauss-Legendre on `[a, b]`.
pub fn gl_integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    nodes_on(a, b, n).map(|(x, w)| w * f(x)).sum()
}

/// Composite Gauss-Legendre over consecutive breakpoints.
pub fn gl_composite<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], n: usize) -> f64 {
    breaks
        .windows(2)
        .map(|ab| gl_integrate(&mut f, ab[0], ab[1], n))
        .sum()
}

// Kronrod 15-point abscissae / weights and embedded Gauss 7-point weights.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7/K15 with global bisection of the worst panel.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    const MAX_PANELS: usize = 4000;
    let (v0, e0) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                abs_error: err,
            });
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Accuracy {
                what: format!("adaptive Gauss-Kronrod on [{a}, {b}]"),
                achieved: err,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if !(mid > pa && mid < pb) {
            // panel cannot be split further in double precision
            let err: f64 = panels.iter().map(|p| p.3).sum();
            return Err(Error::Accuracy {
                what: format!("adaptive Gauss-Kronrod on [{a}, {b}] (panel underflow)"),
                achieved: err,
            });
        }
        let (vl, el) = gk15(&mut f, pa, mid);
        let (vr, er) = gk15(&mut f, mid, pb);
        panels.push((pa, mid, vl, el));
        panels.push((mid, pb, vr, er));
    }
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Result<QuadResult> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut err = 0.0;
    let mut ok = true;
    let v = simpson_rec(&mut f, a, b, fa, fm, fb, whole, abs_tol, max_depth, &mut err, &mut ok);
    if ok {
        Ok(QuadResult {
            value: v,
            abs_error: err,
        })
    } else {
        Err(Error::Accuracy {
            what: format!("adaptive Simpson on [{a}, {b}]"),
            achieved: err,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        if depth == 0 && delta.abs() > 15.0 * tol {
            *ok = false;
        }
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err, ok)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err, ok)
}

/// Integrate `f` over `[a, b]` according to `spec`, honoring its split points.
pub fn integrate<F: FnMut(f64) -> f64>(
    spec: &QuadratureSpec,
    mut f: F,
    a: f64,
    b: f64,
) -> Result<QuadResult> {
    spec.validate(Some((a.min(b), a.max(b))))?;
    let mut breaks = vec![a];
    breaks.extend(spec.split_points.iter().copied());
    breaks.push(b);
    let mut total = QuadResult {
        value: 0.0,
        abs_error: 0.0,
    };
    for ab in breaks.windows(2) {
        let r = match spec.scheme {
            QuadScheme::GaussLegendreFixed => {
                let v = gl_integrate(&mut f, ab[0], ab[1], spec.nodes);
                let v2 = gl_integrate(&mut f, ab[0], ab[1], spec.nodes / 2);
                QuadResult {
                    value: v,
                    abs_error: (v - v2).abs(),
                }
            }
            QuadScheme::AdaptiveSimpson => {
                adaptive_simpson(&mut f, ab[0], ab[1], spec.abs_tol, 40)?
            }
            QuadScheme::AdaptiveGaussKronrod => {
                adaptive_gk(&mut f, ab[0], ab[1], spec.abs_tol, spec.rel_tol)?
            }
        };
        total.value += r.value;
        total.abs_error += r.abs_error;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [8usize, 16, 33, 64] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.1.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14);
            // degree 2n-1 monomial x^(2n-2) integrates to 2/(2n-1)
            let k = 2 * n - 2;
            let v: f64 = rule
                .0
                .iter()
                .zip(rule.1.iter())
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            assert!((v - 2.0 / (k as f64 + 1.0)).abs() < 1e-13, "n={n}: {v}");
        }
    }

    #[test]
    fn gk_handles_log_singularity() {
        // int_0^1 ln(x) dx = -1
        let r = adaptive_gk(|x| x.ln(), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((r.value + 1.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let r = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 40).unwrap();
        assert!((r.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn spec_validation() {
        let mut s = QuadratureSpec::default();
        assert!(s.validate(None).is_ok());
        s.nodes = 4;
        assert!(s.validate(None).is_err());
        let s = QuadratureSpec {
            split_points: vec![0.0],
            ..QuadratureSpec::default()
        };
        assert!(s.validate(Some((0.0, 1.0))).is_err());
        let s = QuadratureSpec {
            abs_tol: 0.0,
            ..QuadratureSpec::default()
        };
        assert!(s.validate(None).is_err());
    }

    #[test]
    fn integrate_uses_split_points() {
        let spec = QuadratureSpec {
            split_points: vec![1.0],
            ..QuadratureSpec::gauss_legendre(16)
        };
        let r = integrate(&spec, |x: f64| (x - 1.0).abs(), 0.0, 2.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }
}
