//! Limit-shape functions of the Sato-Tate model and the expansion constants
//! built from them.
//!
//! `g(u) = log E[e^{2u cos theta}]` under the Sato-Tate measure and `h` is `g`
//! with the linear part `2u` removed past `u = 1`. The constants are improper
//! integrals of `h`, `h'` and `h''` against powers of `log u`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_2_PI, PI};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk, nodes_on, QuadScheme, QuadratureSpec};

/// Largest `j` for which constants are tabulated.
pub const J_MAX: usize = 4;

/// Tolerance for the two-route checks on `a_j` and `a*_2`.
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// `g`, `g'`, `g''` at `u` and the `h` forms for `u >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tilted {
    pub u: f64,
    pub g: f64,
    pub g1: f64,
    pub g2: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

const SMALL_U: f64 = 2.0;
const GL_NODES: usize = 32;

/// Raw ratios for `0 <= u <= SMALL_U` on the half range with `cosh`/`sinh`:
/// returns `(log S0, M1/S0, M2/S0)`.
fn small_regime(u: f64) -> (f64, f64, f64) {
    // S0 - 1 = (2/pi) int_0^{pi/2} 4 sinh^2(u c) sin^2
    let mut s0m1 = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for ab in [(0.0, 0.25 * PI), (0.25 * PI, 0.5 * PI)] {
        for (theta, w) in nodes_on(ab.0, ab.1, GL_NODES) {
            let c = theta.cos();
            let s2 = theta.sin().powi(2);
            let sh = (u * c).sinh();
            s0m1 += w * 4.0 * sh * sh * s2;
            m1 += w * 2.0 * c * (2.0 * u * c).sinh() * s2;
            m2 += w * 2.0 * c * c * (2.0 * u * c).cosh() * s2;
        }
    }
    let s0m1 = FRAC_2_PI * s0m1;
    let s0 = 1.0 + s0m1;
    (s0m1.ln_1p(), FRAC_2_PI * m1 / s0, FRAC_2_PI * m2 / s0)
}

/// For `u > SMALL_U`: `T_k = (2/pi) int e^{-2u(1-c)} (1-c)^k sin^2` on panels
/// refined toward `theta = 0`. Returns `(log T0, T1/T0, T2/T0)`.
fn large_regime(u: f64) -> (f64, f64, f64) {
    let width = 1.0 / u.sqrt();
    let mut breaks = vec![0.0];
    let mut d = width;
    while d < PI {
        breaks.push(d);
        // exponent 2u(1-c) = 4u sin^2(d/2)
        if 4.0 * u * (0.5 * d).sin().powi(2) > 90.0 {
            break;
        }
        d *= 2.0;
    }
    if d >= PI {
        breaks.push(PI);
    }
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for ab in breaks.windows(2) {
        for (theta, w) in nodes_on(ab[0], ab[1], GL_NODES) {
            let omc = 2.0 * (0.5 * theta).sin().powi(2);
            let v = w * (-2.0 * u * omc).exp() * theta.sin().powi(2);
            t0 += v;
            t1 += v * omc;
            t2 += v * omc * omc;
        }
    }
    ((FRAC_2_PI * t0).ln(), t1 / t0, t2 / t0)
}

/// `g` and `h` with two derivatives. `g` is even; `h` is reported for `|u|`.
pub fn tilted(u: f64) -> Tilted {
    let a = u.abs();
    let sign = if u < 0.0 { -1.0 } else { 1.0 };
    let lin = if a >= 1.0 { 2.0 } else { 0.0 };
    let (g, g1, g2, h) = if a <= SMALL_U {
        let (lg, r1, r2) = small_regime(a);
        (lg, 2.0 * r1, 4.0 * (r2 - r1 * r1), lg - lin * a)
    } else {
        let (lt, r1, r2) = large_regime(a);
        (2.0 * a + lt, 2.0 - 2.0 * r1, 4.0 * (r2 - r1 * r1), lt)
    };
    Tilted {
        u,
        g,
        g1: sign * g1,
        g2,
        h,
        h1: g1 - lin,
        h2: g2,
    }
}

/// `g(u) = log (2/pi) int_0^pi e^{2u cos} sin^2`.
pub fn g_fn(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::domain(format!("g_fn needs finite u, got {u}")));
    }
    Ok(tilted(u).g)
}

fn check_h_arg(u: f64) -> Result<()> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::domain(format!("h needs finite u >= 0, got {u}")));
    }
    Ok(())
}

/// `h(u) = g(u)` on `[0, 1)` and `g(u) - 2u` on `[1, inf)`.
pub fn h_fn(u: f64) -> Result<f64> {
    check_h_arg(u)?;
    Ok(tilted(u).h)
}

/// `h'`, `h''` or `h'''`. The last is a central difference of `h''`.
pub fn h_deriv(u: f64, order: u32) -> Result<f64> {
    check_h_arg(u)?;
    if order >= 2 && u == 1.0 {
        return Err(Error::domain("h'' and h''' are not defined at u = 1"));
    }
    match order {
        1 => Ok(tilted(u).h1),
        2 => Ok(tilted(u).h2),
        3 => {
            if u == 0.0 {
                return Ok(0.0);
            }
            let step = (u * 1e-4).min(0.5 * (u - 1.0).abs());
            Ok((tilted(u + step).h2 - tilted(u - step).h2) / (2.0 * step))
        }
        _ => Err(Error::domain(format!("h_deriv order must be 1, 2 or 3, got {order}"))),
    }
}

/// `log(1 + sum_{l=1}^{terms} 2 (2l-1)!! / ((2l)! (2l+2)!!) (2u)^{2l})`,
/// the power series of `h` on `[0, 1)` in the doubled variable.
pub fn series_h_small(u: f64, terms: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!("series_h_small needs 0 <= u < 1, got {u}")));
    }
    let x = (2.0 * u).powi(2);
    let mut sum = 0.0;
    let mut pow = 1.0;
    for l in 1..=terms {
        pow *= x;
        sum += series_coefficient(l) * pow;
    }
    Ok(sum.ln_1p())
}

/// `2 (2l-1)!! / ((2l)! (2l+2)!!)`.
pub fn series_coefficient(l: usize) -> f64 {
    let mut odd = 1.0;
    for k in (1..2 * l).step_by(2) {
        odd *= k as f64;
    }
    let mut fact = 1.0;
    for k in 1..=2 * l {
        fact *= k as f64;
    }
    let mut even = 1.0;
    for k in (2..=2 * l + 2).step_by(2) {
        even *= k as f64;
    }
    2.0 * odd / (fact * even)
}

fn improper<F: Fn(f64) -> f64>(f: F, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    // u = e^{-x} on (0, 1] and u = e^{x} on [1, inf)
    let (abs_tol, rel_tol) = (quad.abs_tol, quad.rel_tol);
    let lo = adaptive_gk(|x| f((-x).exp()) * (-x).exp(), 0.0, 50.0, abs_tol, rel_tol)?;
    let hi = adaptive_gk(|x| f(x.exp()) * x.exp(), 0.0, 60.0, abs_tol, rel_tol)?;
    Ok((lo.value + hi.value, lo.abs_error + hi.abs_error))
}

/// A computed constant with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub abs_error: f64,
}

fn constants_quad(quad: &QuadratureSpec) -> QuadratureSpec {
    // a fixed Gauss-Legendre request still runs the adaptive rule on the
    // improper integrals; its tolerances drive the subdivision
    let mut q = quad.clone();
    if q.scheme == QuadScheme::GaussLegendreFixed {
        q.scheme = QuadScheme::AdaptiveGaussKronrod;
    }
    q
}

/// `b_{j,n}`: the integral of `h/u^2`, `h'/u` or `h''` against `(log u)^{j-1}`.
pub fn coefficient_b_with_error(j: usize, n: u32, quad: &QuadratureSpec) -> Result<Constant> {
    if !(1..=J_MAX + 1).contains(&j) {
        return Err(Error::domain(format!("coefficient_b needs 1 <= j <= {}, got {j}", J_MAX + 1)));
    }
    quad.validate(None)?;
    let q = constants_quad(quad);
    let k = (j - 1) as i32;
    let (value, abs_error) = match n {
        0 => improper(|u| tilted(u).h / (u * u) * u.ln().powi(k), &q)?,
        1 => improper(|u| tilted(u).h1 / u * u.ln().powi(k), &q)?,
        2 => improper(|u| tilted(u).h2 * u.ln().powi(k), &q)?,
        _ => return Err(Error::domain(format!("coefficient_b needs n in 0..=2, got {n}"))),
    };
    Ok(Constant { value, abs_error })
}

pub fn coefficient_b(j: usize, n: u32, quad: &QuadratureSpec) -> Result<f64> {
    Ok(coefficient_b_with_error(j, n, quad)?.value)
}

/// `a_j` by direct quadrature of `(h/u)'` together with its discrepancy from
/// `b_{j,1} - b_{j,0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientA {
    pub value: f64,
    pub abs_error: f64,
    pub discrepancy: f64,
}

pub fn coefficient_a_checked(j: usize, quad: &QuadratureSpec) -> Result<CoefficientA> {
    if !(1..=J_MAX + 1).contains(&j) {
        return Err(Error::domain(format!("coefficient_a needs 1 <= j <= {}, got {j}", J_MAX + 1)));
    }
    quad.validate(None)?;
    let q = constants_quad(quad);
    let k = (j - 1) as i32;
    let (value, abs_error) = improper(
        |u| {
            let t = tilted(u);
            (u * t.h1 - t.h) / (u * u) * u.ln().powi(k)
        },
        &q,
    )?;
    let diff = coefficient_b(j, 1, quad)? - coefficient_b(j, 0, quad)?;
    let discrepancy = (value - diff).abs();
    if discrepancy > CONSISTENCY_TOL {
        return Err(Error::Consistency {
            what: format!("a_{j} direct vs b_{{{j},1}} - b_{{{j},0}}"),
            discrepancy,
        });
    }
    Ok(CoefficientA { value, abs_error, discrepancy })
}

pub fn coefficient_a(j: usize) -> Result<f64> {
    Ok(coefficient_a_checked(j, &QuadratureSpec::default())?.value)
}

/// Exponents `m_1..m_j` with `sum i m_i = j`.
pub fn partitions(j: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, part: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if part == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for m in 0..=rest / part {
            cur[part - 1] = m;
            rec(rest - m * part, part - 1, cur, out);
        }
        cur[part - 1] = 0;
    }
    let mut out = Vec::new();
    if j == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut cur = vec![0; j];
    rec(j, j, &mut cur, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `b'_k = sum over partitions of prod b_{i,1}^{m_i} / (2 m_i)!!` for
/// `k = 0..b1.len()`. `b1[i-1] = b_{i,1}`.
pub fn b_prime(b1: &[f64]) -> Vec<f64> {
    (0..=b1.len())
        .map(|k| {
            partitions(k)
                .iter()
                .map(|m| {
                    m.iter()
                        .enumerate()
                        .map(|(i, &mi)| b1[i].powi(mi as i32) / (2f64.powi(mi as i32) * factorial(mi)))
                        .product::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Truncated power series multiply, degree `<= deg`.
fn ps_mul(a: &[f64], b: &[f64], deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; deg + 1];
    for (i, &ai) in a.iter().enumerate().take(deg + 1) {
        for (k, &bk) in b.iter().enumerate().take(deg + 1 - i) {
            out[i + k] += ai * bk;
        }
    }
    out
}

/// `gamma'_0..gamma'_deg` from `b'_1..b'_{deg+1}`: the coefficients of
/// `log kappa = t - sum gamma'_j t^-j`, found by fixed-point iteration on
/// truncated series in `x = 1/t` of `c = sum_j b'_{j+1} x^j (1 - x c)^-j`.
pub fn gamma_prime(bp: &[f64], deg: usize) -> Vec<f64> {
    let mut c = vec![0.0; deg + 1];
    for _ in 0..=deg + 1 {
        // r = 1/(1 - x c)
        let mut one_minus = vec![0.0; deg + 1];
        one_minus[0] = 1.0;
        for k in 1..=deg {
            one_minus[k] -= c[k - 1];
        }
        let mut r = vec![0.0; deg + 1];
        r[0] = 1.0;
        for k in 1..=deg {
            r[k] = -(1..=k).map(|i| one_minus[i] * r[k - i]).sum::<f64>();
        }
        let mut next = vec![0.0; deg + 1];
        let mut rpow = vec![0.0; deg + 1];
        rpow[0] = 1.0;
        for j in 0..=deg {
            // b'_{j+1} x^j r^j
            for k in j..=deg {
                next[k] += bp[j + 1] * rpow[k - j];
            }
            rpow = ps_mul(&rpow, &r, deg);
        }
        c = next;
    }
    c
}

/// `gamma_j = sum over partitions of prod (-gamma'_i)^{m_i} / m_i!`,
/// `j = 1..=jmax`: the coefficients of `kappa e^{gamma_0 - t} = 1 + sum gamma_j t^-j`.
pub fn gamma_from_prime(gp: &[f64], jmax: usize) -> Vec<f64> {
    (1..=jmax)
        .map(|k| {
            partitions(k)
                .iter()
                .map(|m| {
                    m.iter()
                        .enumerate()
                        .map(|(i, &mi)| (-gp[i + 1]).powi(mi as i32) / factorial(mi))
                        .product::<f64>()
                })
                .sum()
        })
        .collect()
}

/// All expansion constants up to order `j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub j_max: usize,
    pub gamma0: Constant,
    /// `b[j-1][n]` for `j = 1..=j_max + 1`.
    pub b: Vec<[Constant; 3]>,
    /// `a[j-1]` (direct route) for `j = 1..=j_max`.
    pub a: Vec<CoefficientA>,
    /// `gamma'_0..gamma'_{j_max}`.
    pub gamma_prime: Vec<f64>,
    /// `gamma[j-1]`, `j = 1..=j_max`.
    pub gamma: Vec<f64>,
    /// `a_star[j-1]` by composition, `j <= 2`.
    pub a_star: Vec<f64>,
    /// `2 gamma_0 - gamma_0^2 - b_{2,0}`.
    pub a_star2_closed: f64,
    pub quad_provenance: QuadratureSpec,
}

impl ExpansionCoefficients {
    pub fn b(&self, j: usize, n: u32) -> f64 {
        self.b[j - 1][n as usize].value
    }

    pub fn a(&self, j: usize) -> f64 {
        self.a[j - 1].value
    }

    pub fn gamma(&self, j: usize) -> f64 {
        self.gamma[j - 1]
    }

    pub fn a_star(&self, j: usize) -> f64 {
        self.a_star[j - 1]
    }

    /// `a_1, a_2, ...` as a plain vector.
    pub fn a_values(&self) -> Vec<f64> {
        self.a.iter().map(|c| c.value).collect()
    }

    /// Flat rows for export.
    pub fn rows(&self) -> Vec<ConstantRow> {
        let mut rows = vec![ConstantRow::new("gamma0", 0, None, self.gamma0.value, self.gamma0.abs_error)];
        for (i, bj) in self.b.iter().enumerate() {
            for (n, c) in bj.iter().enumerate() {
                rows.push(ConstantRow::new("b", i + 1, Some(n as u32), c.value, c.abs_error));
            }
        }
        for (i, c) in self.a.iter().enumerate() {
            rows.push(ConstantRow::new("a", i + 1, None, c.value, c.abs_error.max(c.discrepancy)));
        }
        for (i, &v) in self.gamma.iter().enumerate() {
            rows.push(ConstantRow::new("gamma", i + 1, None, v, f64::NAN));
        }
        for (i, &v) in self.a_star.iter().enumerate() {
            rows.push(ConstantRow::new("a_star", i + 1, None, v, f64::NAN));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRow {
    pub name: String,
    pub j: usize,
    pub n: Option<u32>,
    pub value: f64,
    pub abs_error_estimate: Option<f64>,
}

impl ConstantRow {
    fn new(name: &str, j: usize, n: Option<u32>, value: f64, err: f64) -> Self {
        ConstantRow {
            name: name.to_string(),
            j,
            n,
            value,
            abs_error_estimate: err.is_finite().then_some(err),
        }
    }
}

fn compute(j_max: usize, quad: &QuadratureSpec) -> Result<ExpansionCoefficients> {
    let mut b = Vec::with_capacity(j_max + 1);
    for j in 1..=j_max + 1 {
        b.push([
            coefficient_b_with_error(j, 0, quad)?,
            coefficient_b_with_error(j, 1, quad)?,
            coefficient_b_with_error(j, 2, quad)?,
        ]);
    }
    let a = (1..=j_max)
        .map(|j| coefficient_a_checked(j, quad))
        .collect::<Result<Vec<_>>>()?;
    let b11 = b[0][1];
    let gamma0 = Constant {
        value: 0.5 * b11.value,
        abs_error: 0.5 * b11.abs_error,
    };
    let b1: Vec<f64> = b.iter().map(|bj| bj[1].value).collect();
    let bp = b_prime(&b1);
    let gamma_prime = gamma_prime(&bp, j_max);
    let gamma = gamma_from_prime(&gamma_prime, j_max);
    let rho1 = a[0].value;
    let mut a_star = vec![rho1];
    let a_star2_closed = 2.0 * gamma0.value - gamma0.value * gamma0.value - b[1][0].value;
    if j_max >= 2 {
        let rho2 = rho1 * gamma0.value + a[1].value;
        let composed = rho2 + gamma[0] * rho1;
        let discrepancy = (composed - a_star2_closed).abs();
        if discrepancy > CONSISTENCY_TOL {
            return Err(Error::Consistency {
                what: "a*_2 composition vs closed form".into(),
                discrepancy,
            });
        }
        a_star.push(composed);
    }
    Ok(ExpansionCoefficients {
        j_max,
        gamma0,
        b,
        a,
        gamma_prime,
        gamma,
        a_star,
        a_star2_closed,
        quad_provenance: quad.clone(),
    })
}

type Memo = Mutex<HashMap<(usize, String), Arc<ExpansionCoefficients>>>;

fn memo() -> &'static Memo {
    static MEMO: OnceLock<Memo> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Constants up to `j_max <= J_MAX`, computed once per process for each
/// quadrature fingerprint.
pub fn expansion_coefficients(j_max: usize, quad: &QuadratureSpec) -> Result<Arc<ExpansionCoefficients>> {
    if !(1..=J_MAX).contains(&j_max) {
        return Err(Error::domain(format!("J must be in 1..={J_MAX}, got {j_max}")));
    }
    quad.validate(None)?;
    let key = (j_max, quad.fingerprint());
    if let Some(c) = memo().lock().expect("memo poisoned").get(&key) {
        return Ok(Arc::clone(c));
    }
    let c = Arc::new(compute(j_max, quad)?);
    memo()
        .lock()
        .expect("memo poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&c));
    Ok(c)
}

/// `(gamma_1..gamma_J)`.
pub fn kappa_expansion_coeffs(j_max: usize) -> Result<Vec<f64>> {
    let c = expansion_coefficients(j_max, &QuadratureSpec::default())?;
    Ok(c.gamma.clone())
}

/// `(a*_1, a*_2)`.
pub fn a_star_coeffs() -> Result<(f64, f64)> {
    let c = expansion_coefficients(2, &QuadratureSpec::default())?;
    Ok((c.a_star(1), c.a_star(2)))
}
