//! Mean-field landscape: critical temperature, fixed points, flatness and
//! limiting variances.
//!
//! Public entry points take the magnetization `m`; the Hubbard–Stratonovich
//! coordinate is `x = sqrt(theta1) * m`, so every field expectation is
//! evaluated at the shift `theta1 * m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{moments, FieldDistribution, MomentSet};
use crate::real::{log_cosh, sech2, Real};

/// `|theta1 - theta_c|` below this is the critical regime.
pub const REGIME_TOL: f64 = 1e-9;
/// Landscape derivatives below this (against unit scale) count as zero.
pub const FLATNESS_TOL: f64 = 1e-8;
pub const MAX_TAU: u32 = 4;
const SCAN_POINTS: usize = 2048;
const BISECTION_TOL: f64 = 1e-12;
const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime<T> {
    High,
    /// `x_star` is the magnetization at which flatness was measured.
    Critical { tau: u32, is_minimum: bool, x_star: T },
    /// Largest and smallest fixed points.
    Low { m_pos: T, m_neg: T },
}

impl<T> Regime<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::High => "high",
            Regime::Critical { .. } => "critical",
            Regime::Low { .. } => "low",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeInfo<T> {
    pub theta_c: T,
    pub theta1: T,
    pub regime: Regime<T>,
    pub fixed_points: Vec<T>,
}

impl<T: Real> RegimeInfo<T> {
    pub fn tau(&self) -> u32 {
        match self.regime {
            Regime::Critical { tau, .. } => tau,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceKind<T> {
    HighTempV,
    LowTempVAt { m: T },
    CriticalV { tau: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport<T> {
    pub kind: VarianceKind<T>,
    pub value: T,
    /// Fluctuations of the spin sum grow like `n^scaling_exponent`.
    pub scaling_exponent: T,
}

/// `(4 tau - 3) / (4 tau - 2)`.
pub fn scaling_exponent<T: Real>(tau: u32) -> T {
    let t = T::from_u32(tau).unwrap();
    (T::lit(4.0) * t - T::lit(3.0)) / (T::lit(4.0) * t - T::lit(2.0))
}

pub fn critical_temperature<T: Real>(dist: &FieldDistribution<T>) -> Result<T> {
    let s = dist.expect("E[sech^2 h]", sech2)?;
    Ok(T::one() / s)
}

/// `H(x) = x^2/2 - E[log cosh(sqrt(theta1) x + h)]`.
pub fn landscape_h<T: Real>(dist: &FieldDistribution<T>, theta1: T, x: T) -> Result<T> {
    let e = dist.expect_shifted(theta1.sqrt() * x, "E[log cosh(y + h)]", log_cosh)?;
    Ok(x * x * T::lit(0.5) - e)
}

/// Coefficients (ascending powers of `t = tanh y`) of the `j`-th derivative of
/// `log cosh y`, from `d/dy P(t) = P'(t) (1 - t^2)`.
pub fn log_cosh_derivative_poly(j: usize) -> Vec<f64> {
    assert!(j >= 1, "order 0 is log cosh itself");
    let mut p = vec![0.0, 1.0];
    for _ in 1..j {
        let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        while next.len() > 1 && *next.last().unwrap() == 0.0 {
            next.pop();
        }
        p = next;
    }
    p
}

fn eval_poly<T: Real>(coef: &[f64], t: T) -> T {
    coef.iter().rev().fold(T::zero(), |acc, &c| acc * t + T::lit(c))
}

/// `H^{(order)}` at the H-S coordinate `x`, from closed-form derivatives of log cosh.
pub fn landscape_derivative<T: Real>(
    dist: &FieldDistribution<T>,
    theta1: T,
    x: T,
    order: usize,
) -> Result<T> {
    let y = theta1.sqrt() * x;
    match order {
        0 => landscape_h(dist, theta1, x),
        1 => Ok(x - theta1.sqrt() * dist.expect_shifted(y, "E[tanh(y + h)]", |v| v.tanh())?),
        2 => Ok(T::one() - theta1 * dist.expect_shifted(y, "E[sech^2(y + h)]", sech2)?),
        j => {
            let poly = log_cosh_derivative_poly(j);
            let e = dist.expect_shifted(y, "E[d^j log cosh(y + h)]", |v| eval_poly(&poly, v.tanh()))?;
            Ok(-theta1.powi(j as i32).sqrt() * e)
        }
    }
}

/// All `m` in [-1, 1] with `m = E[tanh(theta1 m + h)]`, sorted.
pub fn fixed_points<T: Real>(dist: &FieldDistribution<T>, theta1: T) -> Result<Vec<T>> {
    if !(theta1 >= T::zero()) || !theta1.is_finite() {
        return Err(Error::InvalidSpec(format!("theta1 = {theta1} must be finite and >= 0")));
    }
    let g = |m: T| -> Result<T> {
        Ok(dist.expect_shifted(theta1 * m, "E[tanh(theta1 m + h)]", |v| v.tanh())? - m)
    };
    let grid: Vec<T> = (0..SCAN_POINTS)
        .map(|i| T::lit(-1.0 + 2.0 * i as f64 / (SCAN_POINTS - 1) as f64))
        .collect();
    let vals = grid.iter().map(|&m| g(m)).collect::<Result<Vec<T>>>()?;
    let tol = T::tol(BISECTION_TOL);
    let mut roots = Vec::new();
    for i in 0..SCAN_POINTS {
        if vals[i] == T::zero() {
            roots.push(grid[i]);
            continue;
        }
        if i + 1 < SCAN_POINTS && vals[i + 1] != T::zero() && (vals[i] < T::zero()) != (vals[i + 1] < T::zero()) {
            roots.push(bisect(&g, grid[i], grid[i + 1], vals[i], tol)?);
        }
    }
    let symmetric = dist.is_symmetric();
    let mut merged: Vec<T> = Vec::new();
    for r in roots {
        let r = if symmetric && r.abs() < T::tol(MERGE_TOL) { T::zero() } else { r };
        match merged.last() {
            Some(&last) if (r - last).abs() <= T::tol(MERGE_TOL) => {}
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

fn bisect<T: Real>(g: &impl Fn(T) -> Result<T>, mut lo: T, mut hi: T, mut glo: T, tol: T) -> Result<T> {
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let gm = g(mid)?;
        if gm == T::zero() {
            return Ok(mid);
        }
        if (gm < T::zero()) == (glo < T::zero()) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(format!("bisection on [{lo}, {hi}]")))
}

/// Potential in magnetization units: `theta1 m^2 / 2 - E[log cosh(theta1 m + h)]`.
pub fn potential<T: Real>(dist: &FieldDistribution<T>, theta1: T, m: T) -> Result<T> {
    landscape_h(dist, theta1, theta1.sqrt() * m)
}

/// Fixed point with the lowest potential; ties resolve to the larger magnetization.
pub fn global_minimizer<T: Real>(dist: &FieldDistribution<T>, theta1: T) -> Result<T> {
    let fps = fixed_points(dist, theta1)?;
    let mut best: Option<(T, T)> = None;
    for &m in &fps {
        let v = potential(dist, theta1, m)?;
        match best {
            Some((bv, _)) if v > bv + T::tol(1e-14) => {}
            Some((bv, bm)) if (v - bv).abs() <= T::tol(1e-14) && m < bm => {}
            _ => best = Some((v, m)),
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::NoConvergence("no fixed point found".into()))
}

/// Flatness `(tau, is_minimum)` of the landscape at magnetization `m_star`.
pub fn flatness<T: Real>(dist: &FieldDistribution<T>, theta1: T, m_star: T) -> Result<(u32, bool)> {
    let x = theta1.sqrt() * m_star;
    let tol = T::tol(FLATNESS_TOL);
    for tau in 1..=MAX_TAU {
        let d = landscape_derivative(dist, theta1, x, 2 * tau as usize)?;
        if d.abs() > tol {
            return Ok((tau, d > T::zero()));
        }
    }
    Err(Error::FlatnessUndetectable(m_star.as_f64()))
}

pub fn classify_regime<T: Real>(dist: &FieldDistribution<T>, theta1: T) -> Result<RegimeInfo<T>> {
    dist.validate()?;
    let theta_c = critical_temperature(dist)?;
    let fixed_points = fixed_points(dist, theta1)?;
    let regime = if (theta1 - theta_c).abs() <= T::tol(REGIME_TOL) {
        let x_star = if dist.is_symmetric() {
            T::zero()
        } else {
            global_minimizer(dist, theta1)?
        };
        let (tau, is_minimum) = flatness(dist, theta1, x_star)?;
        Regime::Critical { tau, is_minimum, x_star }
    } else if theta1 < theta_c {
        Regime::High
    } else {
        let m_pos = *fixed_points.last().unwrap();
        let m_neg = *fixed_points.first().unwrap();
        Regime::Low { m_pos, m_neg }
    };
    Ok(RegimeInfo { theta_c, theta1, regime, fixed_points })
}

fn mismatch(expected: &str, found: &str) -> Error {
    Error::RegimeMismatch { expected: expected.into(), found: found.into() }
}

/// `(1 - theta1 s^2) / (1 - theta1 s)^2` with `s = E[sech^2 h]`.
pub fn high_temp_variance<T: Real>(dist: &FieldDistribution<T>, theta1: T) -> Result<T> {
    let theta_c = critical_temperature(dist)?;
    if theta1 >= theta_c - T::tol(REGIME_TOL) {
        return Err(mismatch("high", if (theta1 - theta_c).abs() <= T::tol(REGIME_TOL) { "critical" } else { "low" }));
    }
    let s = T::one() / theta_c;
    let d = T::one() - theta1 * s;
    Ok((T::one() - theta1 * s * s) / (d * d))
}

/// Limiting variance of `n^{-1/2} sum (sigma_i - m)` around a nondegenerate
/// optimum `m`: `(1 - theta1 s^2 - t^2) / (1 - theta1 s)^2`, with `s`, `t` the
/// sech^2 and tanh means at shift `theta1 m`.
pub fn limit_variance_at<T: Real>(dist: &FieldDistribution<T>, theta1: T, m: T) -> Result<T> {
    let y = theta1 * m;
    let s = dist.expect_shifted(y, "E[sech^2(y + h)]", sech2)?;
    let t = dist.expect_shifted(y, "E[tanh(y + h)]", |v| v.tanh())?;
    let d = T::one() - theta1 * s;
    let v = (T::one() - theta1 * s * s - t * t) / (d * d);
    if v < T::zero() {
        return Err(Error::NegativeVariance(v.as_f64()));
    }
    Ok(v)
}

/// Low-temperature (or non-centered single-optimum) variance at the fixed point `m_star`.
pub fn low_temp_variance<T: Real>(dist: &FieldDistribution<T>, theta1: T, m_star: T) -> Result<T> {
    let info = classify_regime(dist, theta1)?;
    let centered = dist.is_symmetric();
    match info.regime {
        Regime::Low { .. } => {}
        _ if !centered => {}
        ref r => return Err(mismatch("low", r.name())),
    }
    if centered && m_star == T::zero() {
        return Err(Error::InvalidSpec("m_star must be a nonzero fixed point".into()));
    }
    limit_variance_at(dist, theta1, m_star)
}

/// Stirling numbers of the second kind by `S(n,k) = k S(n-1,k) + S(n-1,k-1)`.
pub fn stirling2(n: usize, k: usize) -> Result<u128> {
    const CAP: usize = 64;
    if n > CAP || k > CAP {
        return Err(Error::Overflow(format!("stirling2({n}, {k}) beyond cap {CAP}")));
    }
    if k > n {
        return Ok(0);
    }
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        let lo = (k + i).saturating_sub(n).max(1);
        for j in (lo..=k.min(i)).rev() {
            row[j] = (j as u128)
                .checked_mul(row[j])
                .and_then(|v| v.checked_add(row[j - 1]))
                .ok_or_else(|| Error::Overflow(format!("stirling2({n}, {k})")))?;
        }
        row[0] = 0;
    }
    Ok(row[k])
}

fn factorial<T: Real>(n: u32) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * T::from_u32(i).unwrap())
}

/// Pieces shared by the critical-variance forms, all at shift `theta1 m`.
struct CriticalPieces<T> {
    tanh_var: T,
    sech2_mean: T,
    stirling_bracket: T,
    derivative: T,
}

fn critical_pieces<T: Real>(dist: &FieldDistribution<T>, theta1: T, tau: u32, m: T) -> Result<CriticalPieces<T>> {
    if !(1..=MAX_TAU).contains(&tau) {
        return Err(Error::InvalidSpec(format!("tau = {tau} outside 1..={MAX_TAU}")));
    }
    let y = theta1 * m;
    let t1 = dist.expect_shifted(y, "E[tanh(y + h)]", |v| v.tanh())?;
    let t2 = dist.expect_shifted(y, "E[tanh^2(y + h)]", |v| v.tanh().powi(2))?;
    let tanh_var = (t2 - t1 * t1).max(T::zero());
    if tanh_var <= T::tol(1e-14) {
        return Err(Error::DegenerateField(format!(
            "Var(tanh(y + h)) = {tanh_var} at m = {m}; the critical limit law degenerates"
        )));
    }
    let sech2_mean = dist.expect_shifted(y, "E[sech^2(y + h)]", sech2)?;
    let order = (2 * tau - 1) as usize;
    let coeffs = (0..=order)
        .map(|k| -> Result<T> {
            let s = stirling2(order, k)?;
            Ok(factorial::<T>(k as u32) * T::from_u128(s).unwrap() / T::lit(2f64.powi(k as i32)))
        })
        .collect::<Result<Vec<T>>>()?;
    let stirling_bracket = dist.expect_shifted(y, "E[Stirling bracket]", |v| {
        let t = v.tanh();
        let mut acc = T::zero();
        let mut pow = T::one();
        for c in &coeffs {
            acc = acc + *c * pow;
            pow = pow * (t - T::one());
        }
        (T::one() + t) * acc
    })?;
    let derivative = landscape_derivative(dist, theta1, theta1.sqrt() * m, 2 * tau as usize)?;
    if stirling_bracket == T::zero() || derivative == T::zero() {
        return Err(Error::DegenerateField(format!("H^(2 tau) vanishes at m = {m}")));
    }
    Ok(CriticalPieces { tanh_var, sech2_mean, stirling_bracket, derivative })
}

/// Critical limiting variance in the Stirling-sum form:
/// `((2 tau)!)^2 Var(tanh) (E sech^2)^(4 tau - 2) / E[(1 + t) sum_k k!/2^k S(2tau-1,k) (t - 1)^k]^2`.
pub fn critical_variance<T: Real>(dist: &FieldDistribution<T>, theta1: T, tau: u32, m_star: T) -> Result<T> {
    let p = critical_pieces(dist, theta1, tau, m_star)?;
    let f = factorial::<T>(2 * tau);
    Ok(f * f * p.tanh_var * p.sech2_mean.powi(4 * tau as i32 - 2) / (p.stirling_bracket * p.stirling_bracket))
}

/// Same quantity written with the landscape derivative:
/// `((2 tau)!)^2 theta1^(2 tau) Var(tanh) (E sech^2)^(4 tau - 2) / (H^(2 tau))^2`.
pub fn critical_variance_derivative_form<T: Real>(
    dist: &FieldDistribution<T>,
    theta1: T,
    tau: u32,
    m_star: T,
) -> Result<T> {
    let p = critical_pieces(dist, theta1, tau, m_star)?;
    let f = factorial::<T>(2 * tau);
    Ok(f * f * theta1.powi(2 * tau as i32) * p.tanh_var * p.sech2_mean.powi(4 * tau as i32 - 2)
        / (p.derivative * p.derivative))
}

/// Variance constant in the critical test thresholds: the Stirling form with an
/// extra `2^(2 tau - 1)` in the denominator.
pub fn critical_variance_threshold_form<T: Real>(
    dist: &FieldDistribution<T>,
    theta1: T,
    tau: u32,
    m_star: T,
) -> Result<T> {
    let v = critical_variance(dist, theta1, tau, m_star)?;
    Ok(v / T::lit(2f64.powi(2 * tau as i32 - 1)))
}

/// Variance of the Gaussian limit of `(n^{-(4tau-3)/(4tau-2)} sum (sigma_i - m*))^(2 tau - 1)`
/// obtained by linearizing the finite-n mean-field equation around a flat optimum:
/// `((2 tau - 1)!)^2 theta1^(2 tau) Var(tanh) (E sech^2)^(4 tau - 2) / (H^(2 tau))^2`.
pub fn critical_fluctuation_variance<T: Real>(
    dist: &FieldDistribution<T>,
    theta1: T,
    tau: u32,
    m_star: T,
) -> Result<T> {
    let p = critical_pieces(dist, theta1, tau, m_star)?;
    let f = factorial::<T>(2 * tau - 1);
    Ok(f * f * theta1.powi(2 * tau as i32) * p.tanh_var * p.sech2_mean.powi(4 * tau as i32 - 2)
        / (p.derivative * p.derivative))
}

/// `E[|X|^p]` for `X^(2 tau - 1) ~ N(0, v)`:
/// `v^(p / (2(2tau-1))) 2^(p/(2(2tau-1))) Gamma((p/(2tau-1) + 1)/2) / sqrt(pi)`.
pub fn critical_abs_moment<T: Real>(v: T, tau: u32, p: T) -> T {
    let q = p / T::from_u32(2 * tau - 1).unwrap();
    let g = statrs::function::gamma::gamma(((q + T::one()) * T::lit(0.5)).as_f64());
    (T::lit(2.0) * v).powf(q * T::lit(0.5)) * T::lit(g) / T::PI().sqrt()
}

/// Bundle used by the `analyze` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Analysis<T> {
    pub field: String,
    pub symmetric: bool,
    pub moments: MomentSet<T>,
    pub regime: RegimeInfo<T>,
    pub variances: Vec<VarianceReport<T>>,
}

pub fn analyze<T: Real>(dist: &FieldDistribution<T>, theta1: T) -> Result<Analysis<T>> {
    let regime = classify_regime(dist, theta1)?;
    let moments = moments(dist)?;
    let mut variances = Vec::new();
    match &regime.regime {
        Regime::High => {
            if dist.is_symmetric() {
                variances.push(VarianceReport {
                    kind: VarianceKind::HighTempV,
                    value: high_temp_variance(dist, theta1)?,
                    scaling_exponent: T::lit(0.5),
                });
            } else {
                let m = global_minimizer(dist, theta1)?;
                variances.push(VarianceReport {
                    kind: VarianceKind::LowTempVAt { m },
                    value: limit_variance_at(dist, theta1, m)?,
                    scaling_exponent: T::lit(0.5),
                });
            }
        }
        Regime::Low { m_pos, m_neg } => {
            for m in [*m_pos, *m_neg] {
                if m != T::zero() {
                    variances.push(VarianceReport {
                        kind: VarianceKind::LowTempVAt { m },
                        value: limit_variance_at(dist, theta1, m)?,
                        scaling_exponent: T::lit(0.5),
                    });
                }
            }
        }
        Regime::Critical { tau, x_star, .. } => {
            if *tau >= 2 {
                match critical_variance(dist, theta1, *tau, *x_star) {
                    Ok(value) => variances.push(VarianceReport {
                        kind: VarianceKind::CriticalV { tau: *tau },
                        value,
                        scaling_exponent: scaling_exponent(*tau),
                    }),
                    Err(Error::DegenerateField(msg)) => log::warn!("no critical variance: {msg}"),
                    Err(e) => return Err(e),
                }
            } else {
                variances.push(VarianceReport {
                    kind: VarianceKind::LowTempVAt { m: *x_star },
                    value: limit_variance_at(dist, theta1, *x_star)?,
                    scaling_exponent: T::lit(0.5),
                });
            }
        }
    }
    Ok(Analysis { field: dist.to_string(), symmetric: dist.is_symmetric(), moments, regime, variances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(a: f64) -> FieldDistribution<f64> {
        FieldDistribution::PointMass { a }
    }
    fn tp() -> FieldDistribution<f64> {
        FieldDistribution::TwoPoint { a: 0.5, b: -0.5, p: 0.5 }
    }

    /// Independent bisection oracle for scalar fixed points.
    fn oracle_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(lo) > 0.0) { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn critical_temperature_examples() {
        assert_eq!(critical_temperature(&pm(0.0)).unwrap(), 1.0);
        // cosh(0.5)^2 from mpmath
        assert!((critical_temperature(&tp()).unwrap() - 1.271_540_317_407_621_9).abs() < 1e-14);
        let g = FieldDistribution::Gaussian { mean: 0.0f64, sd: 1.0 };
        assert!((critical_temperature(&g).unwrap() - 1.650_967_316_867_932_7).abs() < 1e-9);
    }

    #[test]
    fn landscape_values() {
        assert_eq!(landscape_h(&pm(0.0), 1.0, 0.0).unwrap(), 0.0);
        // 0.005 - log cosh(0.1) = 8.311178353469732e-6 (mpmath)
        let h = landscape_h(&pm(0.0), 1.0, 0.1).unwrap();
        assert!((h - 8.311_178_353_469_732e-6).abs() < 1e-16);
        for &x in &[0.3, 1.1, 2.5] {
            let a = landscape_h(&tp(), 0.7, x).unwrap();
            let b = landscape_h(&tp(), 0.7, -x).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_polynomials_match_known_forms() {
        // d2 = 1 - t^2, d3 = -2t + 2t^3, d4 = -2 + 8t^2 - 6t^4
        assert_eq!(log_cosh_derivative_poly(2), vec![1.0, 0.0, -1.0]);
        assert_eq!(log_cosh_derivative_poly(3), vec![0.0, -2.0, 0.0, 2.0]);
        assert_eq!(log_cosh_derivative_poly(4), vec![-2.0, 0.0, 8.0, 0.0, -6.0]);
        // Even derivatives of log cosh at 0: 1, -2, 16, -272 (Taylor coefficients of log cosh).
        assert_eq!(log_cosh_derivative_poly(6)[0], 16.0);
        assert_eq!(log_cosh_derivative_poly(8)[0], -272.0);
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let d = tp();
        let x = 0.4;
        for order in 1..=4usize {
            let h = 1e-3;
            let f = |x: f64| landscape_derivative(&d, 0.9, x, order - 1).unwrap();
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let an = landscape_derivative(&d, 0.9, x, order).unwrap();
            assert!((fd - an).abs() < 1e-5, "order {order}: {fd} vs {an}");
        }
    }

    #[test]
    fn fixed_point_examples() {
        assert_eq!(fixed_points(&tp(), 1.0).unwrap(), vec![0.0]);
        let fps = fixed_points(&pm(0.0), 1.5).unwrap();
        assert_eq!(fps.len(), 3);
        let m = oracle_root(|m| m - (1.5 * m).tanh(), 0.1, 1.0);
        assert!((m - 0.858_559_636_640_110_4).abs() < 1e-12);
        assert!((fps[2] - m).abs() < 1e-11 && (fps[0] + m).abs() < 1e-11 && fps[1] == 0.0);

        let fps = fixed_points(&pm(0.2), 0.5).unwrap();
        let r = oracle_root(|m| m - (0.5 * m + 0.2).tanh(), -1.0, 1.0);
        assert_eq!(fps.len(), 1);
        assert!((fps[0] - r).abs() < 1e-11);
        assert!((r - 0.364_782_198_287_614_55).abs() < 1e-12);
    }

    #[test]
    fn flatness_examples() {
        assert_eq!(flatness(&tp(), 0.8, 0.0).unwrap(), (1, true));
        assert_eq!(flatness(&pm(0.0), 1.0, 0.0).unwrap(), (2, true));
        // H''''(0) = 2 for the zero-field model at theta1 = 1 (log cosh x = x^2/2 - x^4/12 + ...)
        let h4 = landscape_derivative(&pm(0.0), 1.0, 0.0, 4).unwrap();
        assert!((h4 - 2.0).abs() < 1e-14);
        let tc = critical_temperature(&tp()).unwrap();
        assert_eq!(flatness(&tp(), tc, 0.0).unwrap(), (2, true));
        // theta_c^2 (2 E sech^4 - 4 E sech^2 tanh^2) = 0.913838730369512 (mpmath)
        let h4 = landscape_derivative(&tp(), tc, 0.0, 4).unwrap();
        assert!((h4 - 0.913_838_730_369_512_4).abs() < 1e-12);
    }

    #[test]
    fn classify_examples() {
        let info = classify_regime(&pm(0.0), 0.5).unwrap();
        assert_eq!(info.regime, Regime::High);
        assert_eq!(info.fixed_points, vec![0.0]);
        let info = classify_regime(&pm(0.0), 1.5).unwrap();
        match info.regime {
            Regime::Low { m_pos, m_neg } => {
                assert!((m_pos - 0.858_559_636_640_110_4).abs() < 1e-10);
                assert_eq!(m_neg, -m_pos);
            }
            r => panic!("{r:?}"),
        }
        let tc = 0.5f64.cosh().powi(2);
        let info = classify_regime(&tp(), tc).unwrap();
        assert_eq!(info.regime, Regime::Critical { tau: 2, is_minimum: true, x_star: 0.0 });
    }

    #[test]
    fn high_temperature_variance_examples() {
        assert_eq!(high_temp_variance(&tp(), 0.0).unwrap(), 1.0);
        assert!((high_temp_variance(&pm(0.0), 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((high_temp_variance(&tp(), 0.6).unwrap() - 2.254_746_215_059_886).abs() < 1e-13);
        assert!(matches!(high_temp_variance(&pm(0.0), 1.0), Err(Error::RegimeMismatch { .. })));
        assert!(matches!(high_temp_variance(&pm(0.0), 2.0), Err(Error::RegimeMismatch { .. })));
    }

    #[test]
    fn low_temperature_variance_examples() {
        let m = 0.858_559_636_640_110_4;
        // plug-in with mpmath: 0.434011892939915...
        let v = low_temp_variance(&pm(0.0), 1.5, m).unwrap();
        assert!((v - 0.434_011_892_939_915_2).abs() < 1e-12);
        assert!((low_temp_variance(&pm(0.0), 1.5, -m).unwrap() - v).abs() < 1e-15);
        let fps = fixed_points(&pm(0.3), 1e-6).unwrap();
        let v = low_temp_variance(&pm(0.3), 1e-6, fps[0]).unwrap();
        assert!((v - (1.0 - 0.3f64.tanh().powi(2))).abs() < 2e-6);
        assert!(matches!(low_temp_variance(&pm(0.0), 0.5, 0.1), Err(Error::RegimeMismatch { .. })));
    }

    #[test]
    fn stirling_examples() {
        assert_eq!(stirling2(0, 0).unwrap(), 1);
        assert_eq!(stirling2(4, 0).unwrap(), 0);
        assert_eq!(stirling2(3, 1).unwrap(), 1);
        assert_eq!(stirling2(3, 2).unwrap(), 3);
        assert_eq!(stirling2(3, 3).unwrap(), 1);
        assert_eq!(stirling2(5, 3).unwrap(), 25);
        assert_eq!(stirling2(2, 5).unwrap(), 0);
        assert_eq!(stirling2(64, 64).unwrap(), 1);
        assert!(matches!(stirling2(64, 32), Err(Error::Overflow(_))));
        assert!(matches!(stirling2(65, 2), Err(Error::Overflow(_))));
    }

    #[test]
    fn critical_variance_forms() {
        let tc = critical_temperature(&tp()).unwrap();
        // Stirling form evaluated in mpmath: 5830.51950444028
        let v = critical_variance(&tp(), tc, 2, 0.0).unwrap();
        assert!((v / 5_830.519_504_440_28 - 1.0).abs() < 1e-10);
        let d = critical_variance_derivative_form(&tp(), tc, 2, 0.0).unwrap();
        assert!((d / 91.101_867_256_879_38 - 1.0).abs() < 1e-10);
        let f = critical_fluctuation_variance(&tp(), tc, 2, 0.0).unwrap();
        assert!((f / 5.693_866_703_554_961 - 1.0).abs() < 1e-10);
        assert!(matches!(critical_variance(&pm(0.0), 1.0, 2, 0.0), Err(Error::DegenerateField(_))));
        assert_eq!(scaling_exponent::<f64>(2), 5.0 / 6.0);
        assert_eq!(scaling_exponent::<f64>(1), 0.5);
    }

    #[test]
    fn critical_moment_formula() {
        // E|X|^2 with X^3 ~ N(0, v): pi^{-1/2} (2v)^{1/3} Gamma(5/6); mpmath at v = 5.6938667: 1.432790977727197
        let e2 = critical_abs_moment(5.693_866_703_554_961f64, 2, 2.0);
        assert!((e2 - 1.432_790_977_727_197).abs() < 1e-9);
        // tau = 1 reduces to Gaussian moments: E Z^2 = v
        assert!((critical_abs_moment(3.0f64, 1, 2.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn analyze_reports_variances() {
        let a = analyze(&pm(0.0), 0.5).unwrap();
        assert_eq!(a.variances.len(), 1);
        assert_eq!(a.variances[0].value, 2.0);
        let a = analyze(&pm(0.0), 1.5).unwrap();
        assert_eq!(a.variances.len(), 2);
    }
}
