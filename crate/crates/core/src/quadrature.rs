//! Gauss–Legendre rules with doubling refinement.
//!
//! Nodes are computed once in `f64` by Newton iteration on the Legendre
//! recurrence and cached per order. Gaussian expectations integrate the
//! density-weighted integrand over a truncated window.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::real::Real;

/// `(node, weight)` pairs.
pub type Rule = Arc<Vec<(f64, f64)>>;

fn cache() -> &'static Mutex<HashMap<usize, Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    if let Some(r) = cache().lock().unwrap().get(&n) {
        return r.clone();
    }
    let rule = Arc::new(build_legendre(n));
    cache().lock().unwrap().insert(n, rule.clone());
    rule
}

fn build_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        out[i] = (-z, w);
        out[n - 1 - i] = (z, w);
    }
    out
}

const START_NODES: usize = 16;
const NODE_CAP: usize = 2048;
/// Half-width of the Gaussian window in standard deviations; the excluded mass is below 1e-23.
const GAUSS_WINDOW: f64 = 10.0;

fn refine<T: Real>(
    cap: usize,
    tol: T,
    what: &'static str,
    mut eval: impl FnMut(usize) -> (T, T),
) -> Result<T> {
    let mut n = START_NODES;
    let (mut prev, _) = eval(n);
    while n < cap {
        n *= 2;
        let (cur, scale) = eval(n);
        if !cur.is_finite() {
            return Err(Error::NonFiniteMoment(what));
        }
        if (cur - prev).abs() <= tol * scale.max(T::min_positive_value()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonFiniteMoment(what))
}

/// `∫_lo^hi g(x) dx / (hi - lo)`, i.e. the mean of `g` under Uniform(lo, hi).
pub fn uniform_mean<T: Real>(
    lo: T,
    hi: T,
    tol: T,
    what: &'static str,
    g: impl Fn(T) -> T,
) -> Result<T> {
    let half = (hi - lo) * T::lit(0.5);
    let mid = (hi + lo) * T::lit(0.5);
    refine(NODE_CAP, tol, what, |n| {
        let rule = gauss_legendre(n);
        let mut acc = T::zero();
        let mut abs = T::zero();
        for &(x, w) in rule.iter() {
            let v = T::lit(w) * g(mid + half * T::lit(x));
            acc = acc + v;
            abs = abs + v.abs();
        }
        (acc * T::lit(0.5), abs * T::lit(0.5))
    })
}

/// `E[g(mean + sd Z)]` for standard normal `Z`.
pub fn gaussian_mean<T: Real>(
    mean: T,
    sd: T,
    tol: T,
    what: &'static str,
    g: impl Fn(T) -> T,
) -> Result<T> {
    let half = T::lit(GAUSS_WINDOW);
    let norm = T::one() / (T::PI() * T::lit(2.0)).sqrt();
    refine(NODE_CAP, tol, what, |n| {
        let rule = gauss_legendre(n);
        let mut acc = T::zero();
        let mut abs = T::zero();
        for &(x, w) in rule.iter() {
            let z = half * T::lit(x);
            let v = T::lit(w) * (-(z * z) * T::lit(0.5)).exp() * g(mean + sd * z);
            acc = acc + v;
            abs = abs + v.abs();
        }
        (acc * half * norm, abs * half * norm)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let total: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        // x^14 is degree 2n - 2
        let m14: f64 = rule.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_window_reproduces_moments() {
        for n in [16, 256, 2048] {
            let total: f64 = gauss_legendre(n).iter().map(|&(_, w)| w).sum();
            assert!((total - 2.0).abs() < 1e-12, "n={n}");
        }
        let m0 = gaussian_mean(0.0f64, 1.0, 1e-12, "1", |_| 1.0).unwrap();
        assert!((m0 - 1.0).abs() < 1e-13);
        let m = gaussian_mean(0.0f64, 1.0, 1e-12, "x4", |x| x.powi(4)).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_mean_of_smooth_function() {
        let m = uniform_mean(0.0f64, 1.0, 1e-12, "exp", |x| x.exp()).unwrap();
        assert!((m - (std::f64::consts::E - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn nonconvergent_integrand_reports_error() {
        // Discontinuous integrand never settles to 1e-15.
        let r = gaussian_mean(0.0f64, 1.0, 1e-15, "step", |x| if x > 0.3 { 1.0 } else { 0.0 });
        assert_eq!(r, Err(Error::NonFiniteMoment("step")));
    }
}
