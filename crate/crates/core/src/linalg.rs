//! Dense symmetric eigen-helpers.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::real::Real;

pub const EIG_TOL: f64 = 1e-11;
pub const EIG_MAX_ITER: usize = 50_000;

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix by shifted
/// power iteration. The shift keeps `lambda_max` dominant in magnitude; the
/// loop stops once the Rayleigh quotient moves less than `EIG_TOL` (relative).
pub fn lambda_max<T: Real>(a: &Array2<T>) -> Result<(T, Array1<T>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Err(Error::InvalidSpec("empty matrix".into()));
    }
    let mut gersh_lo = T::infinity();
    let mut diag_hi = T::neg_infinity();
    let mut gersh_hi = T::neg_infinity();
    for i in 0..n {
        let radius: T = (0..n).filter(|&j| j != i).map(|j| a[[i, j]].abs()).sum();
        gersh_lo = gersh_lo.min(a[[i, i]] - radius);
        diag_hi = diag_hi.max(a[[i, i]]);
        gersh_hi = gersh_hi.max(a[[i, i]] + radius);
    }
    let shift = (-(gersh_lo + diag_hi) * T::lit(0.5)).max(T::zero()) + T::one();
    let golden = 0.618_033_988_749_894_9;
    let mut v: Array1<T> = (0..n).map(|i| T::lit(1.0 + ((i + 1) as f64 * golden).fract())).collect();
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let tol = T::tol(EIG_TOL);
    let scale = gersh_lo.abs().max(gersh_hi.abs()).max(T::one());
    for iter in 0..EIG_MAX_ITER {
        let av = a.dot(&v);
        let rq = v.dot(&av);
        let r = &av - &(&v * rq);
        if r.dot(&r).sqrt() <= tol * scale {
            return Ok((rq, v));
        }
        let mut w = av + &v * shift;
        let norm = w.dot(&w).sqrt();
        if norm == T::zero() || !norm.is_finite() {
            return Err(Error::EigFailure(iter));
        }
        w.mapv_inplace(|x| x / norm);
        v = w;
    }
    Err(Error::EigFailure(EIG_MAX_ITER))
}
