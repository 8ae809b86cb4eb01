//! Clique recovery: scan argmax, set screening, row-sum ranking, and the
//! soft-threshold SDP surrogates (dual bound for testing, principal
//! eigenvector for recovery).

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{classify_regime, critical_abs_moment, critical_fluctuation_variance, high_temp_variance, Regime, RegimeInfo};
use crate::linalg;
use crate::real::Real;
use crate::sampler::SpinSample;
use crate::scan::{self, Objective, ScanPolicy};
use crate::statistics::{critical_gamma, empirical_correlation, gram_counts, Branch, TestId, TestReport, TestSetting, ThresholdInterval};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMethod {
    Scan,
    Screen,
    RowSum,
    Spectral,
}

impl RecoveryMethod {
    pub const ALL: [RecoveryMethod; 4] = [RecoveryMethod::Scan, RecoveryMethod::Screen, RecoveryMethod::RowSum, RecoveryMethod::Spectral];

    pub fn name(self) -> &'static str {
        match self {
            RecoveryMethod::Scan => "scan",
            RecoveryMethod::Screen => "screen",
            RecoveryMethod::RowSum => "rowsum",
            RecoveryMethod::Spectral => "spectral",
        }
    }
}

impl std::fmt::Display for RecoveryMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        RecoveryMethod::ALL
            .into_iter()
            .find(|r| r.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown recovery method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub method: RecoveryMethod,
    pub estimate: Vec<usize>,
    pub truth: Option<Vec<usize>>,
    pub overlap: Option<usize>,
    pub sym_diff: Option<usize>,
    pub exact: bool,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// `false` when a scan fell back to heuristic candidates.
    pub scan_exact: bool,
}

impl RecoveryReport {
    fn new(method: RecoveryMethod, mut estimate: Vec<usize>, n: usize, m: usize) -> Self {
        estimate.sort_unstable();
        let k = estimate.len();
        RecoveryReport { method, estimate, truth: None, overlap: None, sym_diff: None, exact: false, n, k, m, scan_exact: true }
    }

    /// Attaches the planted set and fills the overlap metrics.
    pub fn with_truth(mut self, truth: &[usize]) -> Self {
        let mut truth = truth.to_vec();
        truth.sort_unstable();
        let overlap = self.estimate.iter().filter(|i| truth.binary_search(i).is_ok()).count();
        let sym_diff = self.estimate.len() + truth.len() - 2 * overlap;
        self.overlap = Some(overlap);
        self.sym_diff = Some(sym_diff);
        self.exact = sym_diff == 0;
        self.truth = Some(truth);
        self
    }

    pub const CSV_HEADER: &'static str = "method,n,k,m,overlap,sym_diff,exact";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.n, self.k, self.m, opt(self.overlap), opt(self.sym_diff), self.exact
        )
    }
}

/// k-subset maximizing the regime's local statistic: the within-subset
/// correlation sum, or at low temperature the mean absolute subset magnetization.
pub fn scan_recover<T: Real>(sample: &SpinSample, k: usize, regime: &RegimeInfo<T>, policy: ScanPolicy) -> Result<RecoveryReport> {
    let r = match regime.regime {
        Regime::Low { .. } => scan::maximize(Objective::AbsSum(sample.spins.view()), k, policy)?,
        _ => scan::maximize(Objective::Quadratic(&gram_counts(sample)), k, policy)?,
    };
    let mut report = RecoveryReport::new(RecoveryMethod::Scan, r.subset, sample.n(), sample.m);
    report.scan_exact = r.exact;
    Ok(report)
}

/// Scan recovery from a correlation matrix (e.g. the population one).
pub fn scan_recover_matrix<T: Real>(corr: &Array2<T>, k: usize, policy: ScanPolicy) -> Result<RecoveryReport> {
    let a = corr.mapv(|v| v.as_f64());
    let r = scan::maximize(Objective::Quadratic(&a), k, policy)?;
    let mut report = RecoveryReport::new(RecoveryMethod::Scan, r.subset, corr.nrows(), 0);
    report.scan_exact = r.exact;
    Ok(report)
}

/// Exponent `eta` of the `k^-eta` row-sum scaling.
fn eta<T: Real>(regime: &RegimeInfo<T>) -> f64 {
    match regime.regime {
        Regime::Critical { tau, .. } => (2.0 * tau as f64 - 2.0) / (2.0 * tau as f64 - 1.0),
        Regime::Low { .. } => 1.0,
        Regime::High => 0.0,
    }
}

/// Per-spin screening scores against `s_prime`.
pub fn screen_scores<T: Real>(sample: &SpinSample, s_prime: &[usize], regime: &RegimeInfo<T>) -> Result<Vec<f64>> {
    let n = sample.n();
    check(n, s_prime)?;
    let g = gram_counts(sample);
    let m = sample.m as f64;
    let scale = (s_prime.len() as f64).powf(-eta(regime));
    let low = matches!(regime.regime, Regime::Low { .. });
    Ok((0..n)
        .map(|i| {
            let sum: f64 = s_prime.iter().filter(|&&j| j != i).map(|&j| g[[i, j]]).sum();
            scale * if low { sum.abs() } else { sum } / m
        })
        .collect())
}

/// Top-k spins by correlation with `s_prime \ {i}`; ties go to the lower index.
pub fn screen<T: Real>(sample: &SpinSample, s_prime: &[usize], k: usize, regime: &RegimeInfo<T>) -> Result<Vec<usize>> {
    if s_prime.len() != k {
        return Err(Error::BadSubset(format!("|S'| = {} but k = {k}", s_prime.len())));
    }
    Ok(scan::top_k(&screen_scores(sample, s_prime, regime)?, k))
}

fn check(n: usize, s: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in s {
        if i >= n || seen[i] {
            return Err(Error::BadSubset(format!("index {i} out of range or repeated (n = {n})")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Top-k spins by off-diagonal row sums of the correlation matrix.
pub fn rowsum_recover_matrix<T: Real>(corr: &Array2<T>, k: usize, regime: &RegimeInfo<T>) -> Result<RecoveryReport> {
    let n = corr.nrows();
    if k == 0 || k > n {
        return Err(Error::BadSubset(format!("k = {k} with n = {n}")));
    }
    let scale = (k as f64).powf(-eta(regime));
    let scores: Vec<f64> = (0..n)
        .map(|i| scale * (0..n).filter(|&j| j != i).map(|j| corr[[i, j]].as_f64()).sum::<f64>())
        .collect();
    Ok(RecoveryReport::new(RecoveryMethod::RowSum, scan::top_k(&scores, k), n, 0))
}

pub fn rowsum_recover<T: Real>(sample: &SpinSample, k: usize, regime: &RegimeInfo<T>) -> Result<RecoveryReport> {
    let g = gram_counts(sample);
    let mut r = rowsum_recover_matrix(&g, k, &regime_f64(regime))?;
    r.m = sample.m;
    Ok(r)
}

fn regime_f64<T: Real>(r: &RegimeInfo<T>) -> RegimeInfo<f64> {
    let regime = match r.regime {
        Regime::High => Regime::High,
        Regime::Low { m_pos, m_neg } => Regime::Low { m_pos: m_pos.as_f64(), m_neg: m_neg.as_f64() },
        Regime::Critical { tau, is_minimum, x_star } => Regime::Critical { tau, is_minimum, x_star: x_star.as_f64() },
    };
    RegimeInfo {
        theta_c: r.theta_c.as_f64(),
        theta1: r.theta1.as_f64(),
        regime,
        fixed_points: r.fixed_points.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Soft-thresholding dual variable: `Y_ij = -sign(S_ij) min(|S_ij|, z)` off the diagonal.
pub fn soft_threshold_dual<T: Real>(corr: &Array2<T>, z: T) -> Array2<T> {
    let n = corr.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            T::zero()
        } else {
            let s = corr[[i, j]];
            -s.signum() * s.abs().min(z)
        }
    })
}

/// `lambda_max(S + Y) + k max|Y_ij|`, an upper bound on the k-sparse largest eigenvalue.
pub fn sdp_dual_bound<T: Real>(corr: &Array2<T>, k: usize, z: T) -> Result<T> {
    if corr.nrows() != corr.ncols() {
        return Err(Error::InvalidSpec("correlation matrix must be square".into()));
    }
    if !(z >= T::zero()) {
        return Err(Error::InvalidSpec(format!("threshold level z = {z} must be >= 0")));
    }
    let y = soft_threshold_dual(corr, z);
    let ymax = y.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let (lambda, _) = linalg::lambda_max(&(corr + &y))?;
    Ok(lambda + T::from_usize_lossy(k) * ymax)
}

/// Regime scaling applied to both sides of the SDP comparison.
fn sdp_scale<T: Real>(regime: &RegimeInfo<T>, k: usize) -> T {
    let k = T::from_usize_lossy(k);
    match regime.regime {
        Regime::High => T::one(),
        Regime::Low { .. } => T::one() / k,
        Regime::Critical { tau, .. } => k.powf(-critical_gamma::<T>(tau)),
    }
}

/// Rejects when the dual bound at `z = c1 sqrt(log n / m)` reaches `1 + c1 k sqrt(log n / m)`.
pub fn sdp_test<T: Real>(setting: &TestSetting<T>, sample: &SpinSample, c1: T) -> Result<TestReport<T>> {
    let (n, k, m) = (sample.n(), setting.k, sample.m);
    if m < 2 {
        return Err(Error::InvalidSpec("the SDP test needs m >= 2".into()));
    }
    if n != setting.n {
        return Err(Error::InvalidSpec(format!("sample has {n} spins, setting has n = {}", setting.n)));
    }
    let regime = classify_regime(&setting.field, setting.theta1)?;
    let rate = (T::from_usize_lossy(n).ln() / T::from_usize_lossy(m)).sqrt();
    let z = c1 * rate;
    if z >= T::one() {
        log::warn!("insufficient samples: z = {z} >= 1 zeroes every correlation");
    }
    let corr: Array2<T> = empirical_correlation(sample);
    let bound = sdp_dual_bound(&corr, k, z)?;
    let f = T::one() + c1 * T::from_usize_lossy(k) * rate;
    let scale = sdp_scale(&regime, k);
    let mut details = BTreeMap::new();
    details.insert("dual_bound".to_string(), bound);
    details.insert("z".to_string(), z);
    let statistic = scale * bound;
    let threshold = scale * f;
    Ok(TestReport {
        test_id: TestId::Sdp,
        statistic,
        threshold,
        interval: Some(ThresholdInterval { lo: threshold, hi: threshold }),
        threshold_overridden: false,
        reject: bound >= f,
        regime,
        branch: Branch::Global,
        n,
        k,
        m,
        theta1: setting.theta1,
        argmax: None,
        scan_exact: true,
        details,
    })
}

/// Half the population within-clique correlation for the setting's regime.
pub fn default_rho<T: Real>(setting: &TestSetting<T>, regime: &RegimeInfo<T>) -> Result<T> {
    let k = T::from_usize_lossy(setting.k);
    let half = T::lit(0.5);
    match regime.regime {
        Regime::High => {
            let v = high_temp_variance(&setting.field, setting.theta1)?;
            Ok(if setting.k > 1 { half * (v - T::one()) / (k - T::one()) } else { T::zero() })
        }
        Regime::Low { m_pos, .. } => Ok(half * m_pos * m_pos),
        Regime::Critical { tau, x_star, .. } => {
            let v = critical_fluctuation_variance(&setting.field, setting.theta1, tau, x_star)?;
            let e2 = critical_abs_moment(v, tau, T::lit(2.0));
            Ok(half * e2 * k.powf(-T::one() / T::from_u32(2 * tau - 1).unwrap()))
        }
    }
}

/// Soft-threshold the off-diagonals at `rho`, then take the top-k entries of the principal eigenvector.
pub fn spectral_recover_matrix<T: Real>(corr: &Array2<T>, k: usize, rho: T) -> Result<RecoveryReport> {
    let n = corr.nrows();
    if k == 0 || k > n {
        return Err(Error::BadSubset(format!("k = {k} with n = {n}")));
    }
    let z = Array2::from_shape_fn((n, n), |(i, j)| {
        let s = corr[[i, j]];
        if i == j {
            s
        } else {
            s.signum() * (s.abs() - rho).max(T::zero())
        }
    });
    let (_, v) = linalg::lambda_max(&z)?;
    let scores: Vec<f64> = v.iter().map(|x| x.abs().as_f64()).collect();
    Ok(RecoveryReport::new(RecoveryMethod::Spectral, scan::top_k(&scores, k), n, 0))
}

pub fn spectral_recover<T: Real>(sample: &SpinSample, k: usize, rho: T) -> Result<RecoveryReport> {
    let corr: Array2<T> = empirical_correlation(sample);
    let mut r = spectral_recover_matrix(&corr, k, rho)?;
    r.m = sample.m;
    Ok(r)
}

/// Dispatches `method`; `screen` starts from the scan estimate.
pub fn recover<T: Real>(
    method: RecoveryMethod,
    setting: &TestSetting<T>,
    sample: &SpinSample,
    rho: Option<T>,
    policy: ScanPolicy,
) -> Result<RecoveryReport> {
    let regime = classify_regime(&setting.field, setting.theta1)?;
    let k = setting.k;
    match method {
        RecoveryMethod::Scan => scan_recover(sample, k, &regime, policy),
        RecoveryMethod::Screen => {
            let first = scan_recover(sample, k, &regime, policy)?;
            let est = screen(sample, &first.estimate, k, &regime)?;
            let mut r = RecoveryReport::new(RecoveryMethod::Screen, est, sample.n(), sample.m);
            r.scan_exact = first.scan_exact;
            Ok(r)
        }
        RecoveryMethod::RowSum => rowsum_recover(sample, k, &regime),
        RecoveryMethod::Spectral => {
            let rho = match rho {
                Some(r) => r,
                None => default_rho(setting, &regime)?,
            };
            spectral_recover(sample, k, rho)
        }
    }
}
