//! Detection statistics, their default thresholds, and the regime-dispatched composite test.
//!
//! Correlation-type scans operate on the integer co-occurrence counts
//! `G = sum_j sigma^(j) sigma^(j)^T`, so ties between subsets are exact.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldDistribution;
use crate::landscape::{
    self, classify_regime, critical_abs_moment, critical_fluctuation_variance, global_minimizer,
    high_temp_variance, limit_variance_at, Regime, RegimeInfo,
};
use crate::real::Real;
use crate::sampler::SpinSample;
use crate::scan::{self, Objective, ScanPolicy};

const GRAM_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    HighLocal,
    HighGlobal,
    LowLocal,
    LowGlobal,
    CriticalLocal,
    CriticalGlobal,
    AgnosticLocal,
    AgnosticGlobal,
    Oracle,
    Sdp,
}

impl TestId {
    pub const ALL: [TestId; 10] = [
        TestId::HighLocal,
        TestId::HighGlobal,
        TestId::LowLocal,
        TestId::LowGlobal,
        TestId::CriticalLocal,
        TestId::CriticalGlobal,
        TestId::AgnosticLocal,
        TestId::AgnosticGlobal,
        TestId::Oracle,
        TestId::Sdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestId::HighLocal => "high_local",
            TestId::HighGlobal => "high_global",
            TestId::LowLocal => "low_local",
            TestId::LowGlobal => "low_global",
            TestId::CriticalLocal => "critical_local",
            TestId::CriticalGlobal => "critical_global",
            TestId::AgnosticLocal => "agnostic_local",
            TestId::AgnosticGlobal => "agnostic_global",
            TestId::Oracle => "oracle",
            TestId::Sdp => "sdp",
        }
    }

    pub fn branch(self) -> Branch {
        match self {
            TestId::HighLocal | TestId::LowLocal | TestId::CriticalLocal | TestId::AgnosticLocal => Branch::LocalScan,
            _ => Branch::Global,
        }
    }

    /// Rejection uses `>` rather than `>=`.
    fn strict(self) -> bool {
        matches!(self, TestId::HighGlobal | TestId::LowGlobal | TestId::AgnosticLocal)
    }
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TestId> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TestId::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown test {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    LocalScan,
    Global,
}

/// Everything a test needs to know about the hypothesized model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSetting<T> {
    pub n: usize,
    pub k: usize,
    pub theta1: T,
    pub field: FieldDistribution<T>,
}

/// Open interval whose midpoint is the default threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInterval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> ThresholdInterval<T> {
    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) * T::lit(0.5)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestOverrides<T> {
    pub test: Option<TestId>,
    pub threshold: Option<T>,
    /// Half-width for the agnostic local test.
    pub delta: Option<T>,
    pub scan: ScanPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport<T> {
    pub test_id: TestId,
    pub statistic: T,
    pub threshold: T,
    /// Interval the default threshold is the midpoint of; absent when not computable.
    pub interval: Option<ThresholdInterval<T>>,
    pub threshold_overridden: bool,
    pub reject: bool,
    pub regime: RegimeInfo<T>,
    pub branch: Branch,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub theta1: T,
    /// Maximizing subset of a local scan.
    pub argmax: Option<Vec<usize>>,
    pub scan_exact: bool,
    pub details: BTreeMap<String, T>,
}

impl<T: Real> TestReport<T> {
    pub const CSV_HEADER: &'static str = "test_id,n,k,m,theta1,statistic,threshold,reject";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.test_id, self.n, self.k, self.m, self.theta1, self.statistic, self.threshold, self.reject
        )
    }
}

fn check_subset(n: usize, s: &[usize]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::BadSubset("empty subset".into()));
    }
    let mut seen = vec![false; n];
    for &i in s {
        if i >= n || seen[i] {
            return Err(Error::BadSubset(format!("index {i} out of range or repeated (n = {n})")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Co-occurrence counts `sum_j sigma_i^(j) sigma_l^(j)`, exact integers stored as `f64`.
pub fn gram_counts(sample: &SpinSample) -> Array2<f64> {
    let n = sample.n();
    let mut g = Array2::<f64>::zeros((n, n));
    for chunk in sample.spins.axis_chunks_iter(Axis(0), GRAM_CHUNK) {
        let f = chunk.mapv(|v| v as f64);
        g += &f.t().dot(&f);
    }
    g
}

/// `(1/m) sum_j sigma^(j) sigma^(j)^T`.
pub fn empirical_correlation<T: Real>(sample: &SpinSample) -> Array2<T> {
    let m = sample.m as f64;
    gram_counts(sample).mapv(|c| T::lit(c / m))
}

fn row_sums(sample: &SpinSample) -> Vec<i64> {
    sample.spins.rows().into_iter().map(|r| r.iter().map(|&v| v as i64).sum()).collect()
}

/// `gamma = (4 tau - 3) / (2 tau - 1)`.
pub fn critical_gamma<T: Real>(tau: u32) -> T {
    let t = T::from_u32(tau).unwrap();
    (T::lit(4.0) * t - T::lit(3.0)) / (T::lit(2.0) * t - T::lit(1.0))
}

/// `(1_S^T E[sigma sigma^T] 1_S - k) / k`.
pub fn stat_local_high<T: Real>(sample: &SpinSample, s: &[usize]) -> Result<T> {
    check_subset(sample.n(), s)?;
    let q = Objective::Quadratic(&gram_counts(sample)).value(s) / sample.m as f64;
    let k = s.len() as f64;
    Ok(T::lit((q - k) / k))
}

/// `(1/(m k)) sum_j [(sum_i sigma_i)^2 - n]`.
pub fn stat_global_high<T: Real>(sample: &SpinSample, k: usize) -> T {
    let n = sample.n() as i64;
    let total: i64 = row_sums(sample).iter().map(|s| s * s - n).sum();
    T::lit(total as f64 / (sample.m as f64 * k as f64))
}

/// `(1/m) sum_j |(1/k) sum_{i in S} sigma_i|`.
pub fn stat_local_low<T: Real>(sample: &SpinSample, s: &[usize]) -> Result<T> {
    check_subset(sample.n(), s)?;
    let v = Objective::AbsSum(sample.spins.view()).value(s);
    Ok(T::lit(v / (sample.m as f64 * s.len() as f64)))
}

/// `(1/m) sum_j |(1/k) sum_i sigma_i|`.
pub fn stat_global_low<T: Real>(sample: &SpinSample, k: usize) -> T {
    let total: i64 = row_sums(sample).iter().map(|s| s.abs()).sum();
    T::lit(total as f64 / (sample.m as f64 * k as f64))
}

/// `k^-gamma 1_S^T E[sigma sigma^T] 1_S`.
pub fn stat_local_critical<T: Real>(sample: &SpinSample, s: &[usize], tau: u32) -> Result<T> {
    check_subset(sample.n(), s)?;
    let q = Objective::Quadratic(&gram_counts(sample)).value(s) / sample.m as f64;
    Ok(T::lit(q) * T::from_usize_lossy(s.len()).powf(-critical_gamma::<T>(tau)))
}

/// `m^-1 k^-gamma sum_j [(sum_i sigma_i)^2 - n]`.
pub fn stat_global_critical<T: Real>(sample: &SpinSample, k: usize, tau: u32) -> T {
    let n = sample.n() as i64;
    let total: i64 = row_sums(sample).iter().map(|s| s * s - n).sum();
    T::lit(total as f64 / sample.m as f64) * T::from_usize_lossy(k).powf(-critical_gamma::<T>(tau))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgnosticStat<T> {
    pub phi_max: T,
    pub phi_min: T,
    pub xi: T,
    pub argmax: Vec<usize>,
    pub argmin: Vec<usize>,
}

/// Largest and smallest k-subset means and the grand mean; exact by sorting per-spin means.
pub fn stat_agnostic<T: Real>(sample: &SpinSample, k: usize) -> Result<AgnosticStat<T>> {
    let n = sample.n();
    if k == 0 || k > n {
        return Err(Error::BadSubset(format!("k = {k} with n = {n}")));
    }
    let col: Vec<f64> = sample.spins.axis_iter(Axis(1)).map(|c| c.iter().map(|&v| v as i64).sum::<i64>() as f64).collect();
    let argmax = scan::top_k(&col, k);
    let neg: Vec<f64> = col.iter().map(|v| -v).collect();
    let argmin = scan::top_k(&neg, k);
    let denom = sample.m as f64 * k as f64;
    let sum_over = |s: &[usize]| s.iter().map(|&i| col[i]).sum::<f64>() / denom;
    Ok(AgnosticStat {
        phi_max: T::lit(sum_over(&argmax)),
        phi_min: T::lit(sum_over(&argmin)),
        xi: T::lit(col.iter().sum::<f64>() / (sample.m as f64 * n as f64)),
        argmax,
        argmin,
    })
}

/// `m'^-1 k^-gamma sum_j (sum_i (sigma^(2j-1) - sigma^(2j)))^2` with `m'` the number of pairs.
pub fn stat_agnostic_global_pairs<T: Real>(sample: &SpinSample, k: usize, tau: u32) -> Result<T> {
    if sample.m % 2 == 1 {
        return Err(Error::OddSampleCount(sample.m));
    }
    let sums = row_sums(sample);
    let total: i64 = sums.chunks(2).map(|p| (p[0] - p[1]).pow(2)).sum();
    let pairs = (sample.m / 2) as f64;
    Ok(T::lit(total as f64 / pairs) * T::from_usize_lossy(k).powf(-critical_gamma::<T>(tau)))
}

/// `m^-1 k^-2 sum_j [(sum_i sigma_i - n t)^2 - n (1 - t^2)]` with `t = E[tanh h]`.
pub fn stat_oracle<T: Real>(sample: &SpinSample, k: usize, tanh_mean: T) -> T {
    let n = T::from_usize_lossy(sample.n());
    let t = tanh_mean;
    let total: T = row_sums(sample)
        .iter()
        .map(|&s| {
            let d = T::lit(s as f64) - n * t;
            d * d - n * (T::one() - t * t)
        })
        .sum();
    let k = T::from_usize_lossy(k);
    total / (T::from_usize_lossy(sample.m) * k * k)
}

/// `E[|Y|]` for `Y ~ N(mu, s^2)`.
fn folded_normal_mean<T: Real>(mu: T, s: T) -> T {
    let z = (mu / s).as_f64();
    let phi = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2) * 0.5;
    s * T::lit((2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()) + mu * T::lit(1.0 - 2.0 * phi)
}

/// Magnetization the clique concentrates at for a non-centered field.
fn clique_magnetization<T: Real>(setting: &TestSetting<T>) -> Result<T> {
    global_minimizer(&setting.field, setting.theta1)
}

fn critical_second_moment<T: Real>(setting: &TestSetting<T>, regime: &RegimeInfo<T>) -> Result<T> {
    let (tau, x) = match regime.regime {
        Regime::Critical { tau, x_star, .. } => (tau, x_star),
        ref r => return Err(mismatch("critical", r.name())),
    };
    let v = critical_fluctuation_variance(&setting.field, setting.theta1, tau, x)?;
    Ok(critical_abs_moment(v, tau, T::lit(2.0)))
}

fn mismatch(expected: &str, found: &str) -> Error {
    Error::RegimeMismatch { expected: expected.into(), found: found.into() }
}

/// The interval whose midpoint is the default threshold of `test`.
pub fn default_threshold<T: Real>(
    test: TestId,
    setting: &TestSetting<T>,
    regime: &RegimeInfo<T>,
    m: usize,
) -> Result<ThresholdInterval<T>> {
    let n = T::from_usize_lossy(setting.n);
    let k = T::from_usize_lossy(setting.k);
    let field = &setting.field;
    let theta1 = setting.theta1;
    let need = |name: &str| -> Result<()> {
        if regime.regime.name() == name {
            Ok(())
        } else {
            Err(mismatch(name, regime.regime.name()))
        }
    };
    match test {
        TestId::HighLocal | TestId::HighGlobal => {
            need("high")?;
            let v = high_temp_variance(field, theta1)?;
            Ok(ThresholdInterval { lo: T::zero(), hi: v - T::one() })
        }
        TestId::LowLocal => {
            need("low")?;
            let Regime::Low { m_pos, .. } = regime.regime else { unreachable!() };
            Ok(ThresholdInterval { lo: T::zero(), hi: m_pos })
        }
        TestId::LowGlobal => {
            need("low")?;
            let Regime::Low { m_pos, .. } = regime.regime else { unreachable!() };
            let s = n.sqrt() / k;
            let lo = s * T::lit((2.0 / std::f64::consts::PI).sqrt());
            Ok(ThresholdInterval { lo, hi: folded_normal_mean(m_pos, s) })
        }
        TestId::CriticalLocal | TestId::CriticalGlobal => {
            need("critical")?;
            Ok(ThresholdInterval { lo: T::zero(), hi: critical_second_moment(setting, regime)? })
        }
        TestId::AgnosticLocal => {
            let mu = field.expect("E[tanh h]", |h| h.tanh())?;
            let gap = (clique_magnetization(setting)? - mu).abs() * (T::one() - k / n);
            Ok(ThresholdInterval { lo: T::zero(), hi: gap })
        }
        TestId::AgnosticGlobal => {
            let mu = field.expect("E[tanh h]", |h| h.tanh())?;
            let tau = regime.tau();
            let gamma = critical_gamma::<T>(tau);
            let null_var = n * (T::one() - mu * mu);
            let clique_var = if tau == 1 {
                let x = clique_magnetization(setting)?;
                k * limit_variance_at(field, theta1, x)?
            } else {
                k.powf(gamma) * critical_second_moment(setting, regime)?
            };
            let scale = T::lit(2.0) * k.powf(-gamma);
            let lo = scale * null_var;
            let hi = scale * (null_var - k * (T::one() - mu * mu) + clique_var);
            Ok(ThresholdInterval { lo, hi })
        }
        TestId::Oracle => {
            let mu = field.expect("E[tanh h]", |h| h.tanh())?;
            let gap = clique_magnetization(setting)? - mu;
            Ok(ThresholdInterval { lo: T::zero(), hi: gap * gap })
        }
        TestId::Sdp => {
            let f = T::one() + k * (n.ln() / T::from_usize_lossy(m)).sqrt();
            Ok(ThresholdInterval { lo: f, hi: f })
        }
    }
}

/// `n^p` compared against `k` with ties going to the global branch.
fn below(k: usize, n: usize, p: f64) -> bool {
    (k as f64) < (n as f64).powf(p)
}

/// Test the composite procedure picks for this setting.
pub fn select_test<T: Real>(setting: &TestSetting<T>, regime: &RegimeInfo<T>) -> TestId {
    let (n, k) = (setting.n, setting.k);
    if !setting.field.is_symmetric() {
        let tau = regime.tau() as f64;
        return if below(k, n, (2.0 * tau - 1.0) / (4.0 * tau - 3.0)) {
            TestId::AgnosticLocal
        } else {
            TestId::AgnosticGlobal
        };
    }
    match regime.regime {
        Regime::High if below(k, n, 2.0 / 3.0) => TestId::HighLocal,
        Regime::High => TestId::HighGlobal,
        Regime::Low { .. } if below(k, n, 0.5) => TestId::LowLocal,
        Regime::Low { .. } => TestId::LowGlobal,
        Regime::Critical { tau, .. } => {
            let t = tau as f64;
            if below(k, n, (4.0 * t - 2.0) / (8.0 * t - 5.0)) {
                TestId::CriticalLocal
            } else {
                TestId::CriticalGlobal
            }
        }
    }
}

/// Classifies the regime, picks the branch, computes the statistic and decides.
pub fn run_test<T: Real>(setting: &TestSetting<T>, sample: &SpinSample, overrides: &TestOverrides<T>) -> Result<TestReport<T>> {
    if sample.n() != setting.n {
        return Err(Error::InvalidSpec(format!("sample has {} spins, setting has n = {}", sample.n(), setting.n)));
    }
    if setting.k == 0 || setting.k > setting.n {
        return Err(Error::InvalidSpec(format!("k = {} must lie in 1..={}", setting.k, setting.n)));
    }
    let regime = classify_regime(&setting.field, setting.theta1)?;
    let test = overrides.test.unwrap_or_else(|| select_test(setting, &regime));
    if test == TestId::Sdp {
        return Err(Error::InvalidPlan("the SDP test is run through recovery::sdp_test".into()));
    }
    if let Regime::Critical { is_minimum: false, .. } = regime.regime {
        log::warn!("the critical point is not a minimum of the landscape; thresholds assume one");
    }
    let (k, m) = (setting.k, sample.m);
    let tau = regime.tau();
    let mut details = BTreeMap::new();
    let mut argmax = None;
    let mut scan_exact = true;
    let statistic: T = match test {
        TestId::HighLocal | TestId::CriticalLocal => {
            let g = gram_counts(sample);
            let r = scan::maximize(Objective::Quadratic(&g), k, overrides.scan)?;
            scan_exact = r.exact;
            argmax = Some(r.subset);
            let q = r.value / m as f64;
            if test == TestId::HighLocal {
                T::lit((q - k as f64) / k as f64)
            } else {
                T::lit(q) * T::from_usize_lossy(k).powf(-critical_gamma::<T>(tau))
            }
        }
        TestId::LowLocal => {
            let r = scan::maximize(Objective::AbsSum(sample.spins.view()), k, overrides.scan)?;
            scan_exact = r.exact;
            argmax = Some(r.subset);
            T::lit(r.value / (m as f64 * k as f64))
        }
        TestId::HighGlobal => stat_global_high(sample, k),
        TestId::LowGlobal => stat_global_low(sample, k),
        TestId::CriticalGlobal => stat_global_critical(sample, k, tau),
        TestId::AgnosticLocal => {
            let a = stat_agnostic::<T>(sample, k)?;
            details.insert("phi_max".to_string(), a.phi_max);
            details.insert("phi_min".to_string(), a.phi_min);
            details.insert("xi".to_string(), a.xi);
            argmax = Some(if a.phi_max - a.xi >= a.xi - a.phi_min { a.argmax } else { a.argmin });
            (a.phi_max - a.xi).max(a.xi - a.phi_min)
        }
        TestId::AgnosticGlobal => stat_agnostic_global_pairs(sample, k, tau)?,
        TestId::Oracle => {
            let mu = setting.field.expect("E[tanh h]", |h| h.tanh())?;
            stat_oracle(sample, k, mu)
        }
        TestId::Sdp => unreachable!(),
    };
    let interval = match default_threshold(test, setting, &regime, m) {
        Ok(iv) => Some(iv),
        Err(e) if overrides.threshold.is_some() || (test == TestId::AgnosticLocal && overrides.delta.is_some()) => {
            log::debug!("default threshold unavailable: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    let default = interval.map(|iv| iv.midpoint());
    let threshold = match (overrides.threshold, test, overrides.delta) {
        (Some(t), _, _) => t,
        (None, TestId::AgnosticLocal, Some(d)) => d,
        _ => default.unwrap(),
    };
    if test == TestId::AgnosticLocal && !(threshold > T::zero()) {
        return Err(Error::InvalidPlan(
            "agnostic test needs a non-centered field or an explicit delta".into(),
        ));
    }
    let reject = if test.strict() { statistic > threshold } else { statistic >= threshold };
    Ok(TestReport {
        test_id: test,
        statistic,
        threshold,
        interval,
        threshold_overridden: overrides.threshold.is_some() || (test == TestId::AgnosticLocal && overrides.delta.is_some()),
        reject,
        regime,
        branch: test.branch(),
        n: setting.n,
        k,
        m,
        theta1: setting.theta1,
        argmax,
        scan_exact,
        details,
    })
}

/// Number of standard deviations used to report; re-exported for the harness.
pub use landscape::scaling_exponent;
