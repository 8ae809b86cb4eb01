//! Monte Carlo experiment driver.
//!
//! Replicate `r` of a plan draws its null sample from seed `mix(seed, 2r)` and
//! its alternative sample from `mix(seed, 2r + 1)`, independent of the sweep
//! point, so curves over `m` are coupled and serial and parallel runs agree.

use std::fmt::Write as _;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{classify_regime, critical_temperature, global_minimizer, high_temp_variance, limit_variance_at, scaling_exponent, Regime, RegimeInfo};
use crate::real::Real;
use crate::recovery::{self, RecoveryMethod};
use crate::sampler::{sample, ModelSpec};
use crate::scan::ScanPolicy;
use crate::statistics::{run_test, TestOverrides, TestSetting};

pub const MIN_REPLICATES: usize = 100;
pub const THREADS_ENV: &str = "PRFCW_THREADS";

/// SplitMix64 finalizer applied to `seed + (index + 1) * golden`.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` on a pool capped by `PRFCW_THREADS` when set.
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&t| t > 0) {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure<T> {
    Test { overrides: TestOverrides<T> },
    Sdp { c1: T },
    /// Success is exact recovery of the planted set.
    Recover { method: RecoveryMethod, rho: Option<T>, scan: ScanPolicy },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    M,
    N,
    K,
    Theta1,
    /// `theta1 / theta_c`.
    ThetaRatio,
    /// `k / n`, rounded to the nearest integer `k`.
    KFraction,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::M => "m",
            Param::N => "n",
            Param::K => "k",
            Param::Theta1 => "theta1",
            Param::ThetaRatio => "theta_ratio",
            Param::KFraction => "k_fraction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: Param,
    pub values: Vec<f64>,
}

/// Named parameter values of one sweep point with the plan evaluated there.
pub type GridPoint<T> = (Vec<(String, f64)>, ExperimentPlan<T>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan<T> {
    /// Alternative model; the null keeps `n`, the field and the field mode.
    pub base_spec: ModelSpec<T>,
    pub m: usize,
    pub procedure: Procedure<T>,
    pub sweep: Vec<SweepAxis>,
    pub replicates: usize,
    pub delta: f64,
    pub seed: u64,
    /// Draw a fresh uniformly random clique per replicate.
    pub random_clique: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub rate: f64,
    pub se: f64,
    pub replicates: usize,
}

impl Rate {
    pub fn from_count(hits: usize, replicates: usize) -> Rate {
        let r = hits as f64 / replicates as f64;
        Rate { rate: r, se: (r * (1.0 - r) / replicates as f64).sqrt(), replicates }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub type_i: Rate,
    pub type_ii: Rate,
    /// `type_i <= delta + 3 se`.
    pub level_held: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    pub metric: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub replicates: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Header names every swept parameter; wall time is left out so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.rows.first().map(|r| r.params.iter().map(|p| p.0.as_str()).collect()).unwrap_or_default();
        for name in &names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("metric,estimate,standard_error,replicates\n");
        for row in &self.rows {
            for (_, v) in &row.params {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{},{},{}", row.metric, row.estimate, row.standard_error, row.replicates);
        }
        out
    }
}

impl<T: Real> ExperimentPlan<T> {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidPlan(format!("replicates = {} < {MIN_REPLICATES}", self.replicates)));
        }
        if self.m == 0 {
            return Err(Error::InvalidPlan("m must be positive".into()));
        }
        if self.base_spec.is_null() {
            return Err(Error::InvalidPlan("the base spec must name an alternative".into()));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::InvalidPlan(format!("empty grid for {}", axis.param.name())));
            }
            if axis.param == Param::M && axis.values.iter().any(|&v| v < 1.0) {
                return Err(Error::InvalidPlan("m = 0 is not allowed".into()));
            }
        }
        self.base_spec.validate()
    }

    /// Every grid point of the sweep as (parameter values, plan at that point).
    pub fn grid(&self) -> Result<Vec<GridPoint<T>>> {
        let mut points: Vec<Vec<(Param, f64)>> = vec![vec![]];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((axis.param, v));
                    q
                }))
                .collect();
        }
        points
            .into_iter()
            .map(|p| {
                let mut plan = self.clone();
                plan.sweep.clear();
                for &(param, v) in &p {
                    plan.apply(param, v)?;
                }
                plan.validate()?;
                Ok((p.iter().map(|&(param, v)| (param.name().to_string(), v)).collect(), plan))
            })
            .collect()
    }

    fn apply(&mut self, param: Param, v: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidPlan(format!("{} = {v} must be a positive integer", param.name())))
            }
        };
        let spec = &mut self.base_spec;
        match param {
            Param::M => self.m = as_count(v)?,
            Param::N => {
                spec.n = as_count(v)?;
                if !self.random_clique {
                    spec.clique = Some((0..spec.k).collect());
                }
            }
            Param::K => {
                spec.k = as_count(v)?;
                spec.clique = Some((0..spec.k).collect());
            }
            Param::Theta1 => spec.theta1 = T::lit(v),
            Param::ThetaRatio => spec.theta1 = T::lit(v) * critical_temperature(&spec.field)?,
            Param::KFraction => {
                spec.k = as_count((v * spec.n as f64).round().max(1.0))?;
                spec.clique = Some((0..spec.k).collect());
            }
        }
        Ok(())
    }

    fn setting(&self) -> TestSetting<T> {
        let s = &self.base_spec;
        TestSetting { n: s.n, k: s.k, theta1: s.theta1, field: s.field.clone() }
    }

    fn null_spec(&self) -> ModelSpec<T> {
        ModelSpec::null(self.base_spec.n, self.base_spec.field.clone()).with_field_mode(self.base_spec.field_mode.clone())
    }

    fn alternative_spec(&self, rep_seed: u64) -> ModelSpec<T> {
        let mut spec = self.base_spec.clone();
        if self.random_clique {
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            rng.set_stream(u64::MAX - 1);
            let mut c = rand::seq::index::sample(&mut rng, spec.n, spec.k).into_vec();
            c.sort_unstable();
            spec.clique = Some(c);
        }
        spec
    }

    /// Whether the procedure fires (rejects, or recovers exactly) on one replicate.
    fn outcome(&self, spec: &ModelSpec<T>, rep_seed: u64) -> Result<bool> {
        let data = sample(spec, self.m, rep_seed)?;
        let setting = self.setting();
        match &self.procedure {
            Procedure::Test { overrides } => Ok(run_test(&setting, &data, overrides)?.reject),
            Procedure::Sdp { c1 } => Ok(recovery::sdp_test(&setting, &data, *c1)?.reject),
            Procedure::Recover { method, rho, scan } => {
                let truth = spec.clique.clone().unwrap_or_default();
                let r = recovery::recover(*method, &setting, &data, *rho, *scan)?;
                Ok(r.with_truth(&truth).exact)
            }
        }
    }

    fn statistic(&self, spec: &ModelSpec<T>, rep_seed: u64) -> Result<f64> {
        let data = sample(spec, self.m, rep_seed)?;
        match &self.procedure {
            Procedure::Test { overrides } => Ok(run_test(&self.setting(), &data, overrides)?.statistic.as_f64()),
            _ => Err(Error::InvalidPlan("calibration needs a test procedure".into())),
        }
    }

    fn count(&self, null: bool) -> Result<usize> {
        let outcomes: Vec<bool> = (0..self.replicates)
            .into_par_iter()
            .map(|r| {
                let index = 2 * r as u64 + u64::from(!null);
                let rep_seed = mix(self.seed, index);
                let spec = if null { self.null_spec() } else { self.alternative_spec(rep_seed) };
                self.outcome(&spec, rep_seed)
                    .map_err(|e| Error::Replicate { index: r, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        Ok(outcomes.into_iter().filter(|&b| b).count())
    }
}

/// Type I error under the null and Type II error under the alternative.
pub fn estimate_errors<T: Real>(plan: &ExperimentPlan<T>) -> Result<ErrorEstimate> {
    plan.validate()?;
    if matches!(plan.procedure, Procedure::Recover { .. }) {
        return Err(Error::InvalidPlan("error rates need a test procedure".into()));
    }
    with_pool(|| {
        let false_pos = plan.count(true)?;
        let true_pos = plan.count(false)?;
        let type_i = Rate::from_count(false_pos, plan.replicates);
        Ok(ErrorEstimate {
            type_i,
            type_ii: Rate::from_count(plan.replicates - true_pos, plan.replicates),
            level_held: type_i.rate <= plan.delta + 3.0 * type_i.se,
        })
    })
}

/// Null `(1 - delta)` quantile of the test statistic from `replicates` draws
/// independent of those used by [`estimate_errors`], nudged up so `>=` rejections keep the level.
pub fn calibrate_threshold<T: Real>(plan: &ExperimentPlan<T>, replicates: usize) -> Result<f64> {
    plan.validate()?;
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidPlan(format!("replicates = {replicates} < {MIN_REPLICATES}")));
    }
    let base = mix(plan.seed, u64::MAX);
    let null = plan.null_spec();
    let mut stats: Vec<f64> = with_pool(|| {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                plan.statistic(&null, mix(base, r as u64))
                    .map_err(|e| Error::Replicate { index: r, source: Box::new(e) })
            })
            .collect::<Result<_>>()
    })?;
    stats.sort_by(f64::total_cmp);
    let rank = ((1.0 - plan.delta) * replicates as f64).ceil() as usize;
    let q = stats[rank.clamp(1, replicates) - 1];
    Ok(q + q.abs() * 1e-12 + f64::MIN_POSITIVE)
}

fn success_rate<T: Real>(plan: &ExperimentPlan<T>) -> Result<Rate> {
    Ok(Rate::from_count(plan.count(false)?, plan.replicates))
}

fn metric_name<T>(plan: &ExperimentPlan<T>) -> &'static str {
    match plan.procedure {
        Procedure::Recover { .. } => "exact_recovery",
        _ => "power",
    }
}

/// Power (or exact-recovery rate) at every grid point of the sweep.
pub fn power_curve<T: Real>(plan: &ExperimentPlan<T>) -> Result<SweepResult> {
    if plan.sweep.is_empty() {
        return Err(Error::InvalidPlan("power_curve needs a sweep".into()));
    }
    let grid = plan.grid()?;
    with_pool(|| {
        let mut rows = Vec::with_capacity(grid.len());
        for (params, point) in grid {
            let start = Instant::now();
            let rate = success_rate(&point)?;
            log::info!("{params:?}: {} = {:.4} ± {:.4}", metric_name(plan), rate.rate, rate.se);
            rows.push(SweepRow {
                params,
                metric: metric_name(plan).to_string(),
                estimate: rate.rate,
                standard_error: rate.se,
                replicates: rate.replicates,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        Ok(SweepResult { rows })
    })
}

/// Type I error at every grid point of the sweep.
pub fn type_i_curve<T: Real>(plan: &ExperimentPlan<T>) -> Result<SweepResult> {
    let grid = plan.grid()?;
    with_pool(|| {
        grid.into_iter()
            .map(|(params, point)| {
                let start = Instant::now();
                let rate = Rate::from_count(point.count(true)?, point.replicates);
                Ok(SweepRow {
                    params,
                    metric: "type_i".to_string(),
                    estimate: rate.rate,
                    standard_error: rate.se,
                    replicates: rate.replicates,
                    wall_time: start.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|rows| SweepResult { rows })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub m_star: usize,
    /// Grid points evaluated during the bisection, sorted by `m`.
    pub evaluated: Vec<(usize, Rate)>,
}

/// Smallest `m` in `m_grid` whose power reaches `target`, by bisection on the grid.
pub fn sample_complexity<T: Real>(plan: &ExperimentPlan<T>, m_grid: &[usize], target: f64) -> Result<SampleComplexity> {
    let mut grid = m_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::InvalidPlan("m grid must be non-empty and positive".into()));
    }
    let mut evaluated: Vec<(usize, Rate)> = Vec::new();
    let mut eval = |m: usize| -> Result<Rate> {
        if let Some((_, r)) = evaluated.iter().find(|(mm, _)| *mm == m) {
            return Ok(*r);
        }
        let mut p = plan.clone();
        p.m = m;
        p.sweep.clear();
        p.validate()?;
        let r = with_pool(|| success_rate(&p))?;
        log::info!("m = {m}: {} = {:.4} ± {:.4}", metric_name(plan), r.rate, r.se);
        evaluated.push((m, r));
        Ok(r)
    };
    let top = eval(grid[grid.len() - 1])?;
    if top.rate < target {
        return Err(Error::NotReached { target, best: top.rate, m: grid[grid.len() - 1] });
    }
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    if target <= 0.0 {
        hi = 0;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if eval(grid[mid])?.rate >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    evaluated.sort_by_key(|e| e.0);
    Ok(SampleComplexity { m_star: grid[hi], evaluated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport<T> {
    pub regime: RegimeInfo<T>,
    /// Limiting variance (high), fixed point (low) or exponent (critical).
    pub target: f64,
    /// Limiting variance around the fixed point (low regime).
    pub conditional_target: Option<f64>,
    /// OLS slope of `log E|sum sigma|` on `log n` (critical regime).
    pub slope: Option<f64>,
    pub result: SweepResult,
}

/// Whole-system (`k = n`) fluctuation checks across `n_grid`.
pub fn verify_clt<T: Real>(
    field: &crate::field::FieldDistribution<T>,
    theta1: T,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<CltReport<T>> {
    if n_grid.is_empty() || replicates < 2 {
        return Err(Error::InvalidPlan("verify_clt needs a non-empty n grid and at least 2 replicates".into()));
    }
    let regime = classify_regime(field, theta1)?;
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for &n in n_grid {
        let start = Instant::now();
        let spec = ModelSpec::planted(n, (0..n).collect(), theta1, field.clone());
        let data = with_pool(|| sample(&spec, replicates, mix(seed, n as u64)))?;
        let sums: Vec<f64> = data.spins.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).sum()).collect();
        let nf = n as f64;
        let r = replicates as f64;
        let params = vec![("n".to_string(), nf)];
        let mut push = |metric: &str, est: f64, se: f64| {
            rows.push(SweepRow {
                params: params.clone(),
                metric: metric.to_string(),
                estimate: est,
                standard_error: se,
                replicates,
                wall_time: start.elapsed().as_secs_f64(),
            })
        };
        match regime.regime {
            Regime::High => {
                let xs: Vec<f64> = sums.iter().map(|s| s / nf.sqrt()).collect();
                let (var, se) = variance_with_se(&xs);
                push("variance", var, se);
            }
            Regime::Low { .. } => {
                let mags: Vec<f64> = sums.iter().map(|s| s.abs() / nf).collect();
                let mean = mags.iter().sum::<f64>() / r;
                let sd = (mags.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
                push("abs_magnetization", mean, sd / r.sqrt());
                let mut pooled = Vec::with_capacity(sums.len());
                for sign in [1.0, -1.0] {
                    let class: Vec<f64> = sums.iter().filter(|&&s| s * sign > 0.0).map(|s| s / nf.sqrt()).collect();
                    if class.len() > 1 {
                        let mu = class.iter().sum::<f64>() / class.len() as f64;
                        pooled.extend(class.iter().map(|x| x - mu));
                    }
                }
                let (var, se) = variance_with_se(&pooled);
                push("conditional_variance", var, se);
            }
            Regime::Critical { .. } => {
                let abs: Vec<f64> = sums.iter().map(|s| s.abs()).collect();
                let mean = abs.iter().sum::<f64>() / r;
                let sd = (abs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
                push("mean_abs_sum", mean, sd / r.sqrt());
                logs.push((nf.ln(), mean.ln()));
            }
        }
    }
    let (target, conditional_target, slope) = match regime.regime {
        Regime::High => {
            let v = if field.is_symmetric() {
                high_temp_variance(field, theta1)?
            } else {
                limit_variance_at(field, theta1, global_minimizer(field, theta1)?)?
            };
            (v.as_f64(), None, None)
        }
        Regime::Low { m_pos, .. } => (m_pos.as_f64(), Some(limit_variance_at(field, theta1, m_pos)?.as_f64()), None),
        Regime::Critical { tau, .. } => (scaling_exponent::<f64>(tau), None, ols_slope(&logs)),
    };
    Ok(CltReport { regime, target, conditional_target, slope, result: SweepResult { rows } })
}

/// Unbiased sample variance and its large-sample standard error.
fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / r;
    (var, ((m4 - var * var).max(0.0) / r).sqrt())
}

/// Least-squares slope; `None` for fewer than two points.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub v: usize,
    pub exact: f64,
    pub bound: f64,
    /// Decided in exact integer arithmetic.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub n: usize,
    pub k: usize,
    pub rows: Vec<OverlapRow>,
    pub max_ratio: f64,
    pub total: f64,
    pub all_hold: bool,
}

fn big_binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

fn ratio_f64(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(60);
    let d = (den >> shift).to_f64().unwrap();
    let n = (num >> shift).to_f64().unwrap_or(f64::INFINITY);
    n / d
}

/// Overlap `V = |S ∩ S'|` of two independent uniform k-subsets of [n]:
/// exact hypergeometric pmf against `(k^2/n)^v / v!`.
pub fn overlap_bound_check(n: usize, k: usize) -> Result<OverlapReport> {
    if k == 0 || k > n {
        return Err(Error::InvalidPlan(format!("k = {k} with n = {n}")));
    }
    let total_subsets = big_binomial(n, k);
    let mut rows = Vec::with_capacity(k + 1);
    let mut max_ratio = 0.0f64;
    let mut total = 0.0;
    let mut factorial = BigUint::one();
    for v in 0..=k {
        if v > 0 {
            factorial *= BigUint::from(v);
        }
        let count = big_binomial(k, v) * big_binomial(n - k, k - v);
        // count / C(n,k) <= k^{2v} / (v! n^v)  <=>  count v! n^v <= C(n,k) k^{2v}
        let lhs = &count * &factorial * BigUint::from(n).pow(v as u32);
        let rhs = &total_subsets * BigUint::from(k).pow(2 * v as u32);
        let exact = ratio_f64(&count, &total_subsets);
        let bound = ((k * k) as f64 / n as f64).powi(v as i32) / statrs::function::factorial::factorial(v as u64);
        max_ratio = max_ratio.max(ratio_f64(&lhs, &rhs));
        total += exact;
        rows.push(OverlapRow { v, exact, bound, holds: lhs <= rhs });
    }
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(OverlapReport { n, k, rows, max_ratio, total, all_hold })
}
