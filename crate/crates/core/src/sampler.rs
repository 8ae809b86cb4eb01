//! Exact sampling from the planted random-field Curie–Weiss model.
//!
//! Conditioned on the auxiliary Gaussian variable `X` of the
//! Hubbard–Stratonovich identity, clique spins are independent with
//! `P(+1) = logistic(2(a X + h_i))`, `a = sqrt(theta1 / k)`. `X` itself is drawn
//! by inverse CDF from the one-dimensional density
//! `exp(-x^2/2 + sum_{i in S} log cosh(a x + h_i))` tabulated on an adaptive grid.
//! Indices are 0-based.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::FieldDistribution;
use crate::real::{log_cosh, logistic, sech2, Real};

pub const GRID_NODES: usize = 4096;
const COARSE_NODES: usize = 1025;
const MODE_WINDOW: f64 = 40.0;
const SPAN_SDS: f64 = 12.0;
pub const TAIL_TOL: f64 = 1e-12;
/// Largest `n` accepted by [`enumerate_distribution`].
pub const ENUMERATION_MAX_N: usize = 20;
const MAX_GROUPS: usize = 64;
pub const MAGIC: &[u8; 6] = b"PRFCW1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldMode<T> {
    /// Every observation redraws `h ~ mu^n`.
    FreshPerObservation,
    /// One realization shared by all observations; drawn from the seed when `values` is absent.
    Quenched { values: Option<Vec<T>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub n: usize,
    /// Clique size; 0 under the null.
    pub k: usize,
    pub theta1: T,
    pub field: FieldDistribution<T>,
    /// Sorted 0-based clique indices; `None` under the null.
    pub clique: Option<Vec<usize>>,
    pub field_mode: FieldMode<T>,
}

impl<T: Real> ModelSpec<T> {
    pub fn null(n: usize, field: FieldDistribution<T>) -> Self {
        ModelSpec { n, k: 0, theta1: T::zero(), field, clique: None, field_mode: FieldMode::FreshPerObservation }
    }

    pub fn planted(n: usize, clique: Vec<usize>, theta1: T, field: FieldDistribution<T>) -> Self {
        let mut clique = clique;
        clique.sort_unstable();
        ModelSpec {
            n,
            k: clique.len(),
            theta1,
            field,
            clique: Some(clique),
            field_mode: FieldMode::FreshPerObservation,
        }
    }

    pub fn with_field_mode(mut self, mode: FieldMode<T>) -> Self {
        self.field_mode = mode;
        self
    }

    pub fn quenched(self, values: Vec<T>) -> Self {
        self.with_field_mode(FieldMode::Quenched { values: Some(values) })
    }

    pub fn is_null(&self) -> bool {
        self.clique.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        if !(self.theta1 >= T::zero()) || !self.theta1.is_finite() {
            return Err(Error::InvalidSpec(format!("theta1 = {} must be finite and >= 0", self.theta1)));
        }
        self.field.validate()?;
        match &self.clique {
            None if self.k != 0 => return Err(Error::InvalidSpec("k > 0 requires a clique".into())),
            None => {}
            Some(c) => {
                if c.len() != self.k || self.k == 0 || self.k > self.n {
                    return Err(Error::InvalidSpec(format!("clique of size {} with k = {}, n = {}", c.len(), self.k, self.n)));
                }
                if c.windows(2).any(|w| w[0] >= w[1]) || c[c.len() - 1] >= self.n {
                    return Err(Error::InvalidSpec("clique indices must be sorted, distinct and < n".into()));
                }
            }
        }
        if let FieldMode::Quenched { values: Some(v) } = &self.field_mode {
            if v.len() != self.n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec(format!("quenched field must hold {} finite values", self.n)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes).into()
    }

    fn membership(&self) -> Vec<bool> {
        let mut member = vec![false; self.n];
        for &i in self.clique.iter().flatten() {
            member[i] = true;
        }
        member
    }

    /// `sqrt(theta1 / k)`, or 0 when the clique is absent or uncoupled.
    fn coupling(&self) -> T {
        match &self.clique {
            Some(_) if self.theta1 > T::zero() => (self.theta1 / T::from_usize_lossy(self.k)).sqrt(),
            _ => T::zero(),
        }
    }
}

/// The quenched realization used for `(spec, seed)`.
pub fn quenched_realization<T: Real>(spec: &ModelSpec<T>, seed: u64) -> Result<Vec<T>> {
    match &spec.field_mode {
        FieldMode::Quenched { values: Some(v) } => Ok(v.clone()),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            spec.field.sample(spec.n, &mut rng)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinSample {
    /// `m x n`, entries exactly +1 or -1.
    pub spins: Array2<i8>,
    pub m: usize,
    pub seed: u64,
    pub spec_digest: [u8; 32],
}

impl SpinSample {
    pub fn n(&self) -> usize {
        self.spins.ncols()
    }

    pub fn digest_hex(&self) -> String {
        self.spec_digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header, then row-major bits packed LSB-first with +1 as 1.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.spec_digest)?;
        let mut bytes = vec![0u8; (self.n() * self.m).div_ceil(8)];
        for (bit, &s) in self.spins.iter().enumerate() {
            if s > 0 {
                bytes[bit / 8] |= 1 << (bit % 8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<SpinSample> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a PRFCW1 container".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n = next(&mut r)? as usize;
        let m = next(&mut r)? as usize;
        let seed = next(&mut r)?;
        let mut spec_digest = [0u8; 32];
        r.read_exact(&mut spec_digest)?;
        let total = n.checked_mul(m).ok_or_else(|| Error::Parse("container size overflows".into()))?;
        let mut bytes = vec![0u8; total.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        let data = (0..total).map(|bit| if bytes[bit / 8] >> (bit % 8) & 1 == 1 { 1 } else { -1 }).collect();
        let spins = Array2::from_shape_vec((m, n), data).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(SpinSample { spins, m, seed, spec_digest })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.spins.rows() {
            let line: Vec<&str> = row.iter().map(|&s| if s > 0 { "1" } else { "-1" }).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses a ±1 CSV; lines starting with `#` are skipped. Seed and digest are zeroed.
    pub fn read_csv<R: BufRead>(r: R) -> Result<SpinSample> {
        let mut data = Vec::new();
        let mut n = None;
        let mut m = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| match t.trim() {
                    "1" | "+1" => Ok(1i8),
                    "-1" => Ok(-1i8),
                    other => Err(Error::Parse(format!("line {}: spin {other:?} is not ±1", lineno + 1))),
                })
                .collect::<Result<Vec<i8>>>()?;
            match n {
                None => n = Some(row.len()),
                Some(len) if len != row.len() => {
                    return Err(Error::Parse(format!("line {}: expected {len} columns", lineno + 1)))
                }
                _ => {}
            }
            data.extend(row);
            m += 1;
        }
        let n = n.ok_or_else(|| Error::Parse("empty sample".into()))?;
        let spins = Array2::from_shape_vec((m, n), data).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(SpinSample { spins, m, seed: 0, spec_digest: [0; 32] })
    }

    /// Reads either container, sniffing the magic bytes.
    pub fn read_any(bytes: &[u8]) -> Result<SpinSample> {
        if bytes.starts_with(MAGIC) {
            SpinSample::read_binary(bytes)
        } else {
            SpinSample::read_csv(bytes)
        }
    }
}

/// Clique field values grouped by value, so the density costs one `log cosh` per group.
fn group_fields<T: Real>(values: impl Iterator<Item = T>) -> Vec<(T, usize)> {
    let values: Vec<T> = values.collect();
    let mut groups: Vec<(T, usize)> = Vec::new();
    for &v in &values {
        if let Some(g) = groups.iter_mut().find(|(g, _)| *g == v) {
            g.1 += 1;
        } else if groups.len() < MAX_GROUPS {
            groups.push((v, 1));
        } else {
            return values.into_iter().map(|v| (v, 1)).collect();
        }
    }
    groups
}

fn log_aux<T: Real>(a: T, groups: &[(T, usize)], x: T) -> T {
    groups.iter().fold(-(x * x) * T::lit(0.5), |acc, &(h, c)| {
        acc + T::from_usize_lossy(c) * log_cosh(a * x + h)
    })
}

fn log_aux_d1<T: Real>(a: T, groups: &[(T, usize)], x: T) -> T {
    groups.iter().fold(-x, |acc, &(h, c)| acc + a * T::from_usize_lossy(c) * (a * x + h).tanh())
}

fn log_aux_d2<T: Real>(a: T, groups: &[(T, usize)], x: T) -> T {
    groups.iter().fold(-T::one(), |acc, &(h, c)| acc + a * a * T::from_usize_lossy(c) * sech2(a * x + h))
}

/// Unnormalized auxiliary density at `x` for the clique fields of `h`.
pub fn auxiliary_density<T: Real>(spec: &ModelSpec<T>, h: &[T], x: T) -> Result<T> {
    log_auxiliary_density(spec, h, x).map(|l| l.exp())
}

pub fn log_auxiliary_density<T: Real>(spec: &ModelSpec<T>, h: &[T], x: T) -> Result<T> {
    let clique = spec
        .clique
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("auxiliary density needs a clique".into()))?;
    if h.len() != spec.n {
        return Err(Error::InvalidSpec(format!("field realization has {} entries, expected {}", h.len(), spec.n)));
    }
    let groups = group_fields(clique.iter().map(|&i| h[i]));
    Ok(log_aux(spec.coupling(), &groups, x))
}

/// Tabulated cumulative distribution of the auxiliary variable.
#[derive(Clone, Debug)]
pub struct AuxGrid<T> {
    pub xs: Vec<T>,
    /// Trapezoid cumulative mass; `cdf[0] = 0`.
    pub cdf: Vec<T>,
}

impl<T: Real> AuxGrid<T> {
    pub fn build(a: T, groups: &[(T, usize)]) -> Result<AuxGrid<T>> {
        let k: usize = groups.iter().map(|g| g.1).sum();
        let reach = a * T::from_usize_lossy(k) + T::lit(SPAN_SDS);
        let (lo, hi) = Self::bracket(a, groups, reach);
        match Self::tabulate(a, groups, lo, hi) {
            Ok(g) => Ok(g),
            Err(_) => {
                let mid = (lo + hi) * T::lit(0.5);
                let half = hi - lo;
                Self::tabulate(a, groups, mid - half, mid + half)
            }
        }
    }

    /// Span covering every mode within `MODE_WINDOW` nats of the peak, ±`SPAN_SDS` Laplace sds.
    fn bracket(a: T, groups: &[(T, usize)], reach: T) -> (T, T) {
        let step = T::lit(2.0) * reach / T::from_usize_lossy(COARSE_NODES - 1);
        let xs: Vec<T> = (0..COARSE_NODES).map(|i| -reach + step * T::from_usize_lossy(i)).collect();
        let ls: Vec<T> = xs.iter().map(|&x| log_aux(a, groups, x)).collect();
        let peak = ls.iter().copied().fold(T::neg_infinity(), T::max);
        let floor = peak - T::lit(SPAN_SDS * SPAN_SDS * 0.5);
        let mut lo = reach;
        let mut hi = -reach;
        for (i, (&x, &l)) in xs.iter().zip(&ls).enumerate() {
            if l >= floor {
                lo = lo.min(x - step);
                hi = hi.max(x + step);
            }
            let is_mode = (i == 0 || l >= ls[i - 1]) && (i + 1 == COARSE_NODES || l >= ls[i + 1]);
            if is_mode && l >= peak - T::lit(MODE_WINDOW) {
                let curv = -log_aux_d2(a, groups, x);
                let sd = if curv > T::lit(1e-12) { T::one() / curv.sqrt() } else { reach };
                lo = lo.min(x - T::lit(SPAN_SDS) * sd);
                hi = hi.max(x + T::lit(SPAN_SDS) * sd);
            }
        }
        (lo.max(-reach), hi.min(reach))
    }

    fn tabulate(a: T, groups: &[(T, usize)], lo: T, hi: T) -> Result<AuxGrid<T>> {
        let dx = (hi - lo) / T::from_usize_lossy(GRID_NODES - 1);
        let xs: Vec<T> = (0..GRID_NODES).map(|i| lo + dx * T::from_usize_lossy(i)).collect();
        let ls: Vec<T> = xs.iter().map(|&x| log_aux(a, groups, x)).collect();
        let peak = ls.iter().copied().fold(T::neg_infinity(), T::max);
        let ws: Vec<T> = ls.iter().map(|&l| (l - peak).exp()).collect();
        let mut cdf = Vec::with_capacity(GRID_NODES);
        cdf.push(T::zero());
        for i in 1..GRID_NODES {
            cdf.push(cdf[i - 1] + (ws[i - 1] + ws[i]) * dx * T::lit(0.5));
        }
        let total = cdf[GRID_NODES - 1];
        let tail = |w: T, slope: T| if slope > T::zero() { w / slope } else { T::infinity() };
        let left = tail(ws[0], log_aux_d1(a, groups, lo));
        let right = tail(ws[GRID_NODES - 1], -log_aux_d1(a, groups, hi));
        let outside = (left + right) / total;
        if !(outside <= T::lit(TAIL_TOL)) {
            return Err(Error::GridUnderflow(outside.as_f64()));
        }
        Ok(AuxGrid { xs, cdf })
    }

    /// Inverse CDF at `u` in [0, 1), linear within each cell.
    pub fn quantile(&self, u: T) -> T {
        let target = u * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let width = self.cdf[i + 1] - self.cdf[i];
        let frac = if width > T::zero() { (target - self.cdf[i]) / width } else { T::lit(0.5) };
        self.xs[i] + frac * (self.xs[i + 1] - self.xs[i])
    }

    /// Normalizing constant relative to `exp(peak)`; used in tests.
    pub fn mass(&self) -> T {
        self.cdf[self.cdf.len() - 1]
    }
}

type GridCache<T> = HashMap<Vec<(u64, usize)>, AuxGrid<T>>;

fn cached_grid<'c, T: Real>(cache: &'c mut GridCache<T>, a: T, groups: &[(T, usize)]) -> Result<&'c AuxGrid<T>> {
    let key: Vec<(u64, usize)> = groups.iter().map(|&(h, c)| (h.as_f64().to_bits(), c)).collect();
    if !cache.contains_key(&key) {
        let grid = AuxGrid::build(a, groups)?;
        cache.insert(key.clone(), grid);
    }
    Ok(&cache[&key])
}

struct Sampler<'a, T> {
    spec: &'a ModelSpec<T>,
    member: Vec<bool>,
    a: T,
    quenched: Option<Vec<T>>,
    seed: u64,
}

impl<'a, T: Real> Sampler<'a, T> {
    fn new(spec: &'a ModelSpec<T>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let quenched = match spec.field_mode {
            FieldMode::FreshPerObservation => None,
            FieldMode::Quenched { .. } => Some(quenched_realization(spec, seed)?),
        };
        Ok(Sampler { spec, member: spec.membership(), a: spec.coupling(), quenched, seed })
    }

    /// One observation written into `row`; returns the auxiliary draw when coupled.
    fn draw(&self, j: usize, cache: &mut GridCache<T>, h: &mut Vec<T>, row: &mut [i8]) -> Result<Option<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(j as u64);
        let h: &[T] = match &self.quenched {
            Some(q) => q,
            None => {
                h.clear();
                self.spec.field.sample_into(&mut rng, h, self.spec.n);
                h
            }
        };
        let mut x = None;
        if self.a > T::zero() {
            let clique = self.spec.clique.as_ref().unwrap();
            let groups = group_fields(clique.iter().map(|&i| h[i]));
            let grid = cached_grid(cache, self.a, &groups)?;
            x = Some(grid.quantile(T::lit(rng.random::<f64>())));
        }
        let two = T::lit(2.0);
        for i in 0..self.spec.n {
            let local = match x {
                Some(x) if self.member[i] => self.a * x + h[i],
                _ => h[i],
            };
            let p = logistic(two * local);
            row[i] = if T::lit(rng.random::<f64>()) < p { 1 } else { -1 };
        }
        Ok(x)
    }
}

fn run<T: Real>(spec: &ModelSpec<T>, m: usize, seed: u64) -> Result<(SpinSample, Vec<Option<T>>)> {
    if m == 0 {
        return Err(Error::InvalidSpec("m must be positive".into()));
    }
    let sampler = Sampler::new(spec, seed)?;
    let n = spec.n;
    let mut data = vec![0i8; m * n];
    let aux: Vec<Option<T>> = data
        .par_chunks_mut(n)
        .enumerate()
        .map_init(
            || (GridCache::new(), Vec::with_capacity(n)),
            |(cache, h), (j, row)| sampler.draw(j, cache, h, row),
        )
        .collect::<Result<_>>()?;
    let spins = Array2::from_shape_vec((m, n), data).expect("shape matches");
    Ok((SpinSample { spins, m, seed, spec_digest: spec.digest() }, aux))
}

/// `m` i.i.d. observations; observation `j` uses ChaCha8 stream `j` of `seed`.
pub fn sample<T: Real>(spec: &ModelSpec<T>, m: usize, seed: u64) -> Result<SpinSample> {
    run(spec, m, seed).map(|r| r.0)
}

/// As [`sample`], also returning each observation's auxiliary draw (`None` when uncoupled).
pub fn sample_with_auxiliary<T: Real>(spec: &ModelSpec<T>, m: usize, seed: u64) -> Result<(SpinSample, Vec<Option<T>>)> {
    run(spec, m, seed)
}

/// Index of a configuration in [`enumerate_distribution`]: bit `i` set iff spin `i` is +1.
pub fn config_index(spins: &[i8]) -> usize {
    spins.iter().enumerate().fold(0, |acc, (i, &s)| if s > 0 { acc | 1 << i } else { acc })
}

/// Exact Gibbs probabilities `∝ exp(theta1/(2k) (sum_S sigma)^2 + sum h sigma)` over all `2^n`
/// configurations, indexed by [`config_index`].
pub fn enumerate_distribution<T: Real>(spec: &ModelSpec<T>, h: &[T]) -> Result<Vec<T>> {
    spec.validate()?;
    if spec.n > ENUMERATION_MAX_N {
        return Err(Error::TooLarge { n: spec.n, max: ENUMERATION_MAX_N });
    }
    if h.len() != spec.n {
        return Err(Error::InvalidSpec(format!("field realization has {} entries, expected {}", h.len(), spec.n)));
    }
    let member = spec.membership();
    let coef = if spec.k > 0 { spec.theta1 / T::from_usize_lossy(2 * spec.k) } else { T::zero() };
    let logw: Vec<T> = (0..1usize << spec.n)
        .map(|c| {
            let mut clique_sum = 0i64;
            let mut field = T::zero();
            for i in 0..spec.n {
                let s = if c >> i & 1 == 1 { 1 } else { -1 };
                if member[i] {
                    clique_sum += s;
                }
                field = field + if s > 0 { h[i] } else { -h[i] };
            }
            coef * T::from_i64(clique_sum * clique_sum).unwrap() + field
        })
        .collect();
    let peak = logw.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = logw.iter().map(|&l| (l - peak).exp()).collect();
    let z: T = w.iter().copied().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_field() -> FieldDistribution<f64> {
        FieldDistribution::PointMass { a: 0.0 }
    }

    #[test]
    fn enumeration_two_spin_example() {
        let spec = ModelSpec::planted(2, vec![0, 1], 3f64.ln(), zero_field());
        let p = enumerate_distribution(&spec, &[0.0, 0.0]).unwrap();
        // configurations: 0 = (--), 1 = (+-), 2 = (-+), 3 = (++)
        for (got, want) in p.iter().zip([0.375, 0.125, 0.125, 0.375]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_product_measure_without_coupling() {
        let h = [0.3, -0.2, 0.5];
        let spec = ModelSpec::planted(3, vec![0, 2], 0.0, zero_field());
        let p = enumerate_distribution(&spec, &h).unwrap();
        for (c, &pc) in p.iter().enumerate() {
            let want: f64 = (0..3)
                .map(|i| {
                    let s = if c >> i & 1 == 1 { 1.0 } else { -1.0 };
                    (h[i] * s).exp() / (2.0 * h[i].cosh())
                })
                .product();
            assert!((pc - want).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let big = ModelSpec::null(21, zero_field());
        assert!(matches!(enumerate_distribution(&big, &[0.0; 21]), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn auxiliary_density_examples() {
        let h = [0.2, -0.7, 0.4];
        let spec = ModelSpec::planted(3, vec![0, 1, 2], 0.9, zero_field());
        let d0 = auxiliary_density(&spec, &h, 0.0).unwrap();
        assert!((d0 - h.iter().map(|v: &f64| v.cosh()).product::<f64>()).abs() < 1e-14);
        let spec = ModelSpec::planted(1, vec![0], 1.0, zero_field());
        let grid = AuxGrid::build(1.0, &[(0.0, 1)]).unwrap();
        let peak = (0..GRID_NODES)
            .map(|i| log_auxiliary_density(&spec, &[0.0], grid.xs[i]).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let z = grid.mass() * peak.exp();
        // sqrt(2 pi) e^{1/2}
        assert!((z - 4.132_731_354_122_493).abs() < 1e-6);
        for x in [0.3, 1.7] {
            assert_eq!(auxiliary_density(&spec, &[0.0], x).unwrap(), auxiliary_density(&spec, &[0.0], -x).unwrap());
        }
    }

    #[test]
    fn grid_brackets_both_lobes() {
        // k = 400 at theta1 = 1.5: modes near ±sqrt(theta1 k) m* ≈ ±21
        let a = (1.5f64 / 400.0).sqrt();
        let grid = AuxGrid::build(a, &[(0.0, 400)]).unwrap();
        assert!(grid.xs[0] < -25.0 && grid.xs[GRID_NODES - 1] > 25.0);
        let below = grid.quantile(0.25);
        let above = grid.quantile(0.75);
        assert!(below < -15.0 && above > 15.0);
    }

    #[test]
    fn determinism_and_roundtrip() {
        let spec = ModelSpec::planted(13, vec![1, 4, 5, 9], 1.2, FieldDistribution::Uniform { lo: -0.5, hi: 0.5 });
        let a = sample(&spec, 37, 99).unwrap();
        let b = sample(&spec, 37, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.spins.iter().all(|&s| s == 1 || s == -1));
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 6 + 24 + 32 + (13 * 37usize).div_ceil(8));
        assert_eq!(SpinSample::read_binary(&buf[..]).unwrap(), a);
        assert_eq!(SpinSample::read_any(&buf).unwrap(), a);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(SpinSample::read_any(&csv).unwrap().spins, a.spins);
        assert_ne!(sample(&spec, 37, 100).unwrap().spins, a.spins);
    }

    #[test]
    fn packed_bit_layout() {
        let spins = Array2::from_shape_vec((2, 5), vec![1, -1, -1, 1, 1, -1, -1, -1, 1, -1]).unwrap();
        let s = SpinSample { spins, m: 2, seed: 7, spec_digest: [3; 32] };
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"PRFCW1");
        assert_eq!(&buf[6..14], &5u64.to_le_bytes());
        assert_eq!(&buf[14..22], &2u64.to_le_bytes());
        assert_eq!(&buf[22..30], &7u64.to_le_bytes());
        // bits 0, 3, 4, 8 set
        assert_eq!(&buf[62..], &[0b0001_1001, 0b0000_0001]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ModelSpec::planted(4, vec![0, 4], 1.0, zero_field());
        assert!(spec.validate().is_err());
        spec.clique = Some(vec![1, 1]);
        assert!(spec.validate().is_err());
        let spec = ModelSpec::planted(4, vec![0, 1], -1.0, zero_field());
        assert!(spec.validate().is_err());
        let spec = ModelSpec::null(4, zero_field()).quenched(vec![0.0; 3]);
        assert!(spec.validate().is_err());
        assert!(sample(&ModelSpec::null(4, zero_field()), 0, 1).is_err());
    }

    #[test]
    fn quenched_null_marginal() {
        let spec = ModelSpec::null(4, zero_field()).quenched(vec![0.3; 4]);
        let m = 200_000;
        let s = sample(&spec, m, 5).unwrap();
        let p = 0.3f64.exp() / (0.3f64.exp() + (-0.3f64).exp());
        let freq = s.spins.column(2).iter().filter(|&&v| v > 0).count() as f64 / m as f64;
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se);
    }

    #[test]
    fn f32_sampling_runs() {
        let spec = ModelSpec::planted(6, vec![0, 1, 2], 0.8f32, FieldDistribution::PointMass { a: 0.1 });
        let s = sample(&spec, 10, 3).unwrap();
        assert_eq!(s.spins.dim(), (10, 6));
    }
}
