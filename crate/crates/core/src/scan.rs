//! Exhaustive k-subset maximization with lexicographic tie-breaking, and the
//! heuristic candidates used when enumeration is too large.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_MAX_SUBSETS: u128 = 1_000_000;
const LOCAL_SEARCH_PASSES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPolicy {
    pub max_subsets: u128,
    /// Fail with `ScanTooLarge` instead of falling back to heuristic candidates.
    pub strict: bool,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        ScanPolicy { max_subsets: DEFAULT_MAX_SUBSETS, strict: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub subset: Vec<usize>,
    pub value: f64,
    /// `false` when the value comes from the heuristic fallback.
    pub exact: bool,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Objective over k-subsets.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    /// `1_S^T A 1_S` for symmetric `A`.
    Quadratic(&'a Array2<f64>),
    /// `sum_j |sum_{i in S} spins[j, i]|` for an `m x n` spin array.
    AbsSum(ArrayView2<'a, i8>),
}

impl Objective<'_> {
    fn n(&self) -> usize {
        match self {
            Objective::Quadratic(a) => a.nrows(),
            Objective::AbsSum(s) => s.ncols(),
        }
    }

    pub fn value(&self, subset: &[usize]) -> f64 {
        match self {
            Objective::Quadratic(a) => subset.iter().map(|&i| subset.iter().map(|&j| a[[i, j]]).sum::<f64>()).sum(),
            Objective::AbsSum(s) => s
                .rows()
                .into_iter()
                .map(|row| subset.iter().map(|&i| row[i] as i64).sum::<i64>().abs() as f64)
                .sum(),
        }
    }
}

pub fn maximize(obj: Objective<'_>, k: usize, policy: ScanPolicy) -> Result<ScanResult> {
    let n = obj.n();
    if k == 0 || k > n {
        return Err(Error::BadSubset(format!("k = {k} with n = {n}")));
    }
    let subsets = binomial(n, k);
    if subsets <= policy.max_subsets {
        return Ok(exhaustive(obj, k));
    }
    if policy.strict {
        return Err(Error::ScanTooLarge { subsets, limit: policy.max_subsets });
    }
    static WARNED: AtomicBool = AtomicBool::new(false);
    let level = if WARNED.swap(true, Ordering::Relaxed) { log::Level::Debug } else { log::Level::Warn };
    log::log!(level, "C({n}, {k}) = {subsets} subsets exceeds the scan gate {}; using heuristic candidates", policy.max_subsets);
    heuristic(obj, k)
}

fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn exhaustive(obj: Objective<'_>, k: usize) -> ScanResult {
    let n = obj.n();
    let best = (0..=n - k)
        .into_par_iter()
        .map(|first| match obj {
            Objective::Quadratic(a) => quad_branch(a, n, k, first),
            Objective::AbsSum(s) => abs_branch(s, n, k, first),
        })
        .reduce(|| (f64::NEG_INFINITY, Vec::new()), |x, y| if better(&y, &x) { y } else { x });
    ScanResult { subset: best.1, value: best.0, exact: true }
}

/// Lexicographic DFS over subsets starting with `first`, carrying `acc[j] = sum_{i in S} A[i, j]`.
fn quad_branch(a: &Array2<f64>, n: usize, k: usize, first: usize) -> (f64, Vec<usize>) {
    struct Dfs<'a> {
        a: &'a Array2<f64>,
        n: usize,
        k: usize,
        stack: Vec<usize>,
        acc: Vec<Vec<f64>>,
        best: (f64, Vec<usize>),
    }
    impl Dfs<'_> {
        fn go(&mut self, depth: usize, q: f64) {
            let start = self.stack[depth - 1] + 1;
            let last = self.n - (self.k - depth);
            if depth + 1 == self.k {
                let acc = &self.acc[depth - 1];
                for t in start..=last {
                    let v = q + 2.0 * acc[t] + self.a[[t, t]];
                    if v > self.best.0 {
                        self.stack.push(t);
                        self.best = (v, self.stack.clone());
                        self.stack.pop();
                    }
                }
                return;
            }
            for t in start..=last {
                let (done, rest) = self.acc.split_at_mut(depth);
                let prev = &done[depth - 1];
                let v = q + 2.0 * prev[t] + self.a[[t, t]];
                for ((dst, p), r) in rest[0].iter_mut().zip(prev).zip(self.a.row(t)) {
                    *dst = p + r;
                }
                self.stack.push(t);
                self.go(depth + 1, v);
                self.stack.pop();
            }
        }
    }
    let q0 = a[[first, first]];
    if k == 1 {
        return (q0, vec![first]);
    }
    let mut dfs = Dfs {
        a,
        n,
        k,
        stack: vec![first],
        acc: vec![vec![0.0; n]; k],
        best: (f64::NEG_INFINITY, Vec::new()),
    };
    dfs.acc[0] = a.row(first).to_vec();
    dfs.go(1, q0);
    dfs.best
}

fn abs_branch(s: ArrayView2<'_, i8>, n: usize, k: usize, first: usize) -> (f64, Vec<usize>) {
    let m = s.nrows();
    let cols: Vec<Vec<i32>> = (0..n).map(|i| s.column(i).iter().map(|&v| v as i32).collect()).collect();
    let mut sums = vec![vec![0i32; m]; k + 1];
    sums[1] = cols[first].clone();
    let mut stack = vec![first];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    if k == 1 {
        let v = cols[first].iter().map(|x| x.unsigned_abs() as u64).sum::<u64>() as f64;
        return (v, stack);
    }
    fn go(
        cols: &[Vec<i32>],
        n: usize,
        k: usize,
        depth: usize,
        stack: &mut Vec<usize>,
        sums: &mut Vec<Vec<i32>>,
        best: &mut (f64, Vec<usize>),
    ) {
        let start = stack[depth - 1] + 1;
        let last = n - (k - depth);
        for t in start..=last {
            if depth + 1 == k {
                let v = sums[depth].iter().zip(&cols[t]).map(|(a, b)| (a + b).unsigned_abs() as u64).sum::<u64>() as f64;
                if v > best.0 {
                    stack.push(t);
                    *best = (v, stack.clone());
                    stack.pop();
                }
            } else {
                let (done, rest) = sums.split_at_mut(depth + 1);
                for ((dst, a), b) in rest[0].iter_mut().zip(&done[depth]).zip(&cols[t]) {
                    *dst = a + b;
                }
                stack.push(t);
                go(cols, n, k, depth + 1, stack, sums, best);
                stack.pop();
            }
        }
    }
    go(&cols, n, k, 1, &mut stack, &mut sums, &mut best);
    best
}

/// Indices of the `k` largest scores; ties go to the lower index. Result is sorted.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

/// Row-sum, principal-eigenvector and greedy seeds, each refined by swap local search.
fn heuristic(obj: Objective<'_>, k: usize) -> Result<ScanResult> {
    let n = obj.n();
    let pair = match obj {
        Objective::Quadratic(a) => a.clone(),
        Objective::AbsSum(s) => {
            let f = s.mapv(|v| v as f64);
            f.t().dot(&f)
        }
    };
    let off_rowsum: Vec<f64> = (0..n).map(|i| pair.row(i).sum() - pair[[i, i]]).collect();
    let mut seeds = vec![top_k(&off_rowsum, k)];
    let (_, vec) = linalg::lambda_max(&pair)?;
    let abs: Vec<f64> = vec.iter().map(|v| v.abs()).collect();
    seeds.push(top_k(&abs, k));
    let mut best: Option<(f64, Vec<usize>)> = None;
    for seed in seeds {
        let cand = local_search(obj, seed);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let (value, subset) = best.unwrap();
    Ok(ScanResult { subset, value, exact: false })
}

/// Best-improvement single swaps until no swap increases the objective.
fn local_search(obj: Objective<'_>, mut subset: Vec<usize>) -> (f64, Vec<usize>) {
    let n = obj.n();
    let mut value = obj.value(&subset);
    for _ in 0..LOCAL_SEARCH_PASSES {
        let mut inside = vec![false; n];
        for &i in &subset {
            inside[i] = true;
        }
        let mut best_move: Option<(f64, Vec<usize>)> = None;
        for pos in 0..subset.len() {
            for j in (0..n).filter(|&j| !inside[j]) {
                let mut cand = subset.clone();
                cand[pos] = j;
                cand.sort_unstable();
                let v = obj.value(&cand);
                let cand = (v, cand);
                if v > value && best_move.as_ref().is_none_or(|b| better(&cand, b)) {
                    best_move = Some(cand);
                }
            }
        }
        match best_move {
            Some((v, s)) => {
                value = v;
                subset = s;
            }
            None => break,
        }
    }
    (value, subset)
}
