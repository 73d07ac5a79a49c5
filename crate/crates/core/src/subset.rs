//! Least-squares subset selection: exact per-size search by branch and
//! bound, and the forward, backward and sequential-replacement heuristics.
//!
//! All selectors fit an intercept plus the chosen columns. Equal-RSS ties
//! resolve towards the lowest column index (lexicographically first subset
//! for the exact search).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column count above which exhaustive search needs an explicit override.
pub const EXHAUSTIVE_MAX_P: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMethod {
    Exhaustive,
    Forward,
    Backward,
    Seqrep,
}

impl fmt::Display for SubsetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetMethod::Exhaustive => "exhaustive",
            SubsetMethod::Forward => "forward",
            SubsetMethod::Backward => "backward",
            SubsetMethod::Seqrep => "seqrep",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetEntry {
    /// Ascending column indices.
    pub terms: Vec<usize>,
    pub rss: f64,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSequence {
    pub per_size: BTreeMap<usize, SubsetEntry>,
    pub method: SubsetMethod,
}

impl SubsetSequence {
    /// Diagnostic CSV: size, rss, terms (space separated).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["method", "size", "rss", "terms"]).map_err(err)?;
        for (size, e) in &self.per_size {
            let terms: Vec<String> = e.terms.iter().map(usize::to_string).collect();
            w.write_record([
                self.method.to_string(),
                size.to_string(),
                e.rss.to_string(),
                terms.join(" "),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Relative pivot threshold below which a column is treated as a linear
/// combination of the columns before it.
const RANK_TOL: f64 = 1e-10;

/// Householder QR of the centred columns, reporting columns whose residual
/// norm after projecting out earlier ones is negligible.
fn centred_qr(x: &DMatrix<f64>, y: &[f64], subset: &[usize]) -> std::result::Result<OlsFit, Vec<usize>> {
    let n = x.nrows();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let k = subset.len();
    let mut means = Vec::with_capacity(k);
    let mut a = DMatrix::zeros(n, k);
    for (c, &j) in subset.iter().enumerate() {
        let col = x.column(j);
        let m = col.mean();
        means.push(m);
        for i in 0..n {
            a[(i, c)] = col[i] - m;
        }
    }
    let norms: Vec<f64> = (0..k).map(|c| a.column(c).norm()).collect();
    let mut collinear = Vec::new();
    for c in 0..k {
        // Householder reflection on rows c.. of column c.
        let alpha = a.view((c, c), (n - c, 1)).norm();
        if !(alpha > RANK_TOL * norms[c].max(f64::MIN_POSITIVE)) || norms[c] == 0.0 {
            collinear.push(subset[c]);
            continue;
        }
        let sign = if a[(c, c)] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = a.view((c, c), (n - c, 1)).into_owned();
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        for cc in c..k {
            let d = (0..n - c).map(|i| v[i] * a[(c + i, cc)]).sum::<f64>() * 2.0 / vnorm2;
            for i in 0..n - c {
                a[(c + i, cc)] -= d * v[i];
            }
        }
        let d = (0..n - c).map(|i| v[i] * yc[c + i]).sum::<f64>() * 2.0 / vnorm2;
        for i in 0..n - c {
            yc[c + i] -= d * v[i];
        }
    }
    if !collinear.is_empty() {
        return Err(collinear);
    }
    let mut beta = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|cc| a[(c, cc)] * beta[cc]).sum();
        beta[c] = (yc[c] - s) / a[(c, c)];
    }
    let rss = (k..n).map(|i| yc[i] * yc[i]).sum();
    let intercept = ybar - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(OlsFit {
        coefficients: beta,
        intercept,
        rss,
    })
}

/// Least squares with intercept on `subset` (columns in the given order).
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], subset: &[usize]) -> Result<OlsFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!("x has {n} rows but y has {}", y.len())));
    }
    if subset.len() >= n {
        return Err(Error::Precondition(format!(
            "subset of {} columns needs more than {n} observations",
            subset.len()
        )));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::Dimension(format!("column {j} out of range")));
    }
    centred_qr(x, y, subset).map_err(|columns| Error::RankDeficient { columns })
}

fn rss_or_inf(x: &DMatrix<f64>, y: &[f64], subset: &[usize]) -> f64 {
    match centred_qr(x, y, subset) {
        Ok(f) => f.rss,
        Err(_) => f64::INFINITY,
    }
}

fn entry(x: &DMatrix<f64>, y: &[f64], mut terms: Vec<usize>) -> Result<SubsetEntry> {
    terms.sort_unstable();
    let fit = ols_fit(x, y, &terms)?;
    Ok(SubsetEntry {
        terms,
        rss: fit.rss,
        coefficients: fit.coefficients,
        intercept: fit.intercept,
    })
}

fn check_common(x: &DMatrix<f64>, y: &[f64], size: usize) -> Result<()> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!("x has {n} rows but y has {}", y.len())));
    }
    if size >= n {
        return Err(Error::Precondition(format!(
            "subset size {size} must be below the {n} observations"
        )));
    }
    if size > x.ncols() {
        return Err(Error::Precondition(format!(
            "subset size {size} exceeds the {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

struct BranchBound<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    p: usize,
    n: usize,
    max_size: usize,
    best: Vec<(f64, Vec<usize>)>,
}

impl BranchBound<'_> {
    /// RSS of `set` plus every column from `next` on; a lower bound for
    /// any subset reachable from this node. Rank-deficient or oversized
    /// supersets are bounded by zero.
    fn bound(&self, set: &[usize], next: usize) -> f64 {
        let total = set.len() + (self.p - next);
        if total >= self.n {
            return 0.0;
        }
        let mut all = set.to_vec();
        all.extend(next..self.p);
        match centred_qr(self.x, self.y, &all) {
            Ok(f) => f.rss,
            Err(_) => 0.0,
        }
    }

    fn offer(&mut self, set: &[usize], rss: f64) {
        let slot = &mut self.best[set.len()];
        // Depth-first order visits subsets lexicographically, so a strict
        // comparison keeps the first of equal-RSS subsets.
        if rss < slot.0 {
            *slot = (rss, set.to_vec());
        }
    }

    fn search(&mut self, set: &mut Vec<usize>, next: usize) {
        if set.len() == self.max_size || next == self.p {
            return;
        }
        let lo = set.len() + 1;
        let hi = self.max_size.min(set.len() + self.p - next);
        let bound = self.bound(set, next);
        // Small margin so rounding in the bound never prunes a true winner.
        if (lo..=hi).all(|s| bound > self.best[s].0 * (1.0 + 1e-12)) {
            return;
        }
        for j in next..self.p {
            set.push(j);
            let rss = rss_or_inf(self.x, self.y, set);
            if rss.is_finite() {
                self.offer(set, rss);
                self.search(set, j + 1);
            }
            set.pop();
        }
    }
}

/// Exact RSS-optimal subset for every size `1..=max_size`.
///
/// Refuses more than [`EXHAUSTIVE_MAX_P`] columns unless `allow_large` is
/// set, since the search space grows as `2^p`.
pub fn exhaustive_best(
    x: &DMatrix<f64>,
    y: &[f64],
    max_size: usize,
    allow_large: bool,
) -> Result<SubsetSequence> {
    check_common(x, y, max_size)?;
    let p = x.ncols();
    if p > EXHAUSTIVE_MAX_P && !allow_large {
        return Err(Error::Precondition(format!(
            "exhaustive search over {p} columns is infeasible (2^{p} candidate models; \
             28 columns already give about 2.68e8); reduce the design or pass the override"
        )));
    }
    let mut bb = BranchBound {
        x,
        y,
        p,
        n: x.nrows(),
        max_size,
        best: vec![(f64::INFINITY, Vec::new()); max_size + 1],
    };
    bb.search(&mut Vec::new(), 0);
    let mut per_size = BTreeMap::new();
    for (size, (rss, terms)) in bb.best.into_iter().enumerate().skip(1) {
        if rss.is_finite() {
            per_size.insert(size, entry(x, y, terms)?);
        }
    }
    Ok(SubsetSequence {
        per_size,
        method: SubsetMethod::Exhaustive,
    })
}

/// Column outside `set` whose addition gives the smallest RSS.
fn best_addition(x: &DMatrix<f64>, y: &[f64], set: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut trial = set.to_vec();
    for j in 0..x.ncols() {
        if set.contains(&j) {
            continue;
        }
        trial.push(j);
        let rss = rss_or_inf(x, y, &trial);
        trial.pop();
        if rss.is_finite() && best.is_none_or(|(_, b)| rss < b) {
            best = Some((j, rss));
        }
    }
    best
}

pub fn forward_select(x: &DMatrix<f64>, y: &[f64], max_size: usize) -> Result<SubsetSequence> {
    check_common(x, y, max_size)?;
    let mut set = Vec::new();
    let mut per_size = BTreeMap::new();
    while set.len() < max_size {
        let Some((j, _)) = best_addition(x, y, &set) else { break };
        set.push(j);
        per_size.insert(set.len(), entry(x, y, set.clone())?);
    }
    Ok(SubsetSequence {
        per_size,
        method: SubsetMethod::Forward,
    })
}

/// Start from all columns and repeatedly remove the column whose removal
/// raises RSS least, recording sizes `p` down to `min_size`.
pub fn backward_select(x: &DMatrix<f64>, y: &[f64], min_size: usize) -> Result<SubsetSequence> {
    let (n, p) = x.shape();
    if p >= n {
        return Err(Error::Precondition(format!(
            "backward selection needs fewer columns ({p}) than observations ({n})"
        )));
    }
    let mut set: Vec<usize> = (0..p).collect();
    let mut per_size = BTreeMap::new();
    per_size.insert(p, entry(x, y, set.clone())?);
    while set.len() > min_size.max(1) {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..set.len() {
            let mut trial = set.clone();
            trial.remove(k);
            let rss = rss_or_inf(x, y, &trial);
            if best.is_none_or(|(bk, b)| rss < b || (rss == b && set[k] < set[bk])) {
                best = Some((k, rss));
            }
        }
        let (k, _) = best.expect("non-empty set");
        set.remove(k);
        per_size.insert(set.len(), entry(x, y, set.clone())?);
    }
    Ok(SubsetSequence {
        per_size,
        method: SubsetMethod::Backward,
    })
}

/// Forward steps, each followed by single-column swaps while any swap
/// strictly lowers RSS at the current size.
///
/// Each size starts from whichever is better of the extended previous
/// subset and the plain forward subset of that size, so the result is never
/// worse than forward selection.
pub fn seqrep_select(x: &DMatrix<f64>, y: &[f64], max_size: usize) -> Result<SubsetSequence> {
    check_common(x, y, max_size)?;
    let p = x.ncols();
    let forward = forward_select(x, y, max_size)?;
    let mut set: Vec<usize> = Vec::new();
    let mut per_size = BTreeMap::new();
    while set.len() < max_size {
        let Some((j, mut rss)) = best_addition(x, y, &set) else { break };
        set.push(j);
        if let Some(f) = forward.per_size.get(&set.len()) {
            if f.rss < rss {
                set = f.terms.clone();
                rss = f.rss;
            }
        }
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for k in 0..set.len() {
                for cand in 0..p {
                    if set.contains(&cand) {
                        continue;
                    }
                    let mut trial = set.clone();
                    trial[k] = cand;
                    let r = rss_or_inf(x, y, &trial);
                    if r < rss && best.is_none_or(|(_, _, b)| r < b) {
                        best = Some((k, cand, r));
                    }
                }
            }
            match best {
                // Require a relative gain so rounding cannot cycle swaps.
                Some((k, cand, r)) if r < rss * (1.0 - 1e-12) => {
                    set[k] = cand;
                    rss = r;
                }
                _ => break,
            }
        }
        per_size.insert(set.len(), entry(x, y, set.clone())?);
    }
    Ok(SubsetSequence {
        per_size,
        method: SubsetMethod::Seqrep,
    })
}
