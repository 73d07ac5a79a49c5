//! Repeated train/validation model selection and inverse-error model
//! averaging.
//!
//! Each split standardises its training rows, runs a selector to obtain a
//! sequence of candidate models, and keeps the candidate with the smallest
//! validation sum of squared errors. Members are weighted by
//! `W_i = (1 / sse_i) / sum_k (1 / sse_k)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{column_center_norm, is_degenerate, prefilter_mccm, standardize, DesignMatrix};
use crate::error::{Error, Result};
use crate::lar::{lar_path, predict, FittedModel, LarConfig, Variant};
use crate::stats::{mean, quantile_sorted, sort_floats};
use crate::subset::{
    backward_select, exhaustive_best, forward_select, seqrep_select, SubsetSequence,
};

/// Mix a master seed with a stream label (splitmix64 finaliser).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream labels for [`derive_seed`].
pub const STREAM_SPLITS: u64 = 1;
pub const STREAM_MCCM: u64 = 2;
pub const STREAM_SPATIAL_MCCM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

/// `m` distinct splits with `train_size` training rows, drawn uniformly by
/// rejection against previously drawn training sets.
pub fn generate_splits(n: usize, train_size: usize, m: usize, seed: u64) -> Result<Vec<Split>> {
    if train_size < 2 || train_size >= n {
        return Err(Error::Parameter(format!(
            "train_size must satisfy 2 <= train_size < n = {n}, got {train_size}"
        )));
    }
    let available = binomial(n, train_size);
    if (m as u128) > available {
        return Err(Error::Parameter(format!(
            "{m} splits requested but only {available} distinct splits of {n} into {train_size} exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(m);
    let mut splits = Vec::with_capacity(m);
    while splits.len() < m {
        let mut train = rand::seq::index::sample(&mut rng, n, train_size).into_vec();
        train.sort_unstable();
        if seen.insert(train.clone()) {
            let mut in_train = vec![false; n];
            for &i in &train {
                in_train[i] = true;
            }
            let valid = (0..n).filter(|&i| !in_train[i]).collect();
            splits.push(Split {
                train_idx: train,
                valid_idx: valid,
            });
        }
    }
    Ok(splits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selector {
    LassoLar,
    Exhaustive,
    Forward,
    Backward,
    Seqrep,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::LassoLar => "lasso_lar",
            Selector::Exhaustive => "exhaustive",
            Selector::Forward => "forward",
            Selector::Backward => "backward",
            Selector::Seqrep => "seqrep",
        })
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lasso_lar" => Ok(Selector::LassoLar),
            "exhaustive" => Ok(Selector::Exhaustive),
            "forward" => Ok(Selector::Forward),
            "backward" => Ok(Selector::Backward),
            "seqrep" => Ok(Selector::Seqrep),
            other => Err(format!(
                "unknown selector `{other}` (expected lasso_lar, exhaustive, forward, backward or seqrep)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub selector: Selector,
    pub corr_tol: f64,
    pub max_steps: Option<usize>,
    /// Largest subset size for the OLS selectors; defaults to
    /// `min(p, train_size - 2)`.
    pub max_size: Option<usize>,
    /// Permit exhaustive search beyond the column guard.
    pub allow_large: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            selector: Selector::LassoLar,
            corr_tol: 0.0,
            max_steps: None,
            max_size: None,
            allow_large: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split_id: usize,
    pub split: Split,
    /// Term indices refer to columns of the full design.
    pub model: FittedModel,
    /// Observed minus predicted on the validation rows.
    pub vsepe: Vec<f64>,
    pub sse: f64,
    /// Path step (LAR) or subset size (OLS selectors) of the chosen model.
    pub chosen_step: usize,
    pub train_rss: f64,
    /// Columns constant within this training set, excluded for the split.
    pub dropped: Vec<usize>,
}

struct Candidate {
    model: FittedModel,
    step: usize,
}

fn subset_candidates(seq: SubsetSequence, intercept: f64) -> Vec<Candidate> {
    let mut out = vec![Candidate {
        model: FittedModel::intercept_only(intercept),
        step: 0,
    }];
    for (size, e) in seq.per_size {
        let k = e.terms.len();
        out.push(Candidate {
            model: FittedModel {
                terms: e.terms,
                coefficients: e.coefficients,
                intercept: e.intercept,
                standardization: crate::design::Standardization::identity(k),
            },
            step: size,
        });
    }
    out
}

fn candidates(z: &DMatrix<f64>, y: &[f64], cfg: &SelectorConfig) -> Result<Vec<Candidate>> {
    let (n, p) = z.shape();
    let ybar = mean(y);
    let max_size = cfg.max_size.unwrap_or(p.min(n.saturating_sub(2))).min(p);
    match cfg.selector {
        Selector::LassoLar => {
            let path = lar_path(
                z,
                y,
                &LarConfig {
                    variant: Variant::Lasso,
                    corr_tol: cfg.corr_tol,
                    max_steps: cfg.max_steps,
                },
            )?;
            (0..path.len())
                .map(|k| Ok(Candidate { model: path.model_at(k)?, step: k }))
                .collect()
        }
        Selector::Exhaustive => Ok(subset_candidates(
            exhaustive_best(z, y, max_size, cfg.allow_large)?,
            ybar,
        )),
        Selector::Forward => Ok(subset_candidates(forward_select(z, y, max_size)?, ybar)),
        Selector::Seqrep => Ok(subset_candidates(seqrep_select(z, y, max_size)?, ybar)),
        Selector::Backward => Ok(subset_candidates(backward_select(z, y, 1)?, ybar)),
    }
}

fn sse_of(model: &FittedModel, z: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let pred = predict(model, z)?;
    let e: Vec<f64> = y.iter().zip(&pred).map(|(o, p)| o - p).collect();
    let sse = e.iter().map(|v| v * v).sum();
    Ok((e, sse))
}

/// Select one model on a single split.
pub fn run_split(
    design: &DesignMatrix,
    y: &[f64],
    split: &Split,
    split_id: usize,
    cfg: &SelectorConfig,
) -> Result<SplitResult> {
    if y.len() != design.nrows() {
        return Err(Error::Dimension(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            y.len()
        )));
    }
    let train = design.select_rows(&split.train_idx);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..train.ncols() {
        let (_, centered, raw) = column_center_norm(&train.values, j);
        if is_degenerate(centered, raw) {
            dropped.push(j);
        } else {
            kept.push(j);
        }
    }
    if !dropped.is_empty() {
        log::debug!("split {split_id}: {} columns constant in training rows", dropped.len());
    }
    let train = train.select_columns(&kept);
    let (z_train, stats) = standardize(&train)?;
    let valid_raw = design.values.select_rows(&split.valid_idx).select_columns(&kept);
    let z_valid = crate::design::mirror(&valid_raw, &stats)?;
    let y_train: Vec<f64> = split.train_idx.iter().map(|&i| y[i]).collect();
    let y_valid: Vec<f64> = split.valid_idx.iter().map(|&i| y[i]).collect();

    let cands = candidates(&z_train.values, &y_train, cfg)
        .map_err(|e| e.context(format!("split {split_id}")))?;
    let mut best: Option<(f64, usize, usize, Vec<f64>)> = None;
    for (ci, c) in cands.iter().enumerate() {
        let (e, sse) = sse_of(&c.model, &z_valid, &y_valid)?;
        let size = c.model.size();
        let better = match &best {
            None => true,
            Some((b, bsize, _, _)) => sse < *b || (sse == *b && size < *bsize),
        };
        if better {
            best = Some((sse, size, ci, e));
        }
    }
    let (sse, _, ci, vsepe) = best.expect("candidate list includes the empty model");
    let chosen = &cands[ci];
    let (_, train_rss) = sse_of(&chosen.model, &z_train.values, &y_train)?;
    let model = chosen.model.clone().remap(&kept, &stats);
    Ok(SplitResult {
        split_id,
        split: split.clone(),
        model,
        vsepe,
        sse,
        chosen_step: chosen.step,
        train_rss,
        dropped,
    })
}

/// Inverse-SSE weights. With `floor = None` a zero SSE is an error;
/// otherwise SSEs are clamped below at the floor.
pub fn inverse_sse_weights(sse: &[f64], floor: Option<f64>) -> Result<Vec<f64>> {
    if sse.is_empty() {
        return Err(Error::Parameter("no ensemble members".into()));
    }
    let mut inv = Vec::with_capacity(sse.len());
    for (i, &s) in sse.iter().enumerate() {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Numeric(format!("split {i} has invalid SSE {s}")));
        }
        let s = match floor {
            Some(f) => s.max(f),
            None => s,
        };
        if s == 0.0 {
            return Err(Error::DegenerateWeight { split: i });
        }
        inv.push(1.0 / s);
    }
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

pub fn ensemble_weights(results: &[SplitResult], floor: Option<f64>) -> Result<Vec<f64>> {
    let sse: Vec<f64> = results.iter().map(|r| r.sse).collect();
    inverse_sse_weights(&sse, floor)
}

pub const DEFAULT_SSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub results: Vec<SplitResult>,
    pub weights: Vec<f64>,
}

impl Ensemble {
    pub fn from_results(results: Vec<SplitResult>, floor: Option<f64>) -> Result<Self> {
        let weights = ensemble_weights(&results, floor)?;
        Ok(Self { results, weights })
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &FittedModel> {
        self.results.iter().map(|r| &r.model)
    }

    /// CSV: split_id, chosen_size, train_rss, valid_sse, weight.
    pub fn write_report(&self, path: &Path) -> Result<()> {
        let err = csv_err(path);
        let mut w = csv::Writer::from_path(path).map_err(&err)?;
        w.write_record(["split_id", "chosen_size", "train_rss", "valid_sse", "weight"])
            .map_err(&err)?;
        for (r, wt) in self.results.iter().zip(&self.weights) {
            w.write_record([
                r.split_id.to_string(),
                r.model.size().to_string(),
                r.train_rss.to_string(),
                r.sse.to_string(),
                wt.to_string(),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub train_size: usize,
    pub n_splits: usize,
    pub selector: SelectorConfig,
    pub sse_floor: Option<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            train_size: 35,
            n_splits: 500,
            selector: SelectorConfig::default(),
            sse_floor: Some(DEFAULT_SSE_FLOOR),
        }
    }
}

/// Run every split (in parallel) and weight the chosen models.
pub fn fit_ensemble(
    design: &DesignMatrix,
    y: &[f64],
    splits: &[Split],
    cfg: &CvConfig,
) -> Result<Ensemble> {
    let results = splits
        .par_iter()
        .enumerate()
        .map(|(k, s)| run_split(design, y, s, k, &cfg.selector))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_results(results, cfg.sse_floor)
}

/// Member predictions as a rows x members matrix.
pub fn member_predictions(ens: &Ensemble, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = ens
        .results
        .par_iter()
        .map(|r| predict(&r.model, x_raw).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Ok(DMatrix::zeros(x_raw.nrows(), 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Weighted row sums of a member matrix, accumulated in member order.
pub fn weighted_average(members: &DMatrix<f64>, weights: &[f64]) -> Vec<f64> {
    (0..members.nrows())
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .fold(0.0, |acc, (k, w)| acc + w * members[(i, k)])
        })
        .collect()
}

pub fn model_averaged_predict(ens: &Ensemble, x_raw: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(weighted_average(&member_predictions(ens, x_raw)?, &ens.weights))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Parameter("no values to summarise".into()));
    }
    let mut v = values.to_vec();
    sort_floats(&mut v);
    Ok(Summary {
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        mean: mean(&v),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

/// Summary of absolute validation errors pooled over all splits.
pub fn vsepe_summary(ens: &Ensemble) -> Result<Summary> {
    let abs: Vec<f64> = ens
        .results
        .iter()
        .flat_map(|r| r.vsepe.iter().map(|e| e.abs()))
        .collect();
    summarize(&abs)
}

/// `1 - SSE / SST`.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.len() < 2 {
        return Err(Error::Dimension(format!(
            "r_squared needs equal lengths >= 2, got {} and {}",
            observed.len(),
            predicted.len()
        )));
    }
    let m = mean(observed);
    let sst: f64 = observed.iter().map(|o| (o - m).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Numeric("observed values are constant".into()));
    }
    let sse: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// `(column, count)` sorted by descending count then column index. Columns
/// never selected appear only when `include_zeros` is set (needs `p`).
pub fn selection_frequency(ens: &Ensemble, p: usize, include_zeros: bool) -> Vec<(usize, usize)> {
    let mut counts = vec![0usize; p];
    for m in ens.models() {
        for &t in &m.terms {
            if t < p {
                counts[t] += 1;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| include_zeros || c > 0)
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

pub fn subset_size_histogram(ens: &Ensemble) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for m in ens.models() {
        *h.entry(m.size()).or_insert(0) += 1;
    }
    h
}

pub fn write_frequency_csv(path: &Path, freq: &[(usize, usize)], labels: &[String]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["term", "count"]).map_err(&err)?;
    for (j, c) in freq {
        w.write_record([labels[*j].as_str(), &c.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_histogram_csv(path: &Path, hist: &BTreeMap<usize, usize>) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["size", "count"]).map_err(&err)?;
    for (s, c) in hist {
        w.write_record([s.to_string(), c.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub train_size: usize,
    pub mccm: f64,
    pub summary: Summary,
    pub r2: f64,
}

/// CSV: method, mccm, min, q1, median, mean, q3, max, r2. With
/// `with_train_size` a train_size column follows method.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow], with_train_size: bool) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header = vec!["method"];
    if with_train_size {
        header.push("train_size");
    }
    header.extend(["mccm", "min", "q1", "median", "mean", "q3", "max", "r2"]);
    w.write_record(&header).map_err(&err)?;
    for r in rows {
        let s = &r.summary;
        let mut rec = vec![r.method.clone()];
        if with_train_size {
            rec.push(r.train_size.to_string());
        }
        rec.extend(
            [r.mccm, s.min, s.q1, s.median, s.mean, s.q3, s.max, r.r2]
                .iter()
                .map(|v| v.to_string()),
        );
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Output of the covariate stage for one configuration.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    /// Design after correlation filtering.
    pub design: DesignMatrix,
    pub drops: Vec<crate::design::DropRecord>,
    pub splits: Vec<Split>,
    pub ensemble: Ensemble,
    /// Model-averaged predictions at the observation rows.
    pub fitted: Vec<f64>,
    pub row: SummaryRow,
}

/// Filter an expanded design at `mccm`, fit the ensemble and summarise.
pub fn run_pipeline(
    expanded: &DesignMatrix,
    y: &[f64],
    mccm: f64,
    cv: &CvConfig,
    seed: u64,
) -> Result<PipelineRun> {
    let (design, drops) = prefilter_mccm(expanded, mccm, derive_seed(seed, STREAM_MCCM))?;
    let splits = generate_splits(
        y.len(),
        cv.train_size,
        cv.n_splits,
        derive_seed(seed, STREAM_SPLITS),
    )?;
    let ensemble = fit_ensemble(&design, y, &splits, cv)?;
    let fitted = model_averaged_predict(&ensemble, &design.values)?;
    let row = SummaryRow {
        method: cv.selector.selector.to_string(),
        train_size: cv.train_size,
        mccm,
        summary: vsepe_summary(&ensemble)?,
        r2: r_squared(y, &fitted)?,
    };
    Ok(PipelineRun {
        design,
        drops,
        splits,
        ensemble,
        fitted,
        row,
    })
}

/// Run the pipeline over a grid of `(train_size, mccm)` configurations.
pub fn sweep(
    expanded: &DesignMatrix,
    y: &[f64],
    configs: &[(usize, f64)],
    cv: &CvConfig,
    seed: u64,
) -> Result<Vec<SummaryRow>> {
    configs
        .iter()
        .map(|&(train_size, mccm)| {
            let cfg = CvConfig { train_size, ..*cv };
            run_pipeline(expanded, y, mccm, &cfg, seed)
                .map(|r| r.row)
                .map_err(|e| e.context(format!("train_size={train_size}, mccm={mccm}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{expansion_terms, TermMeta};

    fn linear_terms(p: usize) -> Vec<TermMeta> {
        expansion_terms(&(0..p).map(|j| format!("x{j}")).collect::<Vec<_>>(), &vec![1; p], 1, false)
    }

    fn design(seed: u64, n: usize, p: usize) -> DesignMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        DesignMatrix::from_terms(linear_terms(p), &raw)
    }

    #[test]
    fn splits_exhaust_small_space() {
        let s = generate_splits(4, 2, 6, 1).unwrap();
        let set: HashSet<_> = s.iter().map(|s| s.train_idx.clone()).collect();
        assert_eq!(set.len(), 6);
        for sp in &s {
            assert_eq!(sp.valid_idx.len(), 2);
            assert!(sp.train_idx.iter().all(|i| !sp.valid_idx.contains(i)));
        }
        assert!(generate_splits(4, 2, 7, 1).is_err());
        assert!(generate_splits(4, 4, 1, 1).is_err());
        assert_eq!(generate_splits(60, 35, 50, 3).unwrap(), generate_splits(60, 35, 50, 3).unwrap());
    }

    #[test]
    fn large_binomial_does_not_overflow() {
        assert!(binomial(60, 30) > 1_000_000_000);
        assert_eq!(binomial(5, 2), 10);
    }

    #[test]
    fn worked_weights() {
        let w = inverse_sse_weights(&[1.0, 3.0], None).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        let w = inverse_sse_weights(&[2.0; 4], None).unwrap();
        assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(matches!(
            inverse_sse_weights(&[0.0, 1.0], None),
            Err(Error::DegenerateWeight { split: 0 })
        ));
        let w = inverse_sse_weights(&[0.0, 1.0], Some(1e-12)).unwrap();
        assert!(w[0] > 0.999_999);
    }

    #[test]
    fn exact_term_recovered_by_every_selector() {
        let d = design(3, 20, 5);
        let y: Vec<f64> = (0..20).map(|i| 2.0 + 3.0 * d.values[(i, 2)]).collect();
        let split = generate_splits(20, 12, 1, 5).unwrap().remove(0);
        for sel in [
            Selector::LassoLar,
            Selector::Exhaustive,
            Selector::Forward,
            Selector::Backward,
            Selector::Seqrep,
        ] {
            let cfg = SelectorConfig { selector: sel, ..Default::default() };
            let r = run_split(&d, &y, &split, 0, &cfg).unwrap();
            assert!(r.model.terms.contains(&2), "{sel}");
            assert!(r.sse < 1e-18, "{sel}: {}", r.sse);
            let s: f64 = r.vsepe.iter().map(|e| e * e).sum();
            assert!((s - r.sse).abs() <= 1e-12);
        }
    }

    #[test]
    fn chosen_is_argmin_of_path() {
        let d = design(8, 20, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand_distr::{Distribution, StandardNormal};
        let y: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
        let split = generate_splits(20, 12, 1, 2).unwrap().remove(0);
        let r = run_split(&d, &y, &split, 0, &SelectorConfig::default()).unwrap();
        // Enumerate the path directly on the standardised training rows.
        let train = d.select_rows(&split.train_idx);
        let (z, stats) = standardize(&train).unwrap();
        let yt: Vec<f64> = split.train_idx.iter().map(|&i| y[i]).collect();
        let path = lar_path(&z.values, &yt, &LarConfig::default()).unwrap();
        let zv = crate::design::mirror(&d.values.select_rows(&split.valid_idx), &stats).unwrap();
        let yv: Vec<f64> = split.valid_idx.iter().map(|&i| y[i]).collect();
        let sses: Vec<f64> = (0..path.len())
            .map(|k| sse_of(&path.model_at(k).unwrap(), &zv, &yv).unwrap().1)
            .collect();
        let min = sses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.sse, min);
        assert_eq!(sses[r.chosen_step], min);
        assert!(r.sse <= sses[0]);
    }

    #[test]
    fn constant_training_column_dropped() {
        let mut d = design(4, 10, 3);
        let split = Split {
            train_idx: (0..6).collect(),
            valid_idx: (6..10).collect(),
        };
        for i in 0..6 {
            d.values[(i, 1)] = 7.0;
        }
        let y: Vec<f64> = (0..10).map(|i| d.values[(i, 0)]).collect();
        let r = run_split(&d, &y, &split, 0, &SelectorConfig::default()).unwrap();
        assert_eq!(r.dropped, vec![1]);
        assert!(!r.model.terms.contains(&1));
    }

    fn const_model(c: f64) -> FittedModel {
        FittedModel::intercept_only(c)
    }

    fn fake_result(model: FittedModel, sse: f64) -> SplitResult {
        SplitResult {
            split_id: 0,
            split: Split { train_idx: vec![], valid_idx: vec![] },
            model,
            vsepe: vec![sse.sqrt()],
            sse,
            chosen_step: 0,
            train_rss: 0.0,
            dropped: vec![],
        }
    }

    #[test]
    fn averaging_constants() {
        let ens = Ensemble::from_results(
            vec![fake_result(const_model(0.0), 1.0), fake_result(const_model(1.0), 3.0)],
            None,
        )
        .unwrap();
        let p = model_averaged_predict(&ens, &DMatrix::zeros(3, 0)).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn summaries() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.min, s.median, s.mean, s.max), (1.0, 2.5, 2.5, 4.0));
        let s = summarize(&[0.5]).unwrap();
        assert_eq!([s.min, s.q1, s.median, s.mean, s.q3, s.max], [0.5; 6]);
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn frequency_and_histogram_counting() {
        let m = |terms: Vec<usize>| FittedModel {
            coefficients: vec![1.0; terms.len()],
            standardization: crate::design::Standardization::identity(terms.len()),
            terms,
            intercept: 0.0,
        };
        let ens = Ensemble::from_results(
            vec![
                fake_result(m(vec![0]), 1.0),
                fake_result(m(vec![0, 1]), 1.0),
                fake_result(m(vec![1]), 1.0),
            ],
            None,
        )
        .unwrap();
        assert_eq!(selection_frequency(&ens, 3, false), vec![(0, 2), (1, 2)]);
        assert_eq!(selection_frequency(&ens, 3, true), vec![(0, 2), (1, 2), (2, 0)]);
        let h = subset_size_histogram(&ens);
        assert_eq!(h, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(h.values().sum::<usize>(), 3);
    }

    #[test]
    fn sweep_grid_cardinality() {
        let d = design(1, 30, 4);
        let y: Vec<f64> = (0..30).map(|i| d.values[(i, 0)] + 0.1 * i as f64).collect();
        let cv = CvConfig { n_splits: 10, train_size: 20, ..Default::default() };
        let configs: Vec<(usize, f64)> = [15, 20, 25]
            .iter()
            .flat_map(|&t| [0.4, 0.6, 0.8, 0.95].map(|m| (t, m)))
            .collect();
        let rows = sweep(&d, &y, &configs, &cv, 4).unwrap();
        assert_eq!(rows.len(), 12);
        let direct = run_pipeline(&d, &y, 0.6, &CvConfig { train_size: 20, ..cv }, 4).unwrap();
        assert_eq!(rows[5], direct.row);
    }
}
