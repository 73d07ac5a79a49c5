//! Design matrices: polynomial and interaction expansion of realigned
//! covariates, spatial trend-surface terms, standardisation, and greedy
//! correlation filtering with source-priority rules.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::GeoPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Linear,
    Power,
    Interaction,
    SpatialPower,
    SpatialInteraction,
}

impl TermKind {
    pub fn is_interaction(self) -> bool {
        matches!(self, TermKind::Interaction | TermKind::SpatialInteraction)
    }
}

/// One design column: `base_a^order_a` or `base_a^order_a * base_b^order_b`.
/// Bases index the input table the term is evaluated against (covariate
/// columns, or the two normalised coordinate axes for spatial terms).
#[derive(Debug, Clone, PartialEq)]
pub struct TermMeta {
    pub label: String,
    pub kind: TermKind,
    pub base_a: usize,
    pub name_a: String,
    pub order_a: u32,
    pub base_b: Option<usize>,
    pub name_b: Option<String>,
    pub order_b: Option<u32>,
    /// Source priority (lower preferred). Interactions take the coarser of
    /// their two sources.
    pub source_rank: u32,
}

fn power_label(name: &str, order: u32) -> String {
    if order == 1 {
        name.to_string()
    } else {
        format!("{name}^{order}")
    }
}

impl TermMeta {
    fn single(kind: TermKind, base: usize, name: &str, order: u32, rank: u32) -> Self {
        Self {
            label: power_label(name, order),
            kind,
            base_a: base,
            name_a: name.to_string(),
            order_a: order,
            base_b: None,
            name_b: None,
            order_b: None,
            source_rank: rank,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn product(
        kind: TermKind,
        a: usize,
        name_a: &str,
        order_a: u32,
        b: usize,
        name_b: &str,
        order_b: u32,
        rank: u32,
    ) -> Self {
        Self {
            label: format!("{}:{}", power_label(name_a, order_a), power_label(name_b, order_b)),
            kind,
            base_a: a,
            name_a: name_a.to_string(),
            order_a,
            base_b: Some(b),
            name_b: Some(name_b.to_string()),
            order_b: Some(order_b),
            source_rank: rank,
        }
    }

    pub fn total_order(&self) -> u32 {
        self.order_a + self.order_b.unwrap_or(0)
    }

    pub fn kind_rank(&self) -> u8 {
        u8::from(self.kind.is_interaction())
    }

    pub fn evaluate(&self, inputs: &[f64]) -> f64 {
        let a = inputs[self.base_a].powi(self.order_a as i32);
        match (self.base_b, self.order_b) {
            (Some(b), Some(ob)) => a * inputs[b].powi(ob as i32),
            _ => a,
        }
    }
}

/// Per-column centre and scale used to standardise a training matrix and
/// to mirror the same transform onto new rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            centers: vec![0.0; p],
            scales: vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn subset(&self, cols: &[usize]) -> Self {
        Self {
            centers: cols.iter().map(|&j| self.centers[j]).collect(),
            scales: cols.iter().map(|&j| self.scales[j]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub columns: Vec<TermMeta>,
    /// n x p
    pub values: DMatrix<f64>,
    pub standardization: Option<Standardization>,
}

impl DesignMatrix {
    /// Evaluate `terms` on every row of `inputs`.
    pub fn from_terms(terms: Vec<TermMeta>, inputs: &DMatrix<f64>) -> Self {
        let n = inputs.nrows();
        let mut values = DMatrix::zeros(n, terms.len());
        let mut row = vec![0.0; inputs.ncols()];
        for i in 0..n {
            for (k, v) in inputs.row(i).iter().enumerate() {
                row[k] = *v;
            }
            for (j, t) in terms.iter().enumerate() {
                values[(i, j)] = t.evaluate(&row);
            }
        }
        Self {
            columns: terms,
            values,
            standardization: None,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select_columns(cols),
            standardization: self.standardization.as_ref().map(|s| s.subset(cols)),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: self.columns.clone(),
            values: self.values.select_rows(rows),
            standardization: self.standardization.clone(),
        }
    }

    /// CSV with one column per term; optional leading columns (e.g.
    /// coordinates and response) are prepended.
    pub fn write_csv(
        &self,
        path: &std::path::Path,
        leading: &[(&str, Vec<f64>)],
    ) -> Result<()> {
        let err = |e: csv::Error| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header: Vec<String> = leading.iter().map(|(h, _)| h.to_string()).collect();
        header.extend(self.labels());
        w.write_record(&header).map_err(err)?;
        for i in 0..self.nrows() {
            let mut rec: Vec<String> = leading.iter().map(|(_, v)| v[i].to_string()).collect();
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Powers `1..=max_order` of every covariate, then (optionally) products of
/// all unordered pairs of linear terms.
pub fn expansion_terms(names: &[String], ranks: &[u32], max_order: u32, pairwise: bool) -> Vec<TermMeta> {
    let p = names.len();
    let mut terms = Vec::with_capacity(p * max_order as usize + p * p.saturating_sub(1) / 2);
    for (j, name) in names.iter().enumerate() {
        for order in 1..=max_order {
            let kind = if order == 1 { TermKind::Linear } else { TermKind::Power };
            terms.push(TermMeta::single(kind, j, name, order, ranks[j]));
        }
    }
    if pairwise {
        for a in 0..p {
            for b in (a + 1)..p {
                terms.push(TermMeta::product(
                    TermKind::Interaction,
                    a,
                    &names[a],
                    1,
                    b,
                    &names[b],
                    1,
                    ranks[a].max(ranks[b]),
                ));
            }
        }
    }
    terms
}

pub fn expand_terms(
    realigned: &DMatrix<f64>,
    names: &[String],
    ranks: &[u32],
    max_order: u32,
    pairwise: bool,
) -> Result<DesignMatrix> {
    if names.len() != realigned.ncols() || ranks.len() != names.len() {
        return Err(Error::Dimension(format!(
            "{} covariate columns but {} names and {} ranks",
            realigned.ncols(),
            names.len(),
            ranks.len()
        )));
    }
    if names.is_empty() || realigned.nrows() < 2 || max_order == 0 {
        return Err(Error::Parameter(
            "expansion needs at least one covariate, two rows and max_order >= 1".into(),
        ));
    }
    let terms = expansion_terms(names, ranks, max_order, pairwise);
    Ok(DesignMatrix::from_terms(terms, realigned))
}

/// Polynomial trend-surface basis in easting and northing. Coordinates are
/// centred and scaled by their sample standard deviation before powering.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBasis {
    pub center: GeoPoint,
    pub scale_e: f64,
    pub scale_n: f64,
    pub terms: Vec<TermMeta>,
}

impl SpatialBasis {
    pub const DEFAULT_SINGLE_MAX: u32 = 12;
    pub const DEFAULT_INTER_TOTAL_MAX: u32 = 6;

    pub fn fit(coords: &[GeoPoint], single_max: u32, inter_total_max: u32) -> Result<Self> {
        let distinct = |f: fn(&GeoPoint) -> f64| {
            let first = coords.first().map(f);
            coords.iter().any(|c| Some(f(c)) != first)
        };
        if coords.len() < 2 || !distinct(|c| c.easting) || !distinct(|c| c.northing) {
            return Err(Error::Precondition(
                "spatial design needs at least two distinct eastings and northings".into(),
            ));
        }
        let e: Vec<f64> = coords.iter().map(|c| c.easting).collect();
        let n: Vec<f64> = coords.iter().map(|c| c.northing).collect();
        let (me, mn) = (crate::stats::mean(&e), crate::stats::mean(&n));
        let sd = |x: &[f64], m: f64| {
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
        };

        let mut terms = Vec::new();
        for a in 1..=single_max {
            terms.push(TermMeta::single(TermKind::SpatialPower, 0, "E", a, 0));
        }
        for b in 1..=single_max {
            terms.push(TermMeta::single(TermKind::SpatialPower, 1, "N", b, 0));
        }
        for a in 1..inter_total_max {
            for b in 1..=(inter_total_max - a) {
                terms.push(TermMeta::product(
                    TermKind::SpatialInteraction,
                    0,
                    "E",
                    a,
                    1,
                    "N",
                    b,
                    0,
                ));
            }
        }
        Ok(Self {
            center: GeoPoint::new(me, mn),
            scale_e: sd(&e, me),
            scale_n: sd(&n, mn),
            terms,
        })
    }

    pub fn normalized(&self, coords: &[GeoPoint]) -> DMatrix<f64> {
        DMatrix::from_fn(coords.len(), 2, |i, k| {
            if k == 0 {
                (coords[i].easting - self.center.easting) / self.scale_e
            } else {
                (coords[i].northing - self.center.northing) / self.scale_n
            }
        })
    }

    /// Design rows for arbitrary coordinates under this basis' normalisation.
    pub fn design(&self, coords: &[GeoPoint]) -> DesignMatrix {
        DesignMatrix::from_terms(self.terms.clone(), &self.normalized(coords))
    }
}

pub fn spatial_design(coords: &[GeoPoint], single_max: u32, inter_total_max: u32) -> Result<DesignMatrix> {
    Ok(SpatialBasis::fit(coords, single_max, inter_total_max)?.design(coords))
}

/// Relative size below which a centred column counts as constant.
const DEGENERATE_TOL: f64 = 1e-12;

pub(crate) fn column_center_norm(values: &DMatrix<f64>, j: usize) -> (f64, f64, f64) {
    let col = values.column(j);
    let mean = col.mean();
    let centered = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    (mean, centered, col.norm())
}

pub(crate) fn is_degenerate(centered: f64, raw: f64) -> bool {
    !(centered > DEGENERATE_TOL * raw) || centered == 0.0
}

/// Centre each column by its mean and divide by its centred Euclidean norm.
pub fn standardize(d: &DesignMatrix) -> Result<(DesignMatrix, Standardization)> {
    let p = d.ncols();
    let mut centers = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let (mean, centered, raw) = column_center_norm(&d.values, j);
        if is_degenerate(centered, raw) {
            return Err(Error::DegenerateColumn(d.columns[j].label.clone()));
        }
        centers.push(mean);
        scales.push(centered);
    }
    let stats = Standardization { centers, scales };
    let values = mirror(&d.values, &stats)?;
    Ok((
        DesignMatrix {
            columns: d.columns.clone(),
            values,
            standardization: Some(stats.clone()),
        },
        stats,
    ))
}

/// Apply training statistics to new raw rows.
pub fn mirror(raw: &DMatrix<f64>, stats: &Standardization) -> Result<DMatrix<f64>> {
    if raw.ncols() != stats.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} columns, standardization has {}",
            raw.ncols(),
            stats.len()
        )));
    }
    Ok(DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, j| {
        (raw[(i, j)] - stats.centers[j]) / stats.scales[j]
    }))
}

/// Which priority rule decided a filtering drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterRule {
    /// Column has zero variance.
    Constant,
    /// Finer-resolution / preferred source kept.
    SourceRank,
    /// Single-term polynomial kept over interaction.
    TermKind,
    /// Lower total polynomial order kept.
    Order,
    /// Seeded random tie-break.
    Random,
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterRule::Constant => "constant",
            FilterRule::SourceRank => "source_rank",
            FilterRule::TermKind => "term_kind",
            FilterRule::Order => "order",
            FilterRule::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropRecord {
    pub dropped: String,
    pub kept: String,
    pub abs_r: f64,
    pub rule: FilterRule,
}

pub fn write_drop_log(path: &std::path::Path, log: &[DropRecord]) -> Result<()> {
    let err = |e: csv::Error| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["dropped_term", "kept_term", "abs_r", "rule"]).map_err(err)?;
    for r in log {
        w.write_record([
            r.dropped.as_str(),
            r.kept.as_str(),
            &r.abs_r.to_string(),
            &r.rule.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Compare two terms by filtering priority; `Less` means `a` is kept.
fn compare_priority(a: &TermMeta, ta: u64, b: &TermMeta, tb: u64) -> (Ordering, FilterRule) {
    let steps = [
        (a.source_rank.cmp(&b.source_rank), FilterRule::SourceRank),
        (a.kind_rank().cmp(&b.kind_rank()), FilterRule::TermKind),
        (a.total_order().cmp(&b.total_order()), FilterRule::Order),
        (ta.cmp(&tb), FilterRule::Random),
    ];
    steps
        .into_iter()
        .find(|(o, _)| *o != Ordering::Equal)
        .unwrap_or((Ordering::Equal, FilterRule::Random))
}

/// Absolute Pearson correlations between all column pairs. Constant columns
/// are reported through the returned mask and get zero correlation.
fn abs_correlations(values: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let (n, p) = values.shape();
    let mut z = DMatrix::zeros(n, p);
    let mut constant = vec![false; p];
    for j in 0..p {
        let (mean, centered, raw) = column_center_norm(values, j);
        if is_degenerate(centered, raw) {
            constant[j] = true;
            continue;
        }
        for i in 0..n {
            z[(i, j)] = (values[(i, j)] - mean) / centered;
        }
    }
    let mut r = z.tr_mul(&z);
    r.apply(|v| *v = v.abs().min(1.0));
    (r, constant)
}

/// Greedy correlation filter: while any remaining pair has
/// `|r| > threshold`, drop the lower-priority member of the most correlated
/// pair. Zero-variance columns are dropped up front.
pub fn prefilter_mccm(
    d: &DesignMatrix,
    threshold: f64,
    seed: u64,
) -> Result<(DesignMatrix, Vec<DropRecord>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parameter(format!(
            "correlation threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let p = d.ncols();
    if p == 0 {
        return Err(Error::Parameter("design matrix has no columns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tiebreak: Vec<u64> = (0..p).map(|_| rng.random()).collect();

    let (r, constant) = abs_correlations(&d.values);
    let mut alive: Vec<bool> = constant.iter().map(|c| !c).collect();
    let mut log: Vec<DropRecord> = constant
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(j, _)| DropRecord {
            dropped: d.columns[j].label.clone(),
            kept: String::new(),
            abs_r: f64::NAN,
            rule: FilterRule::Constant,
        })
        .collect();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..p {
        if !alive[j] {
            continue;
        }
        for i in 0..j {
            if alive[i] && r[(i, j)] > threshold {
                pairs.push((r[(i, j)], i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    for (abs_r, i, j) in pairs {
        if !(alive[i] && alive[j]) {
            continue;
        }
        let (ord, rule) = compare_priority(&d.columns[i], tiebreak[i], &d.columns[j], tiebreak[j]);
        let (keep, drop) = if ord == Ordering::Greater { (j, i) } else { (i, j) };
        alive[drop] = false;
        log.push(DropRecord {
            dropped: d.columns[drop].label.clone(),
            kept: d.columns[keep].label.clone(),
            abs_r,
            rule,
        });
    }
    let kept: Vec<usize> = (0..p).filter(|&j| alive[j]).collect();
    Ok((d.select_columns(&kept), log))
}
