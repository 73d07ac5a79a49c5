//! Least angle regression with the optional LASSO modification.
//!
//! The path starts from the intercept-only model and moves the active
//! coefficients along the equiangular direction, i.e. the direction that
//! keeps every active column equally correlated with the residual. A new
//! column joins when its correlation catches up with the active level. In
//! the LASSO variant an active coefficient that would change sign is set to
//! zero at the crossing and its column leaves the active set, after which
//! the path continues. Each recorded step is a knot of the piecewise-linear
//! path; the common active correlation at a knot equals the L1 penalty
//! `lambda` for which the knot's coefficients minimise
//! `0.5 * ||y - X b||^2 + lambda * ||b||_1`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::design::{mirror, Standardization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Lar,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAction {
    Init,
    /// Column joined the active set at the start of this segment.
    Add(usize),
    /// Column left the active set at the start of this segment.
    Drop(usize),
}

impl fmt::Display for StepAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepAction::Init => f.write_str("init"),
            StepAction::Add(j) => write!(f, "add({j})"),
            StepAction::Drop(j) => write!(f, "drop({j})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The active set reached `min(p, n - 1)` columns and the path was
    /// followed to the least-squares fit on it.
    DfExhausted,
    /// No column outside the model is correlated with the residual above
    /// the tolerance.
    CorrTol,
    MaxSteps,
    /// The active-set Gram matrix became numerically singular; the path is
    /// truncated at the last good knot.
    Singular,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::DfExhausted => "df_exhausted",
            StopReason::CorrTol => "corr_tol",
            StopReason::MaxSteps => "max_steps",
            StopReason::Singular => "singular",
        })
    }
}

/// State at the end of one path segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    /// Columns in force during the segment, in order of entry.
    pub active: Vec<usize>,
    /// Full-length coefficient vector on the standardised scale.
    pub coefficients: Vec<f64>,
    /// Largest absolute correlation between any column and the residual.
    pub max_abs_corr: f64,
    pub action: StepAction,
}

impl PathStep {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarPath {
    pub steps: Vec<PathStep>,
    /// Training response mean.
    pub intercept: f64,
    pub variant: Variant,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LarConfig {
    pub variant: Variant,
    pub corr_tol: f64,
    /// Defaults to `8 * min(p, n - 1)`.
    pub max_steps: Option<usize>,
}

impl Default for LarConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Lasso,
            corr_tol: 0.0,
            max_steps: None,
        }
    }
}

/// Sparse linear model on standardised terms:
/// `intercept + sum_k coefficients[k] * (x[terms[k]] - center_k) / scale_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub terms: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Training statistics for `terms`, in the same order.
    pub standardization: Standardization,
}

impl FittedModel {
    pub fn intercept_only(intercept: f64) -> Self {
        Self {
            terms: Vec::new(),
            coefficients: Vec::new(),
            intercept,
            standardization: Standardization::identity(0),
        }
    }

    pub fn size(&self) -> usize {
        self.terms.len()
    }

    /// Re-express term indices through `map` (local -> global column) and
    /// attach the matching training statistics.
    pub fn remap(mut self, map: &[usize], stats: &Standardization) -> Self {
        self.standardization = stats.subset(&self.terms);
        self.terms = self.terms.iter().map(|&j| map[j]).collect();
        self
    }
}

/// Prediction from raw (unstandardised) rows whose columns are the full
/// design the model's term indices refer to.
pub fn predict(model: &FittedModel, x_raw: &DMatrix<f64>) -> Result<Vec<f64>> {
    if let Some(&max) = model.terms.iter().max() {
        if max >= x_raw.ncols() {
            return Err(Error::Dimension(format!(
                "model references column {max} but input has {} columns",
                x_raw.ncols()
            )));
        }
    }
    let sub = x_raw.select_columns(&model.terms);
    let z = mirror(&sub, &model.standardization)?;
    let coef = DVector::from_column_slice(&model.coefficients);
    let fitted = z * coef;
    Ok(fitted.iter().map(|v| v + model.intercept).collect())
}

/// Maximum allowed deviation of a column's mean from 0 and norm from 1.
const STANDARDIZED_TOL: f64 = 1e-8;

fn check_standardized(x: &DMatrix<f64>) -> Result<()> {
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mean = col.mean();
        let norm = col.norm();
        if mean.abs() > STANDARDIZED_TOL || (norm - 1.0).abs() > STANDARDIZED_TOL {
            return Err(Error::Precondition(format!(
                "column {j} is not standardised (mean {mean:e}, norm {norm})"
            )));
        }
    }
    Ok(())
}

/// Solve `G w = s` for the active Gram matrix, refusing near-singular
/// systems. Columns have unit norm, so the Cholesky pivots are on a
/// common scale.
fn equiangular_weights(x: &DMatrix<f64>, active: &[usize], signs: &[f64]) -> Option<DVector<f64>> {
    let xa = x.select_columns(active);
    let gram = xa.tr_mul(&xa);
    let chol = gram.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..active.len()).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > 1e-10) {
        return None;
    }
    let w = chol.solve(&DVector::from_column_slice(signs));
    w.iter().all(|v| v.is_finite()).then_some(w)
}

/// Compute the full LAR or LAR-LASSO path for standardised `x` and raw `y`.
pub fn lar_path(x: &DMatrix<f64>, y: &[f64], cfg: &LarConfig) -> Result<LarPath> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("x has {n} rows but y has {}", y.len())));
    }
    if n < 2 {
        return Err(Error::Precondition("at least two observations required".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("response contains non-finite values".into()));
    }
    if !(cfg.corr_tol >= 0.0) {
        return Err(Error::Parameter(format!("corr_tol must be >= 0, got {}", cfg.corr_tol)));
    }
    check_standardized(x)?;

    let intercept = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - intercept));
    let max_active = p.min(n - 1);
    let max_steps = cfg.max_steps.unwrap_or(8 * max_active.max(1));

    let mut beta = DVector::<f64>::zeros(p);
    let correlations = |beta: &DVector<f64>| -> DVector<f64> {
        let resid = &yc - x * beta;
        x.tr_mul(&resid)
    };

    let mut c = correlations(&beta);
    let level = |c: &DVector<f64>| c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut steps = vec![PathStep {
        active: Vec::new(),
        coefficients: vec![0.0; p],
        max_abs_corr: level(&c),
        action: StepAction::Init,
    }];

    if p == 0 || level(&c) <= cfg.corr_tol {
        return Ok(LarPath {
            steps,
            intercept,
            variant: cfg.variant,
            stop_reason: StopReason::CorrTol,
        });
    }

    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut in_active = vec![false; p];
    // Column that left at the previous knot, with its sign while active.
    let mut just_dropped: Option<(usize, f64)> = None;

    // First entrant: largest |corr|, lowest index on ties.
    let first = (0..p).fold(0, |best, j| if c[j].abs() > c[best].abs() { j } else { best });
    let mut action = StepAction::Add(first);

    let stop_reason = loop {
        if steps.len() > max_steps {
            break StopReason::MaxSteps;
        }
        if let StepAction::Add(j) = action {
            active.push(j);
            signs.push(c[j].signum());
            in_active[j] = true;
        }

        let big_c = level(&c);
        let Some(w) = equiangular_weights(x, &active, &signs) else {
            break StopReason::Singular;
        };
        let xa = x.select_columns(&active);
        let u = &xa * &w;
        let a = x.tr_mul(&u);

        // Step to the least-squares fit on the active set.
        let mut gamma = big_c;
        let mut event: Option<StepAction> = None;

        if active.len() < max_active {
            for j in 0..p {
                if in_active[j] {
                    continue;
                }
                // A column dropped at this knot sits exactly at the active
                // level with its old sign; only the opposite crossing counts.
                let skip = match just_dropped {
                    Some((d, s)) if d == j => Some(s),
                    _ => None,
                };
                for (num, den, sign) in [(big_c - c[j], 1.0 - a[j], 1.0), (big_c + c[j], 1.0 + a[j], -1.0)] {
                    if skip == Some(sign) {
                        continue;
                    }
                    if den > 1e-12 {
                        let g = num.max(0.0) / den;
                        if g < gamma {
                            gamma = g;
                            event = Some(StepAction::Add(j));
                        }
                    }
                }
            }
        }

        if cfg.variant == Variant::Lasso {
            for (k, &j) in active.iter().enumerate() {
                if w[k] == 0.0 || beta[j] == 0.0 {
                    continue;
                }
                let g = -beta[j] / w[k];
                if g > 1e-14 && g <= gamma {
                    gamma = g;
                    event = Some(StepAction::Drop(j));
                }
            }
        }

        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[k];
        }
        if let Some(StepAction::Drop(j)) = event {
            beta[j] = 0.0;
        }
        c = correlations(&beta);
        steps.push(PathStep {
            active: active.clone(),
            coefficients: beta.iter().copied().collect(),
            max_abs_corr: level(&c),
            action,
        });

        match event {
            Some(StepAction::Drop(j)) => {
                let k = active.iter().position(|&a| a == j).expect("dropped column is active");
                active.remove(k);
                let sign = signs.remove(k);
                in_active[j] = false;
                just_dropped = Some((j, sign));
                action = StepAction::Drop(j);
            }
            Some(add) => {
                just_dropped = None;
                action = add;
            }
            None => {
                break if active.len() == max_active {
                    StopReason::DfExhausted
                } else {
                    StopReason::CorrTol
                };
            }
        }
        if level(&c) <= cfg.corr_tol {
            break StopReason::CorrTol;
        }
    };

    Ok(LarPath {
        steps,
        intercept,
        variant: cfg.variant,
        stop_reason,
    })
}

impl LarPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Model at a knot, on the standardised scale of the path's input.
    pub fn model_at(&self, step: usize) -> Result<FittedModel> {
        let s = self.steps.get(step).ok_or_else(|| {
            Error::Parameter(format!("step {step} out of range (path has {})", self.steps.len()))
        })?;
        let terms = s.support();
        let coefficients = terms.iter().map(|&j| s.coefficients[j]).collect();
        let k = terms.len();
        Ok(FittedModel {
            terms,
            coefficients,
            intercept: self.intercept,
            standardization: Standardization::identity(k),
        })
    }

    /// Diagnostic CSV: step, action, active_size, max_abs_corr.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let err = |e: csv::Error| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["step", "action", "active_size", "max_abs_corr"]).map_err(err)?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.action.to_string(),
                s.active.len().to_string(),
                s.max_abs_corr.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{standardize, DesignMatrix, TermKind, TermMeta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn std_matrix(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let terms = (0..p)
            .map(|j| TermMeta {
                label: format!("x{j}"),
                kind: TermKind::Linear,
                base_a: j,
                name_a: format!("x{j}"),
                order_a: 1,
                base_b: None,
                name_b: None,
                order_b: None,
                source_rank: 0,
            })
            .collect();
        let d = DesignMatrix {
            columns: terms,
            values: raw,
            standardization: None,
        };
        let (s, _) = standardize(&d).unwrap();
        let y = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        (s.values, y)
    }

    #[test]
    fn single_column_is_ols() {
        let (x, y) = std_matrix(12, 1, 4);
        let path = lar_path(&x, &y, &LarConfig::default()).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path.stop_reason, StopReason::DfExhausted);
        let ols: f64 = x.column(0).iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((path.steps[1].coefficients[0] - ols).abs() < 1e-12);
        assert_eq!(path.steps[1].action, StepAction::Add(0));
    }

    #[test]
    fn rejects_unstandardized() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            lar_path(&x, &[1.0, 2.0, 3.0], &LarConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn equal_correlation_and_monotone_level() {
        for seed in 0..10 {
            let (x, y) = std_matrix(20, 8 + seed as usize, seed);
            let path = lar_path(&x, &y, &LarConfig::default()).unwrap();
            let yc: Vec<f64> = y.iter().map(|v| v - path.intercept).collect();
            let yc = DVector::from_vec(yc);
            for w in path.steps.windows(2) {
                assert!(w[1].max_abs_corr <= w[0].max_abs_corr + 1e-10);
            }
            for s in &path.steps[1..] {
                let b = DVector::from_column_slice(&s.coefficients);
                let c = x.tr_mul(&(&yc - &x * b));
                let lvl = s.max_abs_corr;
                let act: Vec<f64> = s.active.iter().map(|&j| c[j].abs()).collect();
                let spread = act.iter().cloned().fold(f64::MIN, f64::max)
                    - act.iter().cloned().fold(f64::MAX, f64::min);
                assert!(spread < 1e-8, "spread {spread}");
                for j in 0..x.ncols() {
                    assert!(c[j].abs() <= lvl + 1e-8);
                }
            }
        }
    }

    #[test]
    fn step_zero_is_intercept_only() {
        let (x, y) = std_matrix(15, 5, 9);
        let path = lar_path(&x, &y, &LarConfig::default()).unwrap();
        let m = path.model_at(0).unwrap();
        assert!(m.terms.is_empty());
        let pred = predict(&m, &x).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(pred.iter().all(|v| (v - mean).abs() < 1e-15));
        assert!(path.model_at(path.len()).is_err());
    }

    #[test]
    fn model_prediction_matches_path_residual() {
        let (x, y) = std_matrix(18, 6, 2);
        let path = lar_path(&x, &y, &LarConfig::default()).unwrap();
        for k in 0..path.len() {
            let m = path.model_at(k).unwrap();
            let pred = predict(&m, &x).unwrap();
            let b = DVector::from_column_slice(&path.steps[k].coefficients);
            let fit = &x * b;
            for i in 0..y.len() {
                assert!((pred[i] - (fit[i] + path.intercept)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corr_tol_and_max_steps_stop_early() {
        let (x, y) = std_matrix(30, 10, 5);
        let full = lar_path(&x, &y, &LarConfig::default()).unwrap();
        let tol = full.steps[3].max_abs_corr;
        let cut = lar_path(
            &x,
            &y,
            &LarConfig {
                corr_tol: tol,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cut.stop_reason, StopReason::CorrTol);
        assert!(cut.steps.last().unwrap().max_abs_corr <= tol + 1e-12);
        let short = lar_path(
            &x,
            &y,
            &LarConfig {
                max_steps: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(short.stop_reason, StopReason::MaxSteps);
        assert_eq!(short.len(), 3);
        assert_eq!(short.steps, full.steps[..3].to_vec());
    }

    #[test]
    fn deterministic() {
        let (x, y) = std_matrix(16, 25, 8);
        let a = lar_path(&x, &y, &LarConfig::default()).unwrap();
        let b = lar_path(&x, &y, &LarConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stop_reason, StopReason::DfExhausted);
        assert_eq!(a.steps.last().unwrap().support().len(), 15);
    }
}
