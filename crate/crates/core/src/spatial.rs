//! Residual trend-surface ensemble and full-cover prediction rasters.
//!
//! The covariate ensemble leaves residual spatial structure, which is
//! modelled by a second ensemble on polynomial terms of the coordinates,
//! fitted on the same splits. At each pixel the final prediction is the
//! sum of the two model averages; uncertainty is the width of the central
//! interval of the per-member sums.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{Dataset, GeoPoint, RasterGrid};
use crate::design::{prefilter_mccm, DesignMatrix, DropRecord, SpatialBasis};
use crate::ensemble::{
    derive_seed, fit_ensemble, member_predictions, model_averaged_predict, weighted_average,
    CvConfig, Ensemble, Selector, Split, STREAM_SPATIAL_MCCM,
};
use crate::error::{Error, Result};
use crate::realign::{realign_targets, RealignConfig};
use crate::stats::{quantile_sorted, sort_floats};

/// `y - model-averaged prediction` at the observation rows.
pub fn residuals(ens: &Ensemble, x_raw: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let fitted = model_averaged_predict(ens, x_raw)?;
    if fitted.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} fitted values for {} observations",
            fitted.len(),
            y.len()
        )));
    }
    Ok(y.iter().zip(&fitted).map(|(o, f)| o - f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialConfig {
    pub single_max: u32,
    pub inter_total_max: u32,
    pub mccm: f64,
    pub cv: CvConfig,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            single_max: SpatialBasis::DEFAULT_SINGLE_MAX,
            inter_total_max: SpatialBasis::DEFAULT_INTER_TOTAL_MAX,
            mccm: 0.95,
            cv: CvConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpatialRun {
    pub basis: SpatialBasis,
    /// Filtered spatial design at the observation coordinates.
    pub design: DesignMatrix,
    pub drops: Vec<DropRecord>,
    pub ensemble: Ensemble,
}

impl SpatialRun {
    /// Filtered spatial design rows at arbitrary coordinates.
    pub fn design_at(&self, coords: &[GeoPoint]) -> DMatrix<f64> {
        let full = self.basis.design(coords);
        let cols: Vec<usize> = self
            .design
            .columns
            .iter()
            .map(|t| {
                full.columns
                    .iter()
                    .position(|f| f.label == t.label)
                    .expect("filtered term comes from the basis")
            })
            .collect();
        full.values.select_columns(&cols)
    }
}

/// Fit the residual ensemble on the given splits with the LASSO selector.
pub fn spatial_ensemble(
    coords: &[GeoPoint],
    r: &[f64],
    splits: &[Split],
    cfg: &SpatialConfig,
    seed: u64,
) -> Result<SpatialRun> {
    let basis = SpatialBasis::fit(coords, cfg.single_max, cfg.inter_total_max)?;
    let full = basis.design(coords);
    let (design, drops) = prefilter_mccm(&full, cfg.mccm, derive_seed(seed, STREAM_SPATIAL_MCCM))?;
    let mut cv = cfg.cv;
    cv.selector.selector = Selector::LassoLar;
    let ensemble = fit_ensemble(&design, r, splits, &cv).map_err(|e| e.context("spatial ensemble"))?;
    Ok(SpatialRun {
        basis,
        design,
        drops,
        ensemble,
    })
}

/// Realigned covariate rows at every cell centre of `grid`, row-major.
#[derive(Debug, Clone)]
pub struct PixelRows {
    pub centers: Vec<GeoPoint>,
    /// Cell indices whose realignment succeeded.
    pub pixels: Vec<usize>,
    /// One row per entry of `pixels`, covariates in manifest order.
    pub values: DMatrix<f64>,
    /// `(cell index, reason)` for cells left as nodata.
    pub failures: Vec<(usize, String)>,
}

pub fn build_pixel_rows(ds: &Dataset, grid: &RasterGrid, cfg: &RealignConfig) -> Result<PixelRows> {
    let centers = grid.cell_centers();
    let rows = realign_targets(ds, &centers, cfg)?;
    let q = ds.covariate_count();
    let mut pixels = Vec::new();
    let mut data = Vec::new();
    let mut failures = Vec::new();
    for (k, row) in rows.into_iter().enumerate() {
        match row {
            Ok(v) => {
                pixels.push(k);
                data.extend(v);
            }
            Err(e) => {
                let (r, c) = (k / grid.ncols, k % grid.ncols);
                let reason = match e {
                    Error::Coverage { covariate, .. } => {
                        format!("covariate `{covariate}` does not cover pixel ({r}, {c})")
                    }
                    other => format!("pixel ({r}, {c}): {other}"),
                };
                log::warn!("{reason}");
                failures.push((k, reason));
            }
        }
    }
    let values = DMatrix::from_row_slice(pixels.len(), q, &data);
    Ok(PixelRows {
        centers,
        pixels,
        values,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Member k of one ensemble pairs with member k of the other.
    Matched,
    /// Every member of one ensemble pairs with every member of the other.
    Cross,
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pairing::Matched => "matched",
            Pairing::Cross => "cross",
        })
    }
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "matched" => Ok(Pairing::Matched),
            "cross" => Ok(Pairing::Cross),
            other => Err(format!("unknown pairing `{other}` (expected matched or cross)")),
        }
    }
}

/// Member predictions on a subset of grid cells.
#[derive(Debug, Clone)]
pub struct PredictionStack {
    /// Geometry of the output rasters (values unused).
    pub grid: RasterGrid,
    /// Cell index of each stack row.
    pub pixels: Vec<usize>,
    /// pixels x members
    pub members: DMatrix<f64>,
    /// Point prediction per stack row.
    pub prediction: Vec<f64>,
}

impl PredictionStack {
    /// Stack whose point prediction is the weighted member average.
    pub fn from_weighted(
        grid: RasterGrid,
        pixels: Vec<usize>,
        members: DMatrix<f64>,
        weights: &[f64],
    ) -> Result<Self> {
        if weights.len() != members.ncols() {
            return Err(Error::Dimension(format!(
                "{} weights for {} members",
                weights.len(),
                members.ncols()
            )));
        }
        let prediction = weighted_average(&members, weights);
        Self::new(grid, pixels, members, prediction)
    }

    pub fn new(
        grid: RasterGrid,
        pixels: Vec<usize>,
        members: DMatrix<f64>,
        prediction: Vec<f64>,
    ) -> Result<Self> {
        if pixels.len() != members.nrows() || prediction.len() != members.nrows() {
            return Err(Error::Dimension(format!(
                "stack has {} rows, {} pixels and {} predictions",
                members.nrows(),
                pixels.len(),
                prediction.len()
            )));
        }
        if let Some(&k) = pixels.iter().find(|&&k| k >= grid.len()) {
            return Err(Error::Dimension(format!("pixel {k} outside the grid")));
        }
        Ok(Self {
            grid,
            pixels,
            members,
            prediction,
        })
    }

    pub fn member_count(&self) -> usize {
        self.members.ncols()
    }

    /// CSV: pixel_id, member_id, value.
    pub fn write_members_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "pixel_id,member_id,value").map_err(io)?;
        for (row, &pix) in self.pixels.iter().enumerate() {
            for k in 0..self.members.ncols() {
                writeln!(w, "{pix},{k},{}", self.members[(row, k)]).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Combine covariate and spatial ensembles at the pixel rows.
///
/// `cov_rows` and `spat_rows` are raw design rows for the two ensembles.
/// The point prediction is the sum of the two model averages, each with
/// its own weights.
pub fn predict_full_cover(
    cov: &Ensemble,
    spat: &Ensemble,
    cov_rows: &DMatrix<f64>,
    spat_rows: &DMatrix<f64>,
    grid: RasterGrid,
    pixels: Vec<usize>,
    pairing: Pairing,
) -> Result<PredictionStack> {
    if cov_rows.nrows() != spat_rows.nrows() {
        return Err(Error::Dimension(format!(
            "{} covariate rows but {} spatial rows",
            cov_rows.nrows(),
            spat_rows.nrows()
        )));
    }
    let mc = member_predictions(cov, cov_rows)?;
    let ms = member_predictions(spat, spat_rows)?;
    let n = cov_rows.nrows();
    let members = match pairing {
        Pairing::Matched => {
            if cov.len() != spat.len() {
                return Err(Error::Dimension(format!(
                    "matched pairing needs equal member counts, got {} and {}",
                    cov.len(),
                    spat.len()
                )));
            }
            &mc + &ms
        }
        Pairing::Cross => {
            let (a, b) = (mc.ncols(), ms.ncols());
            DMatrix::from_fn(n, a * b, |i, k| mc[(i, k / b)] + ms[(i, k % b)])
        }
    };
    let pc = weighted_average(&mc, &cov.weights);
    let ps = weighted_average(&ms, &spat.weights);
    let prediction = pc.iter().zip(&ps).map(|(a, b)| a + b).collect();
    PredictionStack::new(grid, pixels, members, prediction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRasters {
    pub prediction: RasterGrid,
    pub uncertainty: RasterGrid,
}

/// Width of the central `central` interval of `values` (unweighted,
/// interpolated order statistics).
pub fn interval_width(values: &[f64], central: f64) -> f64 {
    let mut v = values.to_vec();
    sort_floats(&mut v);
    let lo = quantile_sorted(&v, (1.0 - central) / 2.0);
    let hi = quantile_sorted(&v, (1.0 + central) / 2.0);
    (hi - lo).max(0.0)
}

pub fn summarize_stack(stack: &PredictionStack, central: f64) -> Result<OutputRasters> {
    if !(central > 0.0 && central < 1.0) {
        return Err(Error::Parameter(format!("central must lie in (0, 1), got {central}")));
    }
    if stack.member_count() < 2 {
        return Err(Error::Precondition(format!(
            "uncertainty needs at least two members, got {}",
            stack.member_count()
        )));
    }
    let widths: Vec<f64> = (0..stack.members.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = stack.members.row(i).iter().copied().collect();
            interval_width(&row, central)
        })
        .collect();
    let nodata = stack.grid.nodata;
    let mut pred = vec![nodata; stack.grid.len()];
    let mut unc = vec![nodata; stack.grid.len()];
    for (row, &k) in stack.pixels.iter().enumerate() {
        pred[k] = stack.prediction[row];
        unc[k] = widths[row];
    }
    Ok(OutputRasters {
        prediction: stack.grid.with_values(pred)?,
        uncertainty: stack.grid.with_values(unc)?,
    })
}
