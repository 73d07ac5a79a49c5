//! Realignment of misaligned covariates onto square blocks centred on target
//! locations.
//!
//! Point covariates are interpolated with a thin plate spline and averaged
//! over a regular lattice of sub-cell centres; raster covariates are sampled
//! at the same lattice by nearest cell.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{CovariateRef, Dataset, GeoPoint, PointCovariate, RasterGrid};
use crate::error::{Error, Result};

/// Thin plate spline interpolant
/// `f(p) = a0 + ax (e - e0) + ay (n - n0) + sum_i w_i phi(|p - c_i|)`
/// with `phi(r) = r^2 ln r` and `(e0, n0) = origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsModel {
    pub centers: Vec<GeoPoint>,
    pub rbf_weights: Vec<f64>,
    pub affine: (f64, f64, f64),
    pub origin: GeoPoint,
    /// Diagonal regularisation, applied in the normalised fitting frame.
    pub ridge: f64,
}

#[inline]
pub fn tps_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Fit a thin plate spline through `samples`. With `ridge = 0` the spline
/// interpolates every sample.
pub fn tps_fit(samples: &[(GeoPoint, f64)], ridge: f64) -> Result<TpsModel> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Singular(format!(
            "thin plate spline needs at least 3 samples, got {n}"
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Parameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let mut seen = std::collections::HashSet::new();
    for (p, _) in samples {
        if !seen.insert((p.easting.to_bits(), p.northing.to_bits())) {
            return Err(Error::Singular(format!("duplicate thin plate spline center at {p}")));
        }
    }

    // Fit in a centred, scaled frame; the kernel family is closed under
    // similarity transforms once the side conditions hold.
    let inv_n = 1.0 / n as f64;
    let origin = GeoPoint::new(
        samples.iter().map(|(p, _)| p.easting).sum::<f64>() * inv_n,
        samples.iter().map(|(p, _)| p.northing).sum::<f64>() * inv_n,
    );
    let local: Vec<(f64, f64)> = samples
        .iter()
        .map(|(p, _)| (p.easting - origin.easting, p.northing - origin.northing))
        .collect();
    let scale = local
        .iter()
        .map(|(x, y)| x.hypot(*y))
        .fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Singular("thin plate spline centers coincide".into()));
    }
    let u: Vec<(f64, f64)> = local.iter().map(|(x, y)| (x / scale, y / scale)).collect();

    let (sxx, syy, sxy) = u.iter().fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| {
        (a + x * x, b + y * y, c + x * y)
    });
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-12 * (sxx + syy).powi(2) {
        return Err(Error::Singular("thin plate spline centers are collinear".into()));
    }

    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (u[i].0 - u[j].0).hypot(u[i].1 - u[j].1);
            let k = tps_kernel(r);
            a[(i, j)] = k;
            a[(j, i)] = k;
        }
        a[(i, i)] = ridge;
        let row = [1.0, u[i].0, u[i].1];
        for (c, v) in row.into_iter().enumerate() {
            a[(i, n + c)] = v;
            a[(n + c, i)] = v;
        }
    }
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, (_, v)) in samples.iter().enumerate() {
        rhs[i] = *v;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::Numeric("thin plate spline system could not be solved; try ridge > 0".into())
        })?;

    // Map back to meters: phi(r/L) = phi(r)/L^2 - (r^2/L^2) ln L, and the
    // r^2 part collapses to a constant under the side conditions.
    let l2 = scale * scale;
    let ln_l = scale.ln();
    let w_norm = sol.rows(0, n);
    let spread: f64 = w_norm
        .iter()
        .zip(&local)
        .map(|(w, (x, y))| w * (x * x + y * y))
        .sum();
    let a0 = sol[n] - ln_l / l2 * spread;
    Ok(TpsModel {
        centers: samples.iter().map(|(p, _)| *p).collect(),
        rbf_weights: w_norm.iter().map(|w| w / l2).collect(),
        affine: (a0, sol[n + 1] / scale, sol[n + 2] / scale),
        origin,
        ridge,
    })
}

pub fn tps_eval(model: &TpsModel, at: GeoPoint) -> f64 {
    let (a0, ax, ay) = model.affine;
    let mut v = a0
        + ax * (at.easting - model.origin.easting)
        + ay * (at.northing - model.origin.northing);
    for (c, w) in model.centers.iter().zip(&model.rbf_weights) {
        v += w * tps_kernel(at.distance(c));
    }
    v
}

/// Square block of side `side` meters sampled on a `grid_n` x `grid_n`
/// lattice of sub-cell centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpec {
    pub center: GeoPoint,
    pub side: f64,
    pub grid_n: usize,
}

impl BlockSpec {
    pub const DEFAULT_SIDE: f64 = 25.0;
    pub const DEFAULT_GRID_N: usize = 100;

    pub fn new(center: GeoPoint, side: f64, grid_n: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::Parameter(format!("block side must be positive, got {side}")));
        }
        if grid_n == 0 {
            return Err(Error::Parameter("block grid_n must be at least 1".into()));
        }
        Ok(Self { center, side, grid_n })
    }

    fn offsets(&self) -> Vec<f64> {
        let step = self.side / self.grid_n as f64;
        (0..self.grid_n)
            .map(|i| (i as f64 + 0.5) * step - self.side / 2.0)
            .collect()
    }

    /// Lattice points, row by row.
    pub fn lattice(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        let offs = self.offsets();
        let c = self.center;
        let cols = offs.clone();
        offs.into_iter().flat_map(move |dy| {
            cols.clone()
                .into_iter()
                .map(move |dx| GeoPoint::new(c.easting + dx, c.northing + dy))
        })
    }
}

pub fn block_mean_point(model: &TpsModel, block: &BlockSpec) -> f64 {
    let count = (block.grid_n * block.grid_n) as f64;
    block.lattice().map(|p| tps_eval(model, p)).sum::<f64>() / count
}

/// Mean of nearest-cell raster values over the block lattice, skipping
/// nodata and out-of-extent points.
pub fn block_mean_raster(grid: &RasterGrid, block: &BlockSpec) -> Result<f64> {
    let (sum, count) = block
        .lattice()
        .filter_map(|p| grid.sample(p))
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(Error::Coverage {
            covariate: String::from("<raster>"),
            target: format!("block centre {}", block.center),
        });
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealignConfig {
    pub side: f64,
    pub grid_n: usize,
    pub ridge: f64,
    /// Point covariates with more samples than this are fitted locally on
    /// the nearest `neighbors` samples to each block centre.
    pub neighbors: usize,
}

impl Default for RealignConfig {
    fn default() -> Self {
        Self {
            side: BlockSpec::DEFAULT_SIDE,
            grid_n: BlockSpec::DEFAULT_GRID_N,
            ridge: 0.0,
            neighbors: 200,
        }
    }
}

/// Covariates realigned onto targets: `values` is targets x covariates.
#[derive(Debug, Clone)]
pub struct RealignedTable {
    pub names: Vec<String>,
    pub locations: Vec<GeoPoint>,
    pub values: DMatrix<f64>,
}

enum PointFit {
    Global(TpsModel),
    Local(Vec<(GeoPoint, f64)>),
}

fn dedup_samples(samples: &[(GeoPoint, f64)]) -> Vec<(GeoPoint, f64)> {
    let mut seen = std::collections::HashSet::new();
    samples
        .iter()
        .filter(|(p, _)| seen.insert((p.easting.to_bits(), p.northing.to_bits())))
        .copied()
        .collect()
}

fn nearest(samples: &[(GeoPoint, f64)], at: GeoPoint, k: usize) -> Vec<(GeoPoint, f64)> {
    let mut idx: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (p.distance(&at), i))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idx.truncate(k);
    idx.sort_by_key(|&(_, i)| i);
    idx.into_iter().map(|(_, i)| samples[i]).collect()
}

fn prepare_point(c: &PointCovariate, cfg: &RealignConfig) -> Result<PointFit> {
    let samples = dedup_samples(&c.samples);
    if samples.len() <= cfg.neighbors {
        tps_fit(&samples, cfg.ridge)
            .map(PointFit::Global)
            .map_err(|e| e.context(format!("covariate `{}`", c.name)))
    } else {
        Ok(PointFit::Local(samples))
    }
}

/// Realign every covariate of `ds` onto blocks centred on `targets`.
/// Returns one result per target so callers can decide how to treat
/// uncovered targets.
pub fn realign_targets(
    ds: &Dataset,
    targets: &[GeoPoint],
    cfg: &RealignConfig,
) -> Result<Vec<Result<Vec<f64>>>> {
    BlockSpec::new(GeoPoint::new(0.0, 0.0), cfg.side, cfg.grid_n)?;
    let covariates: Vec<CovariateRef<'_>> = ds.covariates().collect();
    let fits: Vec<Option<PointFit>> = covariates
        .iter()
        .map(|c| match c {
            CovariateRef::Point(p) => prepare_point(p, cfg).map(Some),
            CovariateRef::Raster(_) => Ok(None),
        })
        .collect::<Result<_>>()?;

    let rows = targets
        .par_iter()
        .map(|&center| {
            let block = BlockSpec {
                center,
                side: cfg.side,
                grid_n: cfg.grid_n,
            };
            covariates
                .iter()
                .zip(&fits)
                .map(|(c, fit)| {
                    let v = match (c, fit) {
                        (CovariateRef::Raster(r), _) => block_mean_raster(&r.grid, &block),
                        (CovariateRef::Point(_), Some(PointFit::Global(m))) => {
                            Ok(block_mean_point(m, &block))
                        }
                        (CovariateRef::Point(_), Some(PointFit::Local(samples))) => {
                            tps_fit(&nearest(samples, center, cfg.neighbors), cfg.ridge)
                                .map(|m| block_mean_point(&m, &block))
                        }
                        (CovariateRef::Point(_), None) => unreachable!(),
                    };
                    v.map_err(|e| match e {
                        Error::Coverage { .. } => Error::Coverage {
                            covariate: c.name().to_string(),
                            target: format!("target at {center}"),
                        },
                        other => other.context(format!(
                            "covariate `{}` at target {center}",
                            c.name()
                        )),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect();
    Ok(rows)
}

/// Realigned covariate table for the response locations, columns in
/// manifest order.
pub fn realign_dataset(ds: &Dataset, cfg: &RealignConfig) -> Result<RealignedTable> {
    let locations = ds.locations();
    let rows = realign_targets(ds, &locations, cfg)?;
    let p = ds.covariate_count();
    let mut values = DMatrix::zeros(locations.len(), p);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.map_err(|e| match e {
            Error::Coverage { covariate, .. } => Error::Coverage {
                covariate,
                target: format!("response {i} at {}", locations[i]),
            },
            other => other.context(format!("response {i}")),
        })?;
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    Ok(RealignedTable {
        names: ds.covariate_names(),
        locations,
        values,
    })
}

impl RealignedTable {
    /// CSV with `easting,northing,response,<covariates...>`.
    pub fn write_csv(&self, path: &std::path::Path, response: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut header = vec!["easting".to_string(), "northing".into(), "response".into()];
        header.extend(self.names.iter().cloned());
        let io = |e: csv::Error| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(&header).map_err(io)?;
        for (i, loc) in self.locations.iter().enumerate() {
            let mut rec = vec![
                loc.easting.to_string(),
                loc.northing.to_string(),
                response[i].to_string(),
            ];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PointCovariate, RasterCovariate, ResponseObservation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, seed: u64, f: impl Fn(f64, f64) -> f64) -> Vec<(GeoPoint, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let e = 500_000.0 + rng.random_range(0.0..400.0);
                let n = 6_700_000.0 + rng.random_range(0.0..400.0);
                (GeoPoint::new(e, n), f(e, n))
            })
            .collect()
    }

    fn side_conditions(m: &TpsModel) -> (f64, f64, f64) {
        let w = &m.rbf_weights;
        let s0: f64 = w.iter().sum();
        let se: f64 = w
            .iter()
            .zip(&m.centers)
            .map(|(w, c)| w * (c.easting - m.origin.easting))
            .sum();
        let sn: f64 = w
            .iter()
            .zip(&m.centers)
            .map(|(w, c)| w * (c.northing - m.origin.northing))
            .sum();
        (s0, se, sn)
    }

    #[test]
    fn constant_field() {
        let s = random_samples(8, 1, |_, _| 3.25);
        let m = tps_fit(&s, 0.0).unwrap();
        assert!(m.rbf_weights.iter().all(|w| w.abs() < 1e-10));
        assert!((m.affine.0 - 3.25).abs() < 1e-10);
        assert!((tps_eval(&m, GeoPoint::new(500_123.0, 6_700_050.0)) - 3.25).abs() < 1e-9);
        let b = BlockSpec::new(GeoPoint::new(500_200.0, 6_700_200.0), 25.0, 10).unwrap();
        assert!((block_mean_point(&m, &b) - 3.25).abs() < 1e-9);
    }

    #[test]
    fn plane_reproduced() {
        let plane = |e: f64, n: f64| 2.0 + 0.5 * e - 1.0 * n;
        let s = vec![
            (GeoPoint::new(0.0, 0.0), plane(0.0, 0.0)),
            (GeoPoint::new(30.0, 0.0), plane(30.0, 0.0)),
            (GeoPoint::new(0.0, 40.0), plane(0.0, 40.0)),
            (GeoPoint::new(25.0, 35.0), plane(25.0, 35.0)),
        ];
        let m = tps_fit(&s, 0.0).unwrap();
        assert!(m.rbf_weights.iter().all(|w| w.abs() < 1e-8));
        // 2 + 0.5 * 10 - 1.0 * 20
        assert!((tps_eval(&m, GeoPoint::new(10.0, 20.0)) + 13.0).abs() < 1e-9);
        let b = BlockSpec::new(GeoPoint::new(12.0, 7.0), 25.0, 100).unwrap();
        assert!((block_mean_point(&m, &b) - plane(12.0, 7.0)).abs() < 1e-9);
    }

    #[test]
    fn interpolates_random_samples_and_satisfies_side_conditions() {
        let s = random_samples(10, 7, |e, n| ((e - 500_000.0) / 50.0).sin() + (n / 1e5).cos());
        let m = tps_fit(&s, 0.0).unwrap();
        for (p, v) in &s {
            assert!((tps_eval(&m, *p) - v).abs() <= 1e-8 * v.abs().max(1.0));
        }
        let (s0, se, sn) = side_conditions(&m);
        let wscale = m.rbf_weights.iter().map(|w| w.abs()).fold(0.0, f64::max);
        assert!(s0.abs() < 1e-8 * wscale);
        assert!(se.abs() < 1e-8 * wscale * 400.0);
        assert!(sn.abs() < 1e-8 * wscale * 400.0);
    }

    #[test]
    fn collinear_and_duplicate_rejected() {
        let line: Vec<_> = (0..5).map(|i| (GeoPoint::new(i as f64, 2.0 * i as f64), 1.0)).collect();
        assert!(matches!(tps_fit(&line, 0.0), Err(Error::Singular(_))));
        let dup = vec![
            (GeoPoint::new(0.0, 0.0), 1.0),
            (GeoPoint::new(1.0, 0.0), 1.0),
            (GeoPoint::new(0.0, 0.0), 1.0),
        ];
        assert!(matches!(tps_fit(&dup, 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn quadratic_block_mean_matches_direct_sum() {
        // Exact quadratic field, evaluated directly on the lattice.
        let b = BlockSpec::new(GeoPoint::new(0.0, 0.0), 1.0, 100).unwrap();
        let direct: f64 = b.lattice().map(|p| p.easting * p.easting).sum::<f64>() / 10_000.0;
        let offs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0 - 0.5).collect();
        let var = offs.iter().map(|x| x * x).sum::<f64>() / 100.0;
        assert!((direct - var).abs() < 1e-14);
        assert!((var - (1.0 / 12.0 - 1.0 / 120_000.0)).abs() < 1e-12);
    }

    #[test]
    fn shrinking_block_converges_to_point_value() {
        let s = random_samples(12, 3, |e, n| ((e - 500_000.0) / 40.0).cos() * (n / 3e4).sin());
        let m = tps_fit(&s, 0.0).unwrap();
        let c = GeoPoint::new(500_150.0, 6_700_220.0);
        let b = BlockSpec::new(c, 1e-6, 4).unwrap();
        assert!((block_mean_point(&m, &b) - tps_eval(&m, c)).abs() < 1e-6);
    }

    #[test]
    fn block_mean_is_linear_in_values() {
        let s = random_samples(9, 11, |e, n| (e - 500_000.0) * 0.01 + ((n - 6.7e6) / 70.0).sin());
        let alpha = -2.5;
        let scaled: Vec<_> = s.iter().map(|(p, v)| (*p, alpha * v)).collect();
        let m1 = tps_fit(&s, 0.0).unwrap();
        let m2 = tps_fit(&scaled, 0.0).unwrap();
        let b = BlockSpec::new(GeoPoint::new(500_200.0, 6_700_200.0), 25.0, 20).unwrap();
        let (a, b2) = (block_mean_point(&m1, &b), block_mean_point(&m2, &b));
        assert!((alpha * a - b2).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn raster_block_means() {
        let g = RasterGrid::filled(0.0, 0.0, 25.0, 4, 4, 7.0);
        let b = BlockSpec::new(GeoPoint::new(50.0, 50.0), 25.0, 10).unwrap();
        assert_eq!(block_mean_raster(&g, &b).unwrap(), 7.0);

        let g = RasterGrid::filled(0.0, 0.0, 100.0, 1, 1, 3.5);
        let b = BlockSpec::new(GeoPoint::new(50.0, 50.0), 25.0, 10).unwrap();
        assert_eq!(block_mean_raster(&g, &b).unwrap(), 3.5);

        // two cells 1 | 3, block straddles the boundary at e = 10
        let g = RasterGrid::new(0.0, 0.0, 10.0, 2, 1, vec![1.0, 3.0], -9999.0).unwrap();
        let b = BlockSpec::new(GeoPoint::new(10.0, 5.0), 4.0, 8).unwrap();
        let oracle: f64 = {
            let mut s = 0.0;
            for p in b.lattice() {
                s += if p.easting < 10.0 { 1.0 } else { 3.0 };
            }
            s / 64.0
        };
        assert_eq!(oracle, 2.0);
        assert_eq!(block_mean_raster(&g, &b).unwrap(), oracle);

        let far = BlockSpec::new(GeoPoint::new(1e4, 1e4), 25.0, 4).unwrap();
        assert!(matches!(block_mean_raster(&g, &far), Err(Error::Coverage { .. })));
    }

    fn obs(e: f64, n: f64) -> ResponseObservation {
        ResponseObservation {
            location: GeoPoint::new(e, n),
            value: e + n,
        }
    }

    #[test]
    fn realign_constant_raster_and_plane_points() {
        let plane = |e: f64, n: f64| 1.0 + 0.02 * e - 0.01 * n;
        let grid = RasterGrid::filled(0.0, 0.0, 25.0, 20, 20, 4.0);
        let samples: Vec<_> = [(0.0, 0.0), (500.0, 0.0), (0.0, 500.0), (480.0, 470.0), (250.0, 100.0)]
            .iter()
            .map(|&(e, n)| (GeoPoint::new(e, n), plane(e, n)))
            .collect();
        let ds = Dataset::new(
            vec![obs(100.0, 100.0), obs(300.0, 260.0)],
            vec![PointCovariate {
                name: "p".into(),
                samples,
                priority_rank: 1,
            }],
            vec![RasterCovariate {
                name: "r".into(),
                grid,
                priority_rank: 2,
            }],
        )
        .unwrap();
        let cfg = RealignConfig {
            grid_n: 10,
            ..Default::default()
        };
        let t = realign_dataset(&ds, &cfg).unwrap();
        assert_eq!(t.values.shape(), (2, 2));
        assert!((t.values[(0, 0)] - plane(100.0, 100.0)).abs() < 1e-9);
        assert!((t.values[(1, 0)] - plane(300.0, 260.0)).abs() < 1e-9);
        assert_eq!(t.values[(0, 1)], 4.0);
        assert_eq!(t.values[(1, 1)], 4.0);
    }

    #[test]
    fn local_neighbourhood_fit_matches_oracle_call() {
        let s = random_samples(40, 5, |e, n| ((e - 500_000.0) / 60.0).sin() + ((n - 6.7e6) / 90.0).cos());
        let target = GeoPoint::new(500_210.0, 6_700_190.0);
        let ds = Dataset::new(
            vec![
                ResponseObservation { location: target, value: 1.0 },
                ResponseObservation {
                    location: GeoPoint::new(500_100.0, 6_700_100.0),
                    value: 2.0,
                },
            ],
            vec![PointCovariate {
                name: "p".into(),
                samples: s.clone(),
                priority_rank: 1,
            }],
            vec![],
        )
        .unwrap();
        let cfg = RealignConfig {
            grid_n: 6,
            neighbors: 15,
            ..Default::default()
        };
        let t = realign_dataset(&ds, &cfg).unwrap();
        let oracle = {
            let mut d: Vec<(f64, usize)> =
                s.iter().enumerate().map(|(i, (p, _))| (p.distance(&target), i)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut keep: Vec<usize> = d[..15].iter().map(|x| x.1).collect();
            keep.sort();
            let sub: Vec<_> = keep.iter().map(|&i| s[i]).collect();
            let m = tps_fit(&sub, 0.0).unwrap();
            block_mean_point(&m, &BlockSpec::new(target, 25.0, 6).unwrap())
        };
        assert!((t.values[(0, 0)] - oracle).abs() < 1e-12);
    }
}
