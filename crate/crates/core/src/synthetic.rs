//! Synthetic data with known structure, used by tests and demos.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{write_points, write_raster, GeoPoint, RasterGrid};
use crate::error::{Error, Result};

/// Covariates `x1..xp` with a response built from three planted terms.
#[derive(Debug, Clone)]
pub struct RecoveryData {
    pub names: Vec<String>,
    /// n x p standard normal draws.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Noise-free response.
    pub truth: Vec<f64>,
}

/// Labels of the planted terms, as produced by the default expansion.
pub const RECOVERY_TERMS: [&str; 3] = ["x3", "x7^2", "x1:x2"];

/// `2 x3 + x7^2 - 1.5 x1 x2` for a row of covariates (1-based names).
pub fn recovery_signal(row: &[f64]) -> f64 {
    2.0 * row[2] + row[6] * row[6] - 1.5 * row[0] * row[1]
}

/// `n` rows of `p >= 7` standard normal covariates with
/// `y = recovery_signal + N(0, sigma^2)`.
pub fn recovery_data(n: usize, p: usize, sigma: f64, seed: u64) -> Result<RecoveryData> {
    if p < 7 {
        return Err(Error::Parameter(format!("need at least 7 covariates, got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let truth: Vec<f64> = (0..n)
        .map(|i| recovery_signal(&x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    let y = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
    Ok(RecoveryData {
        names: (1..=p).map(|j| format!("x{j}")).collect(),
        x,
        y,
        truth,
    })
}

fn elevation(p: GeoPoint) -> f64 {
    100.0 + 0.05 * p.easting + 0.02 * p.northing + 3.0 * (p.easting / 40.0).sin()
}

fn greenness(p: GeoPoint) -> f64 {
    0.5 + 0.3 * (p.easting / 50.0).sin() * (p.northing / 60.0).cos()
}

fn conductivity(p: GeoPoint) -> f64 {
    20.0 + 0.1 * (p.easting - 100.0) + 5.0 * (p.northing / 35.0).cos()
}

/// Field fixture on a 200 m square: two raster covariates, one point
/// covariate, responses at `n` distinct cell centres of a 20 x 20 template
/// grid, and a manifest tying them together.
#[derive(Debug, Clone)]
pub struct FieldFixture {
    pub manifest: PathBuf,
    pub template: PathBuf,
    pub locations: Vec<GeoPoint>,
    pub response: Vec<f64>,
}

pub fn write_field_fixture(dir: &Path, n: usize, seed: u64) -> Result<FieldFixture> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let template = RasterGrid::filled(0.0, 0.0, 10.0, 20, 20, 0.0);
    if n > template.len() {
        return Err(Error::Parameter(format!("at most {} responses fit the grid", template.len())));
    }
    // Covariate rasters extend 50 m beyond the template on every side.
    let wide = RasterGrid::filled(-50.0, -50.0, 10.0, 30, 30, 0.0);
    let centers = wide.cell_centers();
    let elev = wide.with_values(centers.iter().map(|&c| elevation(c)).collect())?;
    let green = wide.with_values(centers.iter().map(|&c| greenness(c)).collect())?;

    let mut eca = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            let jitter_e: f64 = Normal::new(0.0, 2.0).unwrap().sample(&mut rng);
            let jitter_n: f64 = Normal::new(0.0, 2.0).unwrap().sample(&mut rng);
            let p = GeoPoint::new(-30.0 + 23.0 * i as f64 + jitter_e, -30.0 + 23.0 * j as f64 + jitter_n);
            eca.push((p, vec![conductivity(p)]));
        }
    }

    let cells = sample(&mut rng, template.len(), n).into_vec();
    let cell_centers = template.cell_centers();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut locations = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for k in cells {
        let p = cell_centers[k];
        let trend = 0.4 * ((p.easting - 100.0) / 60.0) - 0.3 * ((p.northing - 100.0) / 80.0).powi(2);
        let v = 1.0 + 0.04 * (elevation(p) - 100.0) + 0.08 * conductivity(p) + 1.5 * greenness(p)
            + trend
            + noise.sample(&mut rng);
        locations.push(p);
        response.push(v);
        rows.push((p, vec![v]));
    }

    write_raster(dir.join("elev.asc"), &elev)?;
    write_raster(dir.join("green.asc"), &green)?;
    write_raster(dir.join("template.asc"), &template)?;
    write_points(&dir.join("eca.csv"), &["eca"], &eca)?;
    write_points(&dir.join("soc.csv"), &["soc"], &rows)?;
    let manifest = dir.join("manifest.csv");
    std::fs::write(
        &manifest,
        "name,kind,path,priority_rank,value_column\n\
         soc,response,soc.csv,0,soc\n\
         ECa,point,eca.csv,1,eca\n\
         Elev,raster,elev.asc,2,\n\
         Green,raster,green.asc,3,\n",
    )
    .map_err(|e| Error::io(&manifest, e))?;
    Ok(FieldFixture {
        manifest,
        template: dir.join("template.asc"),
        locations,
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;

    #[test]
    fn recovery_signal_matches_rows() {
        let d = recovery_data(10, 20, 0.0, 1).unwrap();
        for i in 0..10 {
            let r: Vec<f64> = d.x.row(i).iter().copied().collect();
            let f = 2.0 * r[2] + r[6].powi(2) - 1.5 * r[0] * r[1];
            assert_eq!(d.truth[i], f);
            assert_eq!(d.y[i], f);
        }
        assert!(recovery_data(5, 6, 0.1, 1).is_err());
    }

    #[test]
    fn fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let f = write_field_fixture(dir.path(), 30, 5).unwrap();
        let ds = load_dataset(&f.manifest, None).unwrap();
        assert_eq!(ds.n(), 30);
        assert_eq!(ds.covariate_names(), vec!["ECa", "Elev", "Green"]);
        assert_eq!(ds.response_values(), f.response);
    }
}
