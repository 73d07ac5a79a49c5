//! Domain types and ingestion of response points, point covariates and
//! raster covariates.

mod indices;
mod manifest;
mod points;
mod raster;

use std::collections::HashSet;

pub use indices::{
    vegetation_index_rasters, vegetation_indices, IndexValue, VegetationIndices, INDEX_NAMES,
    SAVI_SOIL_FACTOR,
};
pub use manifest::{load_dataset, CovariateKind, Manifest, ManifestEntry};
pub use points::{load_points, write_points};
pub use raster::{format_raster, load_raster, write_raster, RasterGrid, DEFAULT_NODATA};

use crate::error::{Error, Result};

/// Planar coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeoPoint {
    pub easting: f64,
    pub northing: f64,
}

impl GeoPoint {
    pub fn new(easting: f64, northing: f64) -> Self {
        Self { easting, northing }
    }

    pub fn is_finite(&self) -> bool {
        self.easting.is_finite() && self.northing.is_finite()
    }

    pub fn distance(&self, other: &GeoPoint) -> f64 {
        (self.easting - other.easting).hypot(self.northing - other.northing)
    }
}

impl std::fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.easting, self.northing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseObservation {
    pub location: GeoPoint,
    pub value: f64,
}

/// A covariate observed at scattered locations, realigned by thin plate
/// spline interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCovariate {
    pub name: String,
    pub samples: Vec<(GeoPoint, f64)>,
    /// Lower is preferred when correlated terms are filtered.
    pub priority_rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterCovariate {
    pub name: String,
    pub grid: RasterGrid,
    pub priority_rank: u32,
}

/// Reference to one covariate of a [`Dataset`], in manifest order.
#[derive(Debug, Clone, Copy)]
pub enum CovariateRef<'a> {
    Point(&'a PointCovariate),
    Raster(&'a RasterCovariate),
}

impl<'a> CovariateRef<'a> {
    pub fn name(&self) -> &'a str {
        match self {
            CovariateRef::Point(c) => &c.name,
            CovariateRef::Raster(c) => &c.name,
        }
    }

    pub fn priority_rank(&self) -> u32 {
        match self {
            CovariateRef::Point(c) => c.priority_rank,
            CovariateRef::Raster(c) => c.priority_rank,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub responses: Vec<ResponseObservation>,
    pub point_covariates: Vec<PointCovariate>,
    pub raster_covariates: Vec<RasterCovariate>,
    /// Manifest order over both collections: `(is_raster, index)`.
    order: Vec<(bool, usize)>,
}

impl Dataset {
    /// Assemble a dataset. Covariate order is points first, then rasters,
    /// unless [`Dataset::with_order`] is used.
    pub fn new(
        responses: Vec<ResponseObservation>,
        point_covariates: Vec<PointCovariate>,
        raster_covariates: Vec<RasterCovariate>,
    ) -> Result<Self> {
        let order = (0..point_covariates.len())
            .map(|i| (false, i))
            .chain((0..raster_covariates.len()).map(|i| (true, i)))
            .collect();
        Self::with_order(responses, point_covariates, raster_covariates, order)
    }

    pub(crate) fn with_order(
        responses: Vec<ResponseObservation>,
        point_covariates: Vec<PointCovariate>,
        raster_covariates: Vec<RasterCovariate>,
        order: Vec<(bool, usize)>,
    ) -> Result<Self> {
        if responses.len() < 2 {
            return Err(Error::Dataset(format!(
                "at least 2 response observations required, found {}",
                responses.len()
            )));
        }
        for (i, r) in responses.iter().enumerate() {
            if !r.location.is_finite() || !r.value.is_finite() {
                return Err(Error::Dataset(format!(
                    "response {i} has a non-finite coordinate or value"
                )));
            }
        }
        let mut names = HashSet::new();
        let all_names = point_covariates
            .iter()
            .map(|c| &c.name)
            .chain(raster_covariates.iter().map(|c| &c.name));
        for name in all_names {
            if !names.insert(name.clone()) {
                return Err(Error::Dataset(format!("duplicate covariate name `{name}`")));
            }
        }
        for c in &point_covariates {
            validate_point_samples(c)?;
        }
        Ok(Self {
            responses,
            point_covariates,
            raster_covariates,
            order,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.order.len()
    }

    /// Covariates in manifest order.
    pub fn covariates(&self) -> impl Iterator<Item = CovariateRef<'_>> + '_ {
        self.order.iter().map(move |&(is_raster, i)| {
            if is_raster {
                CovariateRef::Raster(&self.raster_covariates[i])
            } else {
                CovariateRef::Point(&self.point_covariates[i])
            }
        })
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates().map(|c| c.name().to_string()).collect()
    }

    pub fn priority_ranks(&self) -> Vec<u32> {
        self.covariates().map(|c| c.priority_rank()).collect()
    }

    pub fn locations(&self) -> Vec<GeoPoint> {
        self.responses.iter().map(|r| r.location).collect()
    }

    pub fn response_values(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.value).collect()
    }
}

fn validate_point_samples(c: &PointCovariate) -> Result<()> {
    if c.samples.len() < 3 {
        return Err(Error::Dataset(format!(
            "point covariate `{}` needs at least 3 samples, found {}",
            c.name,
            c.samples.len()
        )));
    }
    let mut seen = std::collections::HashMap::new();
    for (p, v) in &c.samples {
        if !p.is_finite() || !v.is_finite() {
            return Err(Error::Dataset(format!(
                "point covariate `{}` has a non-finite sample at {p}",
                c.name
            )));
        }
        let key = (p.easting.to_bits(), p.northing.to_bits());
        if let Some(prev) = seen.insert(key, *v) {
            if prev != *v {
                return Err(Error::Dataset(format!(
                    "point covariate `{}` has conflicting values at {p}",
                    c.name
                )));
            }
        }
    }
    Ok(())
}
