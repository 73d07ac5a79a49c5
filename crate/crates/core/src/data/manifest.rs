//! Covariate manifest: one CSV record per input file.
//!
//! ```text
//! name,kind,path,priority_rank,value_column
//! soc,response,soc.csv,0,soc
//! ECA,point,eca.csv,1,eca
//! Elev,raster,elev.asc,7,
//! ```
//!
//! Relative paths resolve against the manifest's directory. Exactly one
//! `response` record is required; covariate order follows the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::points::csv_error;
use crate::data::{
    load_points, load_raster, Dataset, PointCovariate, RasterCovariate, ResponseObservation,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Response,
    Point,
    Raster,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: CovariateKind,
    pub path: PathBuf,
    pub priority_rank: u32,
    #[serde(default)]
    pub value_column: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut entries = Vec::new();
        for (i, rec) in reader.deserialize::<ManifestEntry>().enumerate() {
            let mut entry = rec.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?;
            if entry.value_column.as_deref() == Some("") {
                entry.value_column = None;
            }
            entries.push(entry);
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { base_dir, entries })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Read every referenced file. `response_column` overrides the response
    /// record's value column.
    pub fn into_dataset(self, response_column: Option<&str>) -> Result<Dataset> {
        let responses: Vec<&ManifestEntry> = self
            .entries
            .iter()
            .filter(|e| e.kind == CovariateKind::Response)
            .collect();
        let [response] = responses.as_slice() else {
            return Err(Error::Dataset(format!(
                "manifest needs exactly one response record, found {}",
                responses.len()
            )));
        };
        let column = response_column
            .or(response.value_column.as_deref())
            .unwrap_or(&response.name);
        let responses = load_points(self.resolve(&response.path), column)?
            .into_iter()
            .map(|(location, value)| ResponseObservation { location, value })
            .collect();

        let mut points = Vec::new();
        let mut rasters = Vec::new();
        let mut order = Vec::new();
        for e in &self.entries {
            match e.kind {
                CovariateKind::Response => {}
                CovariateKind::Point => {
                    let column = e.value_column.as_deref().unwrap_or(&e.name);
                    let samples = load_points(self.resolve(&e.path), column)?;
                    order.push((false, points.len()));
                    points.push(PointCovariate {
                        name: e.name.clone(),
                        samples,
                        priority_rank: e.priority_rank,
                    });
                }
                CovariateKind::Raster => {
                    let grid = load_raster(self.resolve(&e.path))?;
                    order.push((true, rasters.len()));
                    rasters.push(RasterCovariate {
                        name: e.name.clone(),
                        grid,
                        priority_rank: e.priority_rank,
                    });
                }
            }
        }
        Dataset::with_order(responses, points, rasters, order)
    }
}

pub fn load_dataset(manifest: impl AsRef<Path>, response_column: Option<&str>) -> Result<Dataset> {
    Manifest::load(manifest)?.into_dataset(response_column)
}
