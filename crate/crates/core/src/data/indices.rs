//! Vegetation indices derived from near-infrared and red reflectance.

use std::collections::BTreeMap;

use crate::data::RasterGrid;
use crate::error::{Error, Result};

/// Soil adjustment factor `L` recommended for SAVI and MNLI.
pub const SAVI_SOIL_FACTOR: f64 = 0.5;

pub const INDEX_NAMES: [&str; 9] = ["SR", "DVI", "NDVI", "SAVI", "NLI", "MNLI", "MSR", "TVI", "RDVI"];

/// Either the index value or the reason it is undefined for the inputs.
pub type IndexValue = std::result::Result<f64, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct VegetationIndices {
    values: BTreeMap<&'static str, IndexValue>,
}

impl VegetationIndices {
    pub fn get(&self, name: &str) -> Result<f64> {
        let (key, value) = self
            .values
            .get_key_value(name)
            .ok_or_else(|| Error::Parameter(format!("unknown vegetation index `{name}`")))?;
        value.clone().map_err(|reason| Error::Domain { index: key, reason })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &IndexValue)> {
        INDEX_NAMES.iter().map(move |k| (*k, &self.values[k]))
    }
}

fn ratio(num: f64, den: f64, what: &str) -> IndexValue {
    if den == 0.0 {
        Err(format!("{what} is zero"))
    } else {
        Ok(num / den)
    }
}

/// Compute all nine indices. Inputs must be finite and non-negative;
/// individual indices may still be undefined (zero denominators).
pub fn vegetation_indices(nir: f64, red: f64, soil_factor: f64) -> Result<VegetationIndices> {
    if !nir.is_finite() || !red.is_finite() || nir < 0.0 || red < 0.0 {
        return Err(Error::Parameter(format!(
            "reflectances must be finite and non-negative (nir={nir}, red={red})"
        )));
    }
    let l = soil_factor;
    let sum = nir + red;
    let nir2 = nir * nir;

    let sr = ratio(nir, red, "red reflectance");
    let ndvi = ratio(nir - red, sum, "nir + red");
    let msr = sr.clone().map(|s| (s - 1.0) / (s.sqrt() + 1.0));
    let tvi = ndvi.clone().and_then(|v| {
        if v + 0.5 < 0.0 {
            Err(format!("NDVI {v} is below -0.5"))
        } else {
            Ok((v + 0.5).sqrt())
        }
    });
    let rdvi = ratio(nir - red, sum.sqrt(), "nir + red");

    let mut values = BTreeMap::new();
    values.insert("SR", sr);
    values.insert("DVI", Ok(nir - red));
    values.insert("NDVI", ndvi);
    values.insert("SAVI", ratio((nir - red) * (1.0 + l), sum + l, "nir + red + L"));
    values.insert("NLI", ratio(nir2 - red, nir2 + red, "nir^2 + red"));
    values.insert("MNLI", ratio((nir2 - red) * (1.0 + l), nir2 + red + l, "nir^2 + red + L"));
    values.insert("MSR", msr);
    values.insert("TVI", tvi);
    values.insert("RDVI", rdvi);
    Ok(VegetationIndices { values })
}

/// Per-cell index rasters from co-registered NIR and RED rasters. Cells where
/// an input is nodata or the index is undefined become nodata.
pub fn vegetation_index_rasters(
    nir: &RasterGrid,
    red: &RasterGrid,
    soil_factor: f64,
) -> Result<Vec<(&'static str, RasterGrid)>> {
    if !nir.same_geometry(red) {
        return Err(Error::Dimension("NIR and RED rasters differ in geometry".into()));
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(nir.len()); INDEX_NAMES.len()];
    for (&a, &b) in nir.values.iter().zip(&red.values) {
        let vi = if nir.is_nodata(a) || red.is_nodata(b) {
            None
        } else {
            vegetation_indices(a, b, soil_factor).ok()
        };
        for (k, name) in INDEX_NAMES.iter().enumerate() {
            let v = vi.as_ref().and_then(|vi| vi.get(name).ok()).unwrap_or(nir.nodata);
            out[k].push(v);
        }
    }
    INDEX_NAMES
        .iter()
        .zip(out)
        .map(|(name, values)| Ok((*name, nir.with_values(values)?)))
        .collect()
}
