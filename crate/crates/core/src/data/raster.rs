//! ESRI ASCII grid reading and writing.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::GeoPoint;
use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Regular grid. `values` is row-major with row 0 the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub ncols: usize,
    pub nrows: usize,
    pub values: Vec<f64>,
    pub nodata: f64,
}

impl RasterGrid {
    pub fn new(
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        ncols: usize,
        nrows: usize,
        values: Vec<f64>,
        nodata: f64,
    ) -> Result<Self> {
        if !(cellsize > 0.0) || !cellsize.is_finite() {
            return Err(Error::Parameter(format!("cellsize must be positive, got {cellsize}")));
        }
        if values.len() != ncols * nrows {
            return Err(Error::Dimension(format!(
                "raster has {} values for {ncols}x{nrows} cells",
                values.len()
            )));
        }
        Ok(Self {
            xllcorner,
            yllcorner,
            cellsize,
            ncols,
            nrows,
            values,
            nodata,
        })
    }

    pub fn filled(
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        ncols: usize,
        nrows: usize,
        value: f64,
    ) -> Self {
        Self {
            xllcorner,
            yllcorner,
            cellsize,
            ncols,
            nrows,
            values: vec![value; ncols * nrows],
            nodata: DEFAULT_NODATA,
        }
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.xllcorner,
            self.yllcorner,
            self.cellsize,
            self.ncols,
            self.nrows,
            values,
            self.nodata,
        )
    }

    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.xllcorner == other.xllcorner
            && self.yllcorner == other.yllcorner
            && self.cellsize == other.cellsize
            && self.ncols == other.ncols
            && self.nrows == other.nrows
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    fn top(&self) -> f64 {
        self.yllcorner + self.nrows as f64 * self.cellsize
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint::new(
            self.xllcorner + (col as f64 + 0.5) * self.cellsize,
            self.top() - (row as f64 + 0.5) * self.cellsize,
        )
    }

    /// Cell centers in row-major order.
    pub fn cell_centers(&self) -> Vec<GeoPoint> {
        (0..self.nrows)
            .flat_map(|r| (0..self.ncols).map(move |c| (r, c)))
            .map(|(r, c)| self.cell_center(r, c))
            .collect()
    }

    /// Row and column of the cell containing `p`, if inside the extent.
    pub fn cell_of(&self, p: GeoPoint) -> Option<(usize, usize)> {
        let col = ((p.easting - self.xllcorner) / self.cellsize).floor();
        let row = ((self.top() - p.northing) / self.cellsize).floor();
        if col < 0.0 || row < 0.0 || col >= self.ncols as f64 || row >= self.nrows as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Nearest-cell value at `p`; `None` outside the extent or on nodata.
    pub fn sample(&self, p: GeoPoint) -> Option<f64> {
        let (r, c) = self.cell_of(p)?;
        let v = self.get(r, c);
        (!self.is_nodata(v)).then_some(v)
    }
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_raster(text: &str) -> std::result::Result<RasterGrid, String> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut xll_center = None;
    let mut yll_center = None;
    let mut cellsize = None;
    let mut nodata = None;

    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| format!("header key `{key}` has no value"))?;
        let num: f64 = value
            .parse()
            .map_err(|_| format!("header `{key}` value `{value}` is not numeric"))?;
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(as_count(key, num)?),
            "nrows" => nrows = Some(as_count(key, num)?),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => xll_center = Some(num),
            "yllcenter" => yll_center = Some(num),
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            _ => return Err(format!("unknown header key `{key}`")),
        }
        lines.next();
    }

    let ncols = ncols.ok_or("missing header `ncols`")?;
    let nrows = nrows.ok_or("missing header `nrows`")?;
    let cellsize = cellsize.ok_or("missing header `cellsize`")?;
    if !(cellsize > 0.0) {
        return Err(format!("cellsize must be positive, got {cellsize}"));
    }
    let xll = match (xll, xll_center) {
        (Some(v), _) => v,
        (None, Some(c)) => c - cellsize / 2.0,
        _ => return Err("missing header `xllcorner`".into()),
    };
    let yll = match (yll, yll_center) {
        (Some(v), _) => v,
        (None, Some(c)) => c - cellsize / 2.0,
        _ => return Err("missing header `yllcorner`".into()),
    };

    let mut values = Vec::with_capacity(ncols * nrows);
    for line in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format!("cell value `{tok}` is not numeric"))?;
            values.push(v);
        }
    }
    if values.len() != ncols * nrows {
        return Err(format!(
            "header declares {ncols}x{nrows} = {} cells but {} values were read",
            ncols * nrows,
            values.len()
        ));
    }
    Ok(RasterGrid {
        xllcorner: xll,
        yllcorner: yll,
        cellsize,
        ncols,
        nrows,
        values,
        nodata: nodata.unwrap_or(DEFAULT_NODATA),
    })
}

fn as_count(key: &str, v: f64) -> std::result::Result<usize, String> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(format!("header `{key}` must be a non-negative integer, got {v}"))
    }
}

/// Render a grid as ESRI ASCII text. Numbers use the shortest decimal
/// representation that round-trips.
pub fn format_raster(grid: &RasterGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ncols {}", grid.ncols);
    let _ = writeln!(s, "nrows {}", grid.nrows);
    let _ = writeln!(s, "xllcorner {}", grid.xllcorner);
    let _ = writeln!(s, "yllcorner {}", grid.yllcorner);
    let _ = writeln!(s, "cellsize {}", grid.cellsize);
    let _ = writeln!(s, "NODATA_value {}", grid.nodata);
    for row in grid.values.chunks(grid.ncols.max(1)) {
        let mut first = true;
        for v in row {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_raster(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_raster(grid)).map_err(|e| Error::io(path, e))
}
