use std::path::Path;

use crate::data::GeoPoint;
use crate::error::{Error, Result};

/// Read `easting,northing,<value_column>` records from a CSV file with a
/// header row. Records keep file order.
pub fn load_points(path: impl AsRef<Path>, value_column: &str) -> Result<Vec<(GeoPoint, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                message: format!("missing column `{name}`"),
            })
    };
    let e_col = find("easting")?;
    let n_col = find("northing")?;
    let v_col = find(value_column)?;

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("column `{name}` value `{raw}` is not a finite number"),
                }),
            }
        };
        let e = cell(e_col, "easting")?;
        let n = cell(n_col, "northing")?;
        let v = cell(v_col, value_column)?;
        out.push((GeoPoint::new(e, n), v));
    }
    Ok(out)
}

/// Write points with one or more value columns.
pub fn write_points(
    path: impl AsRef<Path>,
    columns: &[&str],
    rows: &[(GeoPoint, Vec<f64>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["easting", "northing"];
    header.extend_from_slice(columns);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (p, values) in rows {
        let mut rec = vec![p.easting.to_string(), p.northing.to_string()];
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_rows_in_order() {
        let f = file("easting,northing,soc\n1,2,3.5\n4,5,6\n7,8,9\n");
        let pts = load_points(f.path(), "soc").unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0], (GeoPoint::new(1.0, 2.0), 3.5));
        assert_eq!(pts[2], (GeoPoint::new(7.0, 8.0), 9.0));
    }

    #[test]
    fn na_cell_names_its_row() {
        let f = file("easting,northing,soc\n1,2,3\n4,5,NA\n");
        match load_points(f.path(), "soc") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_data_section() {
        let f = file("easting,northing,soc\n");
        assert!(load_points(f.path(), "soc").unwrap().is_empty());
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = file("easting,northing,soc\n1,2,3\n");
        assert!(matches!(load_points(f.path(), "eca"), Err(Error::Schema { .. })));
    }
}
