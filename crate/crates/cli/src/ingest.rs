//! CSV ingestion into a model-ready table.

use std::path::Path;

use manifold_plm::{Manifold, ManifoldPoint, Matrix, PlmDataset};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::mapping::{AngleUnit, ColumnMapping, ManifoldColumns};

/// Bounds of the normalized height coordinate.
pub const HEIGHT_RANGE: (f64, f64) = (0.01, 0.99);

/// Cell contents treated as missing.
const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "*"];

/// `normalized = offset + slope · raw`, fitted on the usable rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeightMap {
    pub column_min: f64,
    pub column_max: f64,
    pub slope: f64,
    pub offset: f64,
}

impl HeightMap {
    fn fit(values: &[f64]) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = HEIGHT_RANGE;
        if hi > lo {
            let slope = (b - a) / (hi - lo);
            Self { column_min: lo, column_max: hi, slope, offset: a - slope * lo }
        } else {
            Self { column_min: lo, column_max: hi, slope: 0.0, offset: 0.5 * (a + b) }
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        self.offset + self.slope * raw
    }
}

/// Parsed rows, before the sample-size check of a dataset.
#[derive(Debug, Clone)]
pub struct Table {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub t: Vec<ManifoldPoint<f64>>,
    /// 0-based index of each kept row among the file's data rows.
    pub rows: Vec<usize>,
    pub n_dropped: usize,
    pub height_map: Option<HeightMap>,
    pub manifold: Manifold<f64>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn dataset(&self) -> CliResult<PlmDataset<f64>> {
        let needed = self.p() + 2;
        if self.len() < needed {
            return Err(CliError::InsufficientData { usable: self.len(), needed });
        }
        let x = Matrix::from_rows(&self.x)?;
        Ok(PlmDataset::new(self.y.clone(), x, self.t.clone(), self.manifold.clone())?)
    }
}

fn to_radians(value: f64, unit: AngleUnit) -> f64 {
    match unit {
        AngleUnit::Degrees => value.to_radians(),
        AngleUnit::Radians => value,
    }
}

pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> CliResult<Table> {
    let display = path.display().to_string();
    let csv_err = |source| CliError::Csv { path: display.clone(), source };
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column {name:?} not found in {display}")))
    };
    let names = mapping.columns();
    let indices = names.iter().map(|c| index_of(c)).collect::<CliResult<Vec<_>>>()?;
    let p = mapping.linear.len();

    let mut parsed: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut n_dropped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut values = Vec::with_capacity(indices.len());
        let mut missing = false;
        for (&col, name) in indices.iter().zip(&names) {
            let cell = record.get(col).unwrap_or("");
            if MISSING.contains(&cell) {
                missing = true;
                break;
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Config(format!("row {}: column {name:?} has non-numeric value {cell:?}", row + 1))
            })?;
            values.push(v);
        }
        if missing {
            n_dropped += 1;
        } else {
            parsed.push((row, values));
        }
    }

    let y = parsed.iter().map(|(_, v)| v[0]).collect();
    let x = parsed.iter().map(|(_, v)| v[1..1 + p].to_vec()).collect();
    let rows = parsed.iter().map(|(r, _)| *r).collect();
    let (t, height_map, manifold) = match &mapping.manifold {
        ManifoldColumns::Circle { unit, .. } => (
            parsed.iter().map(|(_, v)| ManifoldPoint::circle(to_radians(v[1 + p], *unit))).collect(),
            None,
            Manifold::Circle,
        ),
        ManifoldColumns::Cylinder { unit, normalize_height, .. } => {
            let raw: Vec<f64> = parsed.iter().map(|(_, v)| v[2 + p]).collect();
            let map = normalize_height.then(|| HeightMap::fit(&raw));
            let t = parsed
                .iter()
                .zip(&raw)
                .map(|((_, v), h)| {
                    let height = map.map_or(*h, |m| m.apply(*h));
                    ManifoldPoint::cylinder(to_radians(v[1 + p], *unit), height)
                })
                .collect();
            (t, map, Manifold::unit_cylinder())
        }
    };
    Ok(Table { y, x, t, rows, n_dropped, height_map, manifold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn height_map_hits_the_bounds() {
        let m = HeightMap::fit(&[3.0, 7.0, 5.0]);
        assert!((m.apply(3.0) - 0.01).abs() < 1e-15);
        assert!((m.apply(7.0) - 0.99).abs() < 1e-15);
        assert!((m.apply(5.0) - 0.5).abs() < 1e-15);
        assert_eq!(HeightMap::fit(&[2.0, 2.0]).apply(2.0), 0.5);
    }
}
