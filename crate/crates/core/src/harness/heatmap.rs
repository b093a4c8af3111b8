use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pvo::ValueGrid;

/// Writes `<stem>.csv` (raw values, walls as empty fields) and `<stem>.pgm`
/// (binary 8-bit grayscale). Pixels clamp values to [0, 1] and then map the
/// present range linearly onto 0..=255; a flat range renders black. Wall
/// cells are black.
pub fn export_heatmap(grid: &ValueGrid, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let stem = stem.as_ref();
    let csv_path = stem.with_extension("csv");
    let pgm_path = stem.with_extension("pgm");
    fs::write(&csv_path, heatmap_csv(grid)).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&pgm_path, heatmap_pgm(grid)).map_err(|e| Error::io(&pgm_path, e))?;
    Ok((csv_path, pgm_path))
}

pub fn heatmap_csv(grid: &ValueGrid) -> String {
    let mut out = String::new();
    for r in 0..grid.rows {
        let row: Vec<String> = (0..grid.cols)
            .map(|c| grid.values[r * grid.cols + c].map_or(String::new(), |v| v.to_string()))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn heatmap_pixels(grid: &ValueGrid) -> Vec<u8> {
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let (lo, hi) = grid
        .values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(clamp(v)), hi.max(clamp(v)))
        });
    grid.values
        .iter()
        .map(|v| match v {
            Some(v) if hi > lo => ((clamp(*v) - lo) / (hi - lo) * 255.0).round() as u8,
            _ => 0,
        })
        .collect()
}

pub fn heatmap_pgm(grid: &ValueGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.cols, grid.rows).into_bytes();
    out.extend(heatmap_pixels(grid));
    out
}

/// Parses a heatmap CSV back into a grid.
pub fn read_heatmap_csv(path: impl AsRef<Path>) -> Result<ValueGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if *cols.get_or_insert(fields.len()) != fields.len() {
            return Err(Error::parse(i + 1, "ragged heatmap row"));
        }
        for f in fields {
            values.push(if f.is_empty() {
                None
            } else {
                Some(f.parse::<f64>().map_err(|e| Error::parse(i + 1, e.to_string()))?)
            });
        }
        rows += 1;
    }
    Ok(ValueGrid {
        rows,
        cols: cols.unwrap_or(0),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_grid_is_black() {
        let g = ValueGrid {
            rows: 2,
            cols: 2,
            values: vec![Some(0.4), Some(0.4), None, Some(0.4)],
        };
        assert_eq!(heatmap_pixels(&g), vec![0, 0, 0, 0]);
    }

    #[test]
    fn endpoints_map_to_full_range() {
        let g = ValueGrid {
            rows: 1,
            cols: 3,
            values: vec![Some(0.0), None, Some(1.0)],
        };
        assert_eq!(heatmap_pixels(&g), vec![0, 0, 255]);
        let pgm = heatmap_pgm(&g);
        assert_eq!(&pgm[..11], b"P5\n3 1\n255\n");
        assert_eq!(&pgm[11..], &[0, 0, 255]);
    }

    #[test]
    fn out_of_range_values_clamp_only_in_pixels() {
        let g = ValueGrid {
            rows: 1,
            cols: 3,
            values: vec![Some(-0.5), Some(0.5), Some(1.7)],
        };
        assert_eq!(heatmap_pixels(&g), vec![0, 128, 255]);
        assert!(heatmap_csv(&g).starts_with("-0.5,0.5,1.7"));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = ValueGrid {
            rows: 3,
            cols: 3,
            values: vec![
                None,
                Some(0.1 + 0.2),
                None,
                Some(1.0 / 3.0),
                Some(-1e-300),
                Some(0.999_999_999_999_9),
                None,
                None,
                Some(7.0),
            ],
        };
        let (csv, pgm) = export_heatmap(&g, dir.path().join("m")).unwrap();
        assert!(pgm.exists());
        let back = read_heatmap_csv(csv).unwrap();
        assert_eq!(back.rows, 3);
        for (a, b) in back.values.iter().zip(&g.values) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("presence mismatch"),
            }
        }
    }
}
