//! On-disk formats.
//!
//! Matrices (count fields, rate fields, forecasts) are text files with a
//! `side slot_index` header line followed by row-major values, one row per
//! line. Floats are written in Rust's shortest round-trip form, so reading
//! a file back reproduces the in-memory values exactly. Curves are
//! comma-separated `N,d_alpha` rows; reports and traces are JSON.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::uniformity::DAlphaCurve;

fn open_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, why: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        why: why.into(),
    }
}

fn write_matrix<T: std::fmt::Display + Copy + Default>(
    path: &Path,
    slot_index: i64,
    grid: &Grid<T>,
) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "{} {}", grid.side(), slot_index).map_err(write_err(path))?;
    let side = grid.side() as usize;
    for row in grid.data().chunks(side) {
        let mut line = String::new();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

fn read_matrix<T, F>(path: &Path, parse: F) -> Result<(i64, Grid<T>)>
where
    T: Copy + Default,
    F: Fn(&str) -> Option<T>,
{
    let file = std::fs::File::open(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "empty file"))?
        .map_err(|source| Error::FileRead {
            path: path.to_path_buf(),
            source,
        })?;
    let mut parts = header.split_whitespace();
    let side: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, "header must be `side slot_index`"))?;
    let slot_index: i64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, "header must be `side slot_index`"))?;
    let mut data = Vec::with_capacity((side as usize).pow(2));
    for line in lines {
        let line = line.map_err(|source| Error::FileRead {
            path: path.to_path_buf(),
            source,
        })?;
        for tok in line.split_whitespace() {
            data.push(parse(tok).ok_or_else(|| format_err(path, format!("bad value {tok:?}")))?);
        }
    }
    if data.len() != (side as usize).pow(2) {
        return Err(format_err(
            path,
            format!(
                "expected {} values, found {}",
                (side as u64).pow(2),
                data.len()
            ),
        ));
    }
    Ok((slot_index, Grid::from_vec(side, data)?))
}

pub fn write_matrix_u32(path: &Path, slot_index: i64, grid: &Grid<u32>) -> Result<()> {
    write_matrix(path, slot_index, grid)
}

pub fn read_matrix_u32(path: &Path) -> Result<(i64, Grid<u32>)> {
    read_matrix(path, |s| s.parse().ok())
}

pub fn write_matrix_f64(path: &Path, slot_index: i64, grid: &Grid<f64>) -> Result<()> {
    write_matrix(path, slot_index, grid)
}

pub fn read_matrix_f64(path: &Path) -> Result<(i64, Grid<f64>)> {
    read_matrix(path, |s| s.parse().ok())
}

pub fn write_curve(path: &Path, curve: &DAlphaCurve) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "N,d_alpha").map_err(write_err(path))?;
    for &(n, d) in &curve.points {
        writeln!(w, "{n},{d}").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_curve(path: &Path) -> Result<DAlphaCurve> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("n,d_alpha")) {
            continue;
        }
        let (n, d) = line
            .split_once(',')
            .ok_or_else(|| format_err(path, format!("line {}: expected `N,d_alpha`", i + 1)))?;
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad N {n:?}", i + 1)))?;
        let d: f64 = d
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad d_alpha {d:?}", i + 1)))?;
        points.push((n, d));
    }
    DAlphaCurve::new(points)
}

/// Dry-run model-error table: `side,mae` rows, optional header.
pub fn read_mae_table(path: &Path) -> Result<std::collections::BTreeMap<u32, f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut table = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("side,mae")) {
            continue;
        }
        let (s, m) = line
            .split_once(',')
            .ok_or_else(|| format_err(path, format!("line {}: expected `side,mae`", i + 1)))?;
        let side: u32 = s
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad side {s:?}", i + 1)))?;
        let mae: f64 = m
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad mae {m:?}", i + 1)))?;
        table.insert(side, mae);
    }
    Ok(table)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| format_err(path, format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn matrix_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = CounterRng::new(77);
        let grid = Grid::from_vec(
            5,
            (0..25)
                .map(|_| rng.range_f64(0.0, 10.0) / 3.0) // awkward decimals
                .collect::<Vec<f64>>(),
        )
        .unwrap();
        let path = dir.path().join("alpha.txt");
        write_matrix_f64(&path, 16, &grid).unwrap();
        let (slot, back) = read_matrix_f64(&path).unwrap();
        assert_eq!(slot, 16);
        assert_eq!(back.data(), grid.data()); // bit-exact

        let counts = Grid::from_vec(3, vec![0u32, 5, 2, 9, 1, 0, 4, 4, 7]).unwrap();
        let path = dir.path().join("counts.txt");
        write_matrix_u32(&path, -3, &counts).unwrap();
        let (slot, back) = read_matrix_u32(&path).unwrap();
        assert_eq!(slot, -3);
        assert_eq!(back, counts);
    }

    #[test]
    fn matrix_read_rejects_bad_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "2 0\n1.0 2.0\n3.0\n").unwrap();
        assert!(matches!(
            read_matrix_f64(&path).unwrap_err(),
            Error::Format { .. }
        ));
    }

    #[test]
    fn curve_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let curve = DAlphaCurve::new(vec![(16, 1.25), (64, 2.5), (256, 2.625)]).unwrap();
        write_curve(&path, &curve).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(back, curve);
    }

    #[test]
    fn mae_table_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mae.csv");
        std::fs::write(&path, "side,mae\n4,0.5\n8,0.75\n").unwrap();
        let table = read_mae_table(&path).unwrap();
        assert_eq!(table.get(&4), Some(&0.5));
        assert_eq!(table.get(&8), Some(&0.75));
    }
}
