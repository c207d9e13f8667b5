//! Plain-text XYZ point files: one `x y z` per line, ASCII decimal.
//! Blank lines and lines starting with `#` are ignored.

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::DataError;
use crate::vec3::Vec3;

pub fn read_xyz(path: &Path) -> Result<Vec<Vec3>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut coords = [0.0f64; 3];
        let mut count = 0;
        for token in trimmed.split_whitespace() {
            if count == 3 {
                return Err(parse_err(path, line_no, &line, token, "extra token"));
            }
            coords[count] = token
                .parse::<f64>()
                .map_err(|_| parse_err(path, line_no, &line, token, "not a number"))?;
            if !coords[count].is_finite() {
                return Err(parse_err(path, line_no, &line, token, "non-finite value"));
            }
            count += 1;
        }
        if count != 3 {
            return Err(DataError::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                column: line.len(),
                message: format!("expected 3 coordinates, found {count}"),
            });
        }
        points.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}

fn parse_err(path: &Path, line_no: usize, line: &str, token: &str, message: &str) -> DataError {
    let column = line.find(token).map(|c| c + 1).unwrap_or(1);
    DataError::Parse {
        path: path.display().to_string(),
        line: line_no + 1,
        column,
        message: format!("{message}: {token:?}"),
    }
}

/// Write points using Rust's shortest round-trip float formatting, so a
/// read-back reproduces the coordinates bit-exactly.
pub fn write_xyz(path: &Path, points: &[Vec3]) -> Result<(), DataError> {
    let mut buf = String::with_capacity(points.len() * 32);
    for p in points {
        buf.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    super::atomic_write(path, buf.as_bytes()).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
