//! Field and table I/O: CSV with explicit cell indices and coordinates, and
//! legacy VTK structured-points text for visualization tools.
//!
//! Every float is printed with 17 significant digits so that written values
//! parse back to bit-identical doubles; output row order is the field's
//! memory order (i fastest), making files byte-reproducible.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid3, ScalarField3};

/// 17 significant digits; parses back to the identical double.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), msg: e.to_string() }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::ParseError { path: path.display().to_string(), line, msg: msg.into() }
}

pub const FIELD_CSV_HEADER: &str = "i,j,k,x,y,z,value";

/// Writes one row per cell: `i,j,k,x,y,z,value`.
pub fn write_field_csv(field: &ScalarField3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = field.grid();
    let mut text = String::with_capacity(64 * g.len());
    text.push_str(FIELD_CSV_HEADER);
    text.push('\n');
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let [x, y, z] = g.pos(i, j, k);
                let v = field.at(i, j, k);
                writeln!(
                    text,
                    "{i},{j},{k},{},{},{},{}",
                    fmt_float(x),
                    fmt_float(y),
                    fmt_float(z),
                    fmt_float(v)
                )
                .expect("string write");
            }
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a field written by [`write_field_csv`] (any row order accepted).
///
/// The grid is reconstructed from the index/coordinate columns; the file must
/// cover every cell exactly once with consistent uniform spacing. The CSV
/// carries no boundary tag, so the caller supplies one.
pub fn read_field_csv(path: impl AsRef<Path>, boundary: Boundary) -> Result<ScalarField3> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == FIELD_CSV_HEADER => {}
        Some((n, h)) => {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected header '{FIELD_CSV_HEADER}', got '{}'", h.trim()),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }

    struct Row {
        line: usize,
        idx: [usize; 3],
        pos: [f64; 3],
        value: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut dims = [0usize; 3];
    for (n, raw) in lines {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(parse_err(path, line, format!("expected 7 columns, got {}", cols.len())));
        }
        let mut idx = [0usize; 3];
        for (slot, col) in idx.iter_mut().zip(&cols[..3]) {
            *slot = col
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad index '{col}': {e}")))?;
        }
        let mut nums = [0.0f64; 4];
        for (slot, col) in nums.iter_mut().zip(&cols[3..]) {
            *slot = col
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad number '{col}': {e}")))?;
        }
        for axis in 0..3 {
            dims[axis] = dims[axis].max(idx[axis] + 1);
        }
        rows.push(Row { line, idx, pos: [nums[0], nums[1], nums[2]], value: nums[3] });
    }

    let [nx, ny, nz] = dims;
    if rows.len() != nx * ny * nz {
        return Err(parse_err(
            path,
            1,
            format!("indices span {nx}x{ny}x{nz} = {} cells but file has {} rows", nx * ny * nz, rows.len()),
        ));
    }

    // Spacing and origin from the index-position pairs; all axes must agree.
    let origin_row = rows
        .iter()
        .find(|r| r.idx == [0, 0, 0])
        .ok_or_else(|| parse_err(path, 1, "cell (0,0,0) missing"))?;
    let origin = origin_row.pos;
    let mut h = 0.0f64;
    for r in &rows {
        for ((&i, &p), &o) in r.idx.iter().zip(&r.pos).zip(&origin) {
            if i > 0 {
                h = h.max((p - o) / i as f64);
            }
        }
    }
    let grid = Grid3::with_origin(nx, ny, nz, h, origin, boundary)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;

    let mut values = vec![0.0f64; grid.len()];
    let mut seen = vec![false; grid.len()];
    for r in &rows {
        let [i, j, k] = r.idx;
        let flat = grid.idx(i, j, k);
        if seen[flat] {
            return Err(parse_err(path, r.line, format!("duplicate cell ({i},{j},{k})")));
        }
        seen[flat] = true;
        let expect = grid.pos(i, j, k);
        for axis in 0..3 {
            let scale = h.max(expect[axis].abs());
            if (r.pos[axis] - expect[axis]).abs() > 1e-9 * scale {
                return Err(parse_err(
                    path,
                    r.line,
                    format!(
                        "coordinate {} = {} inconsistent with uniform spacing (expected {})",
                        ["x", "y", "z"][axis],
                        r.pos[axis],
                        expect[axis]
                    ),
                ));
            }
        }
        values[flat] = r.value;
    }
    ScalarField3::from_values(grid, values)
}

/// Legacy VTK structured-points text with one `value` scalar per cell.
pub fn write_field_vtk(field: &ScalarField3, path: impl AsRef<Path>, title: &str) -> Result<()> {
    let path = path.as_ref();
    let g = field.grid();
    let mut text = String::with_capacity(32 * g.len() + 256);
    text.push_str("# vtk DataFile Version 3.0\n");
    text.push_str(title.lines().next().unwrap_or("field"));
    text.push('\n');
    text.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    writeln!(text, "DIMENSIONS {} {} {}", g.nx, g.ny, g.nz).expect("string write");
    writeln!(
        text,
        "ORIGIN {} {} {}",
        fmt_float(g.origin[0]),
        fmt_float(g.origin[1]),
        fmt_float(g.origin[2])
    )
    .expect("string write");
    writeln!(text, "SPACING {} {} {}", fmt_float(g.h), fmt_float(g.h), fmt_float(g.h))
        .expect("string write");
    writeln!(text, "POINT_DATA {}", g.len()).expect("string write");
    text.push_str("SCALARS value double\nLOOKUP_TABLE default\n");
    for v in field.values() {
        text.push_str(&fmt_float(*v));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a two-column `c,D` table (header required) for tabulated models.
pub fn read_diffusivity_table(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().eq_ignore_ascii_case("c,d") => {}
        Some((n, h)) => {
            return Err(parse_err(path, n + 1, format!("expected header 'c,D', got '{}'", h.trim())))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut knots = Vec::new();
    for (n, raw) in lines {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 columns, got {}", cols.len())));
        }
        let c: f64 = cols[0]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad number '{}': {e}", cols[0])))?;
        let d: f64 = cols[1]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad number '{}': {e}", cols[1])))?;
        knots.push((c, d));
    }
    if knots.is_empty() {
        return Err(parse_err(path, 1, "table has no data rows"));
    }
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("nldiff-io-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_field() -> ScalarField3 {
        let g = Grid3::centered(4, 3, 5, 0.25, Boundary::FreeDecay).unwrap();
        ScalarField3::from_index_fn(g, |i, j, k| {
            (1.0 + i as f64) * PI.powi(j as i32 + 1) * (-1.0f64).powi(k as i32) / 7.0
                + if (i, j, k) == (1, 1, 1) { 1e-300 } else { 0.0 }
        })
    }

    #[test]
    fn float_format_is_seventeen_digits_and_round_trips() {
        assert_eq!(fmt_float(PI), "3.1415926535897931e0");
        assert_eq!(fmt_float(-0.5), "-5.0000000000000000e-1");
        for &v in &[0.1, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE, 0.0] {
            let back: f64 = fmt_float(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} reprinted as {}", fmt_float(v));
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let field = sample_field();
        let path = tmp("round_trip.csv");
        write_field_csv(&field, &path).unwrap();
        let back = read_field_csv(&path, Boundary::FreeDecay).unwrap();
        assert_eq!(back.grid(), field.grid());
        for (a, b) in back.values().iter().zip(field.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_reader_accepts_shuffled_rows() {
        let field = sample_field();
        let path = tmp("shuffled.csv");
        write_field_csv(&field, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let shuffled = tmp("shuffled_rev.csv");
        fs::write(&shuffled, lines.join("\n")).unwrap();
        let back = read_field_csv(&shuffled, Boundary::FreeDecay).unwrap();
        assert_eq!(back.values(), field.values());
    }

    #[test]
    fn csv_reader_rejects_malformed_input() {
        let field = sample_field();
        let path = tmp("good.csv");
        write_field_csv(&field, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        let bad_header = tmp("bad_header.csv");
        fs::write(&bad_header, text.replacen("i,j,k", "a,b,c", 1)).unwrap();
        assert!(matches!(
            read_field_csv(&bad_header, Boundary::FreeDecay),
            Err(Error::ParseError { line: 1, .. })
        ));

        let missing = tmp("missing_row.csv");
        fs::write(&missing, lines[..lines.len() - 1].join("\n")).unwrap();
        assert!(read_field_csv(&missing, Boundary::FreeDecay).is_err());

        let mut dup_lines = lines.clone();
        dup_lines[2] = lines[1];
        let dup = tmp("dup_row.csv");
        fs::write(&dup, dup_lines.join("\n")).unwrap();
        assert!(read_field_csv(&dup, Boundary::FreeDecay).is_err());

        let mut bad_lines = lines.clone();
        let wrong = lines[5].replacen(",", ",oops", 3);
        bad_lines[5] = &wrong;
        let bad_num = tmp("bad_num.csv");
        fs::write(&bad_num, bad_lines.join("\n")).unwrap();
        assert!(matches!(
            read_field_csv(&bad_num, Boundary::FreeDecay),
            Err(Error::ParseError { line: 6, .. })
        ));

        let skewed = lines
            .iter()
            .enumerate()
            .map(|(n, l)| {
                if n == 7 {
                    let mut cols: Vec<String> = l.split(',').map(String::from).collect();
                    cols[4] = fmt_float(9.9);
                    cols.join(",")
                } else {
                    (*l).to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        // A skewed coordinate corrupts the reconstructed spacing, so the
        // first inconsistent row reported may differ from the edited one;
        // only the error kind is pinned.
        let skew = tmp("skew.csv");
        fs::write(&skew, skewed).unwrap();
        assert!(matches!(
            read_field_csv(&skew, Boundary::FreeDecay),
            Err(Error::ParseError { .. })
        ));
    }

    #[test]
    fn vtk_output_has_advertised_structure() {
        let field = sample_field();
        let path = tmp("field.vtk");
        write_field_vtk(&field, &path, "snapshot").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[1], "snapshot");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 4 3 5");
        assert!(lines[5].starts_with("ORIGIN "));
        assert!(lines[6].starts_with("SPACING 2.5000000000000000e-1"));
        assert_eq!(lines[7], "POINT_DATA 60");
        assert_eq!(lines[8], "SCALARS value double");
        assert_eq!(lines[9], "LOOKUP_TABLE default");
        assert_eq!(lines.len(), 10 + 60);
        let first: f64 = lines[10].parse().unwrap();
        assert_eq!(first.to_bits(), field.values()[0].to_bits());
    }

    #[test]
    fn diffusivity_table_reads_and_validates() {
        let path = tmp("table.csv");
        fs::write(&path, "c,D\n0.0,1.0\n0.5,2.0\n1.0,2.5\n").unwrap();
        let knots = read_diffusivity_table(&path).unwrap();
        assert_eq!(knots, vec![(0.0, 1.0), (0.5, 2.0), (1.0, 2.5)]);

        let bad = tmp("table_bad.csv");
        fs::write(&bad, "concentration,diff\n0.0,1.0\n").unwrap();
        assert!(read_diffusivity_table(&bad).is_err());
        let short = tmp("table_short.csv");
        fs::write(&short, "c,D\n0.0\n").unwrap();
        assert!(matches!(
            read_diffusivity_table(&short),
            Err(Error::ParseError { line: 2, .. })
        ));
        let empty = tmp("table_empty.csv");
        fs::write(&empty, "c,D\n").unwrap();
        assert!(read_diffusivity_table(&empty).is_err());
    }
}
