//! 16-bit PGM export for depth images, height grids and probability fields.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::domain::Grid2;
use crate::{Error, Result};

/// Write a binary (P5) 16-bit PGM. Samples are written row 0 first,
/// big-endian, as the format requires.
pub fn write_pgm16<P: AsRef<Path>>(
    path: P,
    width: usize,
    height: usize,
    samples: impl Iterator<Item = u16>,
    comment: &str,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n# {comment}\n{width} {height}\n65535\n")?;
    let mut n = 0usize;
    for s in samples {
        out.write_all(&s.to_be_bytes())?;
        n += 1;
    }
    if n != width * height {
        return Err(Error::Numerical(format!(
            "pgm sample count {n} != {width}x{height}"
        )));
    }
    Ok(())
}

/// Render a scalar raster as a PGM heat map, linearly mapping `[lo, hi]`
/// onto the full gray range. The scaling is recorded in the header comment.
pub fn render_grid<P: AsRef<Path>>(grid: &Grid2<f64>, lo: f64, hi: f64, path: P) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let comment = format!("linear scale: lo={lo} hi={hi} maps to 0..65535");
    write_pgm16(
        path,
        grid.nx(),
        grid.ny(),
        grid.values()
            .iter()
            .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16),
        &comment,
    )
}

/// Read back a binary 16-bit PGM (as written by this module).
pub fn read_pgm16<P: AsRef<Path>>(path: P) -> Result<(usize, usize, Vec<u16>)> {
    let name = path.as_ref().display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(&path)?.read_to_end(&mut bytes)?;

    // Header: magic, optional comment lines, dimensions, maxval; tokens are
    // whitespace-separated with '#' comments running to end of line.
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        let b = bytes[pos];
        if b == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            pos += 1;
        } else {
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens.len() != 4 || tokens[0] != "P5" {
        return Err(Error::Parse(name, "not a binary PGM".into()));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Parse(name.clone(), "bad width".into()))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Parse(name.clone(), "bad height".into()))?;
    if tokens[3] != "65535" {
        return Err(Error::Parse(name, "expected 16-bit maxval".into()));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 2;
    if bytes.len() < pos + need {
        return Err(Error::Parse(name, "truncated pixel data".into()));
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, data))
}
