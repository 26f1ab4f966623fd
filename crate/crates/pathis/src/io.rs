//! File formats.
//!
//! Images travel as .paf files ("PAF1" magic, one ASCII header line with the
//! grid size and extent, then n^2 little-endian 32-bit floats, row-major).
//! Sensor data travels as .psd files ("PSD1" magic, header with sensor
//! count, samples per trace, sample interval, and sound speed, then k * m
//! little-endian 32-bit floats, sensor-major). Payloads are 32-bit for
//! storage economy; in-memory values stay 64-bit.
//!
//! Images can also be exported to binary 8-bit PGM (P5) with min-max
//! scaling, and square 8-bit PGM files can be read back as images.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::make_grid;
use crate::image::{Image, SensorData};

const PAF_MAGIC: &str = "PAF1";
const PSD_MAGIC: &str = "PSD1";

// ---------- helpers ----------

pub(crate) fn read_line<R: BufRead>(r: &mut R, what: &str) -> Result<String> {
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Err(Error::Truncated(format!("missing {what}")));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

pub(crate) fn check_magic<R: BufRead>(r: &mut R, expected: &str) -> Result<()> {
    let found = read_line(r, "magic")?;
    if found != expected {
        return Err(Error::BadMagic {
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    s.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("unreadable {what}: {:?}", s.unwrap())))
}

pub(crate) fn read_f32_payload<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(format!("{what}: payload shorter than header declares"))
        } else {
            Error::Io(e)
        }
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

pub(crate) fn write_f32_payload<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

// ---------- .paf images ----------

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{PAF_MAGIC}")?;
    writeln!(w, "{} {}", image.grid.n, image.grid.extent_m)?;
    write_f32_payload(&mut w, &image.values)?;
    w.flush()?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Image> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, PAF_MAGIC)?;
    let header = read_line(&mut r, "image header")?;
    let mut fields = header.split_whitespace();
    let n: usize = parse_field(fields.next(), "grid size")?;
    let extent_m: f64 = parse_field(fields.next(), "grid extent")?;
    let grid = make_grid(n, extent_m)
        .map_err(|e| Error::Parse(format!("header declares invalid grid: {e}")))?;
    let values = read_f32_payload(&mut r, grid.n_pixels(), "image")?;
    Image::from_values(grid, values)
}

// ---------- .psd sensor data ----------

pub fn write_sensor_data(path: &Path, data: &SensorData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{PSD_MAGIC}")?;
    writeln!(w, "{} {} {} {}", data.k, data.m, data.dt_s, data.c_mps)?;
    write_f32_payload(&mut w, &data.values)?;
    w.flush()?;
    Ok(())
}

pub fn read_sensor_data(path: &Path) -> Result<SensorData> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, PSD_MAGIC)?;
    let header = read_line(&mut r, "sensor data header")?;
    let mut fields = header.split_whitespace();
    let k: usize = parse_field(fields.next(), "sensor count")?;
    let m: usize = parse_field(fields.next(), "sample count")?;
    let dt_s: f64 = parse_field(fields.next(), "sample interval")?;
    let c_mps: f64 = parse_field(fields.next(), "sound speed")?;
    if k == 0 || m == 0 {
        return Err(Error::Parse(format!(
            "sensor data header declares empty block: k = {k}, m = {m}"
        )));
    }
    if !(dt_s > 0.0) || !(c_mps > 0.0) {
        return Err(Error::Parse(format!(
            "sensor data header needs positive dt and c, got {dt_s} and {c_mps}"
        )));
    }
    let values = read_f32_payload(&mut r, k * m, "sensor data")?;
    SensorData::from_values(k, m, dt_s, c_mps, values)
}

// ---------- PGM export / import ----------

/// Write an 8-bit binary PGM, min-max scaled so the smallest pixel maps to 0
/// and the largest to 255. A flat image maps to all zeros.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let (lo, hi) = image.min_max();
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", image.grid.n, image.grid.n)?;
    for &v in &image.values {
        w.write_all(&[((v - lo) * scale).round() as u8])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a square binary 8-bit PGM. Pixel bytes are scaled by 1/maxval; the
/// grid extent is not stored in PGM, so the caller supplies it.
pub fn read_pgm(path: &Path, extent_m: f64) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
        // whitespace and '#' comments separate header tokens
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Truncated("PGM header ended early".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    }

    let magic = next_token(&bytes, &mut pos)?;
    if magic != "P5" {
        return Err(Error::BadMagic {
            expected: "P5".into(),
            found: magic,
        });
    }
    let w: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Parse("unreadable PGM width".into()))?;
    let h: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Parse("unreadable PGM height".into()))?;
    let maxval: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Parse("unreadable PGM maxval".into()))?;
    if w != h {
        return Err(Error::DimensionMismatch(format!(
            "only square PGM images are supported, got {w} x {h}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!(
            "only 8-bit PGM is supported, maxval {maxval}"
        )));
    }
    pos += 1; // single whitespace byte after maxval
    if bytes.len() < pos + w * h {
        return Err(Error::Truncated(
            "PGM: payload shorter than header declares".into(),
        ));
    }
    let grid = make_grid(w, extent_m)?;
    let values = bytes[pos..pos + w * h]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    Image::from_values(grid, values)
}
