//! File formats for fields and real-valued maps.
//!
//! Complex fields are stored in a small binary container (`GLF1`) that keeps
//! the grid geometry together with the samples, so a field written by one run
//! can be re-propagated by another without a sidecar. Real maps (intensities,
//! apertures, phase screens) travel as portable graymaps: 16-bit binary PGM on
//! output, with a plain-text scale sidecar recording the mapping back to
//! physical values, and either ASCII or binary PGM on input.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use super::{FieldGrid, RealMap};

const FIELD_MAGIC: &[u8; 4] = b"GLF1";

/// Largest grid edge accepted when reading, to bound allocations on
/// corrupt headers.
const MAX_EDGE: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a field file (bad magic)")]
    BadMagic,
    #[error("malformed field file: {0}")]
    BadField(String),
    #[error("malformed pgm file: {0}")]
    BadPgm(String),
}

pub type Result<T> = std::result::Result<T, FormatError>;

/// Serializes a field as `GLF1`: magic, u32 nx and ny, f64 dx, dy and
/// wavelength (all little-endian), then row-major (re, im) f64 pairs.
pub fn write_field<W: Write>(mut w: W, field: &FieldGrid) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.nx() as u32).to_le_bytes())?;
    w.write_all(&(field.ny() as u32).to_le_bytes())?;
    w.write_all(&field.dx().to_le_bytes())?;
    w.write_all(&field.dy().to_le_bytes())?;
    w.write_all(&field.wavelength().to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.values().len() * 16);
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_field_file(path: &Path, field: &FieldGrid) -> Result<()> {
    let mut buf = Vec::new();
    write_field(&mut buf, field)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<FieldGrid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let nx = u32::from_le_bytes(u32buf);
    r.read_exact(&mut u32buf)?;
    let ny = u32::from_le_bytes(u32buf);
    if nx < 2 || ny < 2 || nx > MAX_EDGE || ny > MAX_EDGE {
        return Err(FormatError::BadField(format!("grid {nx} x {ny}")));
    }
    let mut f64buf = [0u8; 8];
    let mut next_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let dx = next_f64(&mut r)?;
    let dy = next_f64(&mut r)?;
    let wavelength = next_f64(&mut r)?;
    let n = nx as usize * ny as usize;
    let mut raw = vec![0u8; n * 16];
    r.read_exact(&mut raw)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(FormatError::BadField("trailing bytes".into()));
    }
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    FieldGrid::from_values(nx as usize, ny as usize, dx, dy, wavelength, values)
        .map_err(|e| FormatError::BadField(e.to_string()))
}

pub fn read_field_file(path: &Path) -> Result<FieldGrid> {
    read_field(fs::File::open(path)?)
}

/// Writes a map as 16-bit binary PGM (big-endian samples per the format),
/// linearly rescaled to the full 0..=65535 range, plus a `<path>.scale`
/// sidecar recording `offset` and `step` such that
/// `physical = offset + step * sample`.
pub fn write_map_pgm(path: &Path, map: &RealMap) -> Result<()> {
    let (lo, hi) = map
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(FormatError::BadPgm("non-finite map values".into()));
    }
    let step = if hi > lo { (hi - lo) / 65535.0 } else { 0.0 };
    let mut out = Vec::with_capacity(64 + map.values().len() * 2);
    out.extend_from_slice(format!("P5\n{} {}\n65535\n", map.nx(), map.ny()).as_bytes());
    for &v in map.values() {
        let sample = if step > 0.0 {
            ((v - lo) / step).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&sample.to_be_bytes());
    }
    fs::write(path, out)?;
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".scale");
    let sidecar = path.with_file_name(name);
    fs::write(
        sidecar,
        format!("offset = {lo:e}\nstep = {step:e}\npitch_x and pitch_y are not stored here; see the run manifest\n"),
    )?;
    Ok(())
}

/// Reads an ASCII (P2) or binary (P5) PGM with maxval up to 65535 and
/// normalizes samples to [0, 1]. The grid pitch is not part of PGM, so the
/// caller supplies it.
pub fn read_map_pgm(path: &Path, dx: f64, dy: f64) -> Result<RealMap> {
    let raw = fs::read(path)?;
    parse_pgm(&raw, dx, dy)
}

fn parse_pgm(raw: &[u8], dx: f64, dy: f64) -> Result<RealMap> {
    let bad = |msg: &str| FormatError::BadPgm(msg.into());
    if raw.len() < 2 {
        return Err(bad("truncated header"));
    }
    let binary = match &raw[0..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(bad("expected P2 or P5")),
    };
    // Header tokens are whitespace-separated; '#' starts a comment that runs
    // to end of line.
    let mut pos = 2usize;
    let mut next_token = |raw: &[u8]| -> Result<u64> {
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < raw.len() && raw[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(FormatError::BadPgm("expected integer in header".into()));
        }
        std::str::from_utf8(&raw[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::BadPgm("integer out of range".into()))
    };
    let nx = next_token(raw)?;
    let ny = next_token(raw)?;
    let maxval = next_token(raw)?;
    if nx < 2 || ny < 2 || nx > MAX_EDGE as u64 || ny > MAX_EDGE as u64 {
        return Err(bad("unsupported image dimensions"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    let n = (nx * ny) as usize;
    let scale = 1.0 / maxval as f64;
    let values: Vec<f64> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= raw.len() || !raw[pos].is_ascii_whitespace() {
            return Err(bad("missing raster separator"));
        }
        pos += 1;
        let wide = maxval > 255;
        let bytes_per = if wide { 2 } else { 1 };
        let raster = &raw[pos..];
        if raster.len() != n * bytes_per {
            return Err(bad("raster size does not match header"));
        }
        if wide {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                .collect()
        } else {
            raster.iter().map(|&b| b as f64 * scale).collect()
        }
    } else {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(next_token(raw)? as f64 * scale);
        }
        while pos < raw.len() {
            if raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else if raw[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                return Err(bad("trailing data after raster"));
            }
        }
        v
    };
    if values.iter().any(|v| *v > 1.0 + 1e-12) {
        return Err(bad("sample exceeds maxval"));
    }
    RealMap::from_values(nx as usize, ny as usize, dx, dy, values)
        .map_err(|e| FormatError::BadPgm(e.to_string()))
}
