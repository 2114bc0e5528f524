//! On-disk formats: a flat binary container for measurements and PSR
//! matrices, plain CSV for inspection, binary PGM images, and the scene
//! manifest.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "PSRD"  u32 version (1)  u32 kind (0 measurements, 1 matrix)
//! u64 total  u64 dim_a  u64 dim_b
//! total x (f32 re, f32 im)
//! ```
//!
//! For measurements `(dim_a, dim_b) = (n_slow, n_freq)`; for matrices
//! `(M, N)` with zero imaginary parts.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::Measurements;
use crate::grids::AcquisitionGeometry;
use crate::scenegen::GroundTruthScene;
use crate::solvers::RecoveryResult;

const MAGIC: &[u8; 4] = b"PSRD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 8;

/// Contents of a binary file.
#[derive(Debug, Clone)]
pub enum Stored {
    Measurements(Measurements),
    Matrix(Array2<f64>),
}

#[derive(Clone, Copy)]
enum Kind {
    Measurements = 0,
    Matrix = 1,
}

fn write_binary(path: &Path, kind: Kind, dims: (usize, usize), values: impl Iterator<Item = Complex64>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(kind as u32).to_le_bytes())?;
    for v in [dims.0 * dims.1, dims.0, dims.1] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    for z in values {
        out.write_all(&(z.re as f32).to_le_bytes())?;
        out.write_all(&(z.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_measurements_binary(path: &Path, d: &Measurements) -> Result<()> {
    write_binary(path, Kind::Measurements, (d.n_slow(), d.n_freq()), d.data().iter().copied())
}

/// Stores `q` with single precision.
pub fn write_matrix_binary(path: &Path, q: &Array2<f64>) -> Result<()> {
    write_binary(path, Kind::Matrix, q.dim(), q.iter().map(|&v| Complex64::new(v, 0.0)))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(bytes: &[u8], at: usize) -> Result<usize> {
    let v = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit in memory")))
}

pub fn read_binary(path: &Path) -> Result<Stored> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_binary(&bytes)
}

pub fn decode_binary(bytes: &[u8]) -> Result<Stored> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a PSRD file".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = u32_at(bytes, 8);
    let total = u64_at(bytes, 12)?;
    let (a, b) = (u64_at(bytes, 20)?, u64_at(bytes, 28)?);
    if a.checked_mul(b) != Some(total) {
        return Err(Error::Format(format!("header claims {total} values for a {a} x {b} array")));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != total * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            total * 8,
            body.len()
        )));
    }
    let values = body.chunks_exact(8).map(|c| {
        let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
        Complex64::new(re as f64, im as f64)
    });
    match kind {
        0 => Ok(Stored::Measurements(Measurements::new(values.collect(), a, b)?)),
        1 => {
            let re: Vec<f64> = values.map(|z| z.re).collect();
            Ok(Stored::Matrix(Array2::from_shape_vec((a, b), re).expect("checked size")))
        }
        k => Err(Error::Format(format!("unknown payload kind {k}"))),
    }
}

/// One line per velocity index, pixels across.
pub fn matrix_csv(q: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in q.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn write_matrix_csv(path: &Path, q: &Array2<f64>) -> Result<()> {
    Ok(fs::write(path, matrix_csv(q))?)
}

pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!("line {} has {} fields, expected {c}", i + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty matrix".into()))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("rectangular"))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

/// `slow,freq,re,im`, one line per sample.
pub fn measurements_csv(d: &Measurements) -> String {
    let mut s = String::from("slow,freq,re,im\n");
    for (p, z) in d.data().iter().enumerate() {
        let (m, l) = d.slow_freq(p);
        writeln!(s, "{m},{l},{},{}", z.re, z.im).expect("string write");
    }
    s
}

pub fn write_measurements_csv(path: &Path, d: &Measurements) -> Result<()> {
    Ok(fs::write(path, measurements_csv(d))?)
}

/// `iteration,residual,error,wall_ms`. Entries that were not evaluated are
/// left empty; `wall_ms` is cumulative and blank when `timing` is off.
pub fn residual_csv(result: &RecoveryResult, timing: bool) -> String {
    let mut s = String::from("iteration,residual,error,wall_ms\n");
    let mut elapsed = 0.0;
    for i in 0..result.iterations {
        let res = result.residual_history[i].map(|v| v.to_string()).unwrap_or_default();
        let err = result
            .error_history
            .as_ref()
            .map(|h| h[i].to_string())
            .unwrap_or_default();
        let ms = if timing {
            elapsed += result.iteration_times.get(i).copied().unwrap_or(0.0) * 1e3;
            format!("{elapsed:.3}")
        } else {
            String::new()
        };
        writeln!(s, "{},{res},{err},{ms}", i + 1).expect("string write");
    }
    s
}

/// Binary PGM (P5), 8-bit.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::LengthMismatch {
            expected: width * height,
            got: pixels.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    Ok(fs::write(path, pgm_bytes(width, height, pixels)?)?)
}

/// Parses a P5 image with maxval 255 into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = || Error::Format("malformed PGM".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_owned());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad());
    }
    let width: usize = fields[1].parse().map_err(|_| bad())?;
    let height: usize = fields[2].parse().map_err(|_| bad())?;
    // exactly one whitespace byte separates the header from the raster
    let body = bytes.get(pos + 1..).ok_or_else(bad)?;
    if body.len() != width * height {
        return Err(bad());
    }
    Ok((width, height, body.to_vec()))
}

/// Ground-truth listing: one line per scatterer pixel with its velocity
/// and amplitude. Clutter is summarised in a comment line.
pub fn scene_manifest(scene: &GroundTruthScene, geometry: &AcquisitionGeometry) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "# seed {}", scene.seed).expect("string write");
    if let Some(c) = &scene.clutter {
        let max = c.iter().copied().fold(0.0, f64::max);
        writeln!(s, "# clutter on {} pixels, max amplitude {max}", c.len()).expect("string write");
    }
    s.push_str("kind,row,col,pixel_index,vx,vy,amplitude\n");
    for t in &scene.point_targets {
        let k = geometry.scene.index(t.pixel)?;
        let kind = if t.is_moving() { "mover" } else { "stationary" };
        writeln!(
            s,
            "{kind},{},{},{k},{},{},{}",
            t.pixel.row, t.pixel.col, t.velocity[0], t.velocity[1], t.reflectivity
        )
        .expect("string write");
    }
    for e in &scene.extended_targets {
        for p in e.pixels() {
            let k = geometry.scene.index(p)?;
            writeln!(s, "extended,{},{},{k},0,0,{}", p.row, p.col, e.reflectivity).expect("string write");
        }
    }
    Ok(s)
}
