//! Artifact files: CSV tables and JSON summaries tagged with the config
//! hash, the binary trajectory slab, and the space-white noise dump.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::noise::{Lattice, SpectralNoise};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const SLAB_MAGIC: &[u8; 8] = b"SPMLTRJ1";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// CSV with a leading `# config_hash: …` comment line.
pub fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# config_hash: {hash}")?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read rows written by [`write_csv`], returning them with the stored hash.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(String, Vec<T>)> {
    let text = std::fs::read_to_string(path)?;
    let hash = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash: "))
        .ok_or_else(|| Error::Config(format!("{} lacks a config hash line", path.display())))?
        .to_string();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err)?;
    Ok((hash, rows))
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    results: &'a T,
}

pub fn write_summary<T: Serialize>(
    path: &Path,
    subcommand: &str,
    hash: &str,
    seed: u64,
    results: &T,
) -> Result<()> {
    let s = Summary {
        subcommand,
        config_hash: hash,
        seed,
        results,
    };
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &s).map_err(|e| Error::Io(e.into()))?;
    writeln!(f)?;
    Ok(())
}

/// Layout: magic, `d`, `n` (u32), `dt` (f64), `n_t`, slice count (u64),
/// 32 hash bytes, then every value as little-endian f64.
pub fn write_trajectory(path: &Path, grid: &Grid, values: &[f64], hash: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(SLAB_MAGIC)?;
    f.write_all(&(grid.d as u32).to_le_bytes())?;
    f.write_all(&(grid.n as u32).to_le_bytes())?;
    f.write_all(&grid.dt.to_le_bytes())?;
    f.write_all(&(grid.n_t as u64).to_le_bytes())?;
    f.write_all(&((values.len() / grid.len()) as u64).to_le_bytes())?;
    let h = hex::decode(hash).map_err(|e| Error::Config(format!("bad hash: {e}")))?;
    let mut hb = [0u8; 32];
    hb[..h.len().min(32)].copy_from_slice(&h[..h.len().min(32)]);
    f.write_all(&hb)?;
    for v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub struct Trajectory {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub hash: String,
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut f = BufReader::new(File::open(path)?);
    let bad = |m: &str| Error::Config(format!("{}: {m}", path.display()));
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != SLAB_MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    f.read_exact(&mut b8)?;
    let n_t = u64::from_le_bytes(b8) as usize;
    f.read_exact(&mut b8)?;
    let slices = u64::from_le_bytes(b8) as usize;
    let mut hb = [0u8; 32];
    f.read_exact(&mut hb)?;
    let grid = Grid::new(d, n, dt, n_t).map_err(|e| bad(&e.to_string()))?;
    let mut values = Vec::with_capacity(slices * grid.len());
    for _ in 0..slices * grid.len() {
        f.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    if f.read(&mut b8)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(Trajectory {
        grid,
        values,
        hash: hex::encode(hb),
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ModeRow {
    j0: i32,
    j1: i32,
    re: f64,
    im: f64,
}

/// Space-white coefficients, one row per lattice mode.
pub fn dump_noise(path: &Path, noise: &SpectralNoise, hash: &str) -> Result<()> {
    let rows: Vec<ModeRow> = noise
        .lattice
        .modes
        .iter()
        .zip(&noise.coeffs)
        .map(|(j, c)| ModeRow {
            j0: j[0],
            j1: j[1],
            re: c.re,
            im: c.im,
        })
        .collect();
    write_csv(path, hash, &rows)
}

/// Rebuild a space-white realization from [`dump_noise`] output.
pub fn replay_noise(path: &Path, d: usize, k_max: usize, seed: u64) -> Result<SpectralNoise> {
    let (_, rows): (String, Vec<ModeRow>) = read_csv(path)?;
    let lattice = Lattice::new(d, k_max);
    if rows.len() != lattice.len()
        || rows
            .iter()
            .zip(&lattice.modes)
            .any(|(r, j)| [r.j0, r.j1] != *j)
    {
        return Err(Error::Config(
            "noise dump does not match the lattice".into(),
        ));
    }
    let coeffs = rows.iter().map(|r| Complex64::new(r.re, r.im)).collect();
    SpectralNoise::from_coeffs(lattice, coeffs, seed)
}
