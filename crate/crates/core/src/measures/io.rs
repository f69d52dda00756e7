//! CSV and JSON persistence for measures and paths.
//!
//! CSV rows are `t, particle_id, x_1, …, x_d, weight`; floats are written in
//! shortest round-trip form. All writes go through a temporary file in the
//! target directory followed by a rename, so a failed run never leaves a
//! truncated file behind.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmpiricalMeasure, MeasurePath};
use crate::error::{Error, Result};
use crate::specfun::FracOrder;

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "particle_id".to_string()];
    h.extend((1..=dim).map(|k| format!("x_{k}")));
    h.push("weight".into());
    h
}

/// CSV image of a path.
pub fn path_to_csv(path: &MeasurePath) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(path.dim()))?;
    let mut rec = Vec::with_capacity(path.dim() + 3);
    for (t, m) in path.times().iter().zip(path.measures()) {
        for (i, (x, wt)) in m.iter().enumerate() {
            rec.clear();
            rec.push(t.to_string());
            rec.push(i.to_string());
            rec.extend(x.iter().map(f64::to_string));
            rec.push(wt.to_string());
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_path_csv(file: &Path, path: &MeasurePath) -> Result<()> {
    write_atomic(file, &path_to_csv(path)?)
}

/// Single measure, written as a path with the one time `t = 0`.
pub fn write_measure_csv(file: &Path, mu: &EmpiricalMeasure) -> Result<()> {
    let p = MeasurePath::new(vec![0.0], vec![mu.clone()], FracOrder::ONE)?;
    write_path_csv(file, &p)
}

/// Reads a path CSV. Rows are grouped by `t` in file order.
pub fn read_path_csv(file: &Path, beta: FracOrder) -> Result<MeasurePath> {
    let mut r = csv::Reader::from_path(file)?;
    let h = r.headers()?.clone();
    let dim = h.len().checked_sub(3).filter(|&d| d > 0).ok_or_else(|| {
        Error::Config(format!("{}: expected columns t, particle_id, x_1..x_d, weight", file.display()))
    })?;
    if h.get(0) != Some("t") || h.get(1) != Some("particle_id") || h.get(h.len() - 1) != Some("weight") {
        return Err(Error::Config(format!("{}: unexpected header {:?}", file.display(), h)));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut blocks: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for row in r.records() {
        let row = row?;
        let num = |k: usize| -> Result<f64> {
            row.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad number in column {k}", file.display())))
        };
        let t = num(0)?;
        if times.last() != Some(&t) {
            times.push(t);
            blocks.push((Vec::new(), Vec::new()));
        }
        let (pts, ws) = blocks.last_mut().unwrap();
        for k in 0..dim {
            pts.push(num(2 + k)?);
        }
        ws.push(num(2 + dim)?);
    }
    if times.is_empty() {
        return Err(Error::EmptyPath);
    }
    let measures = blocks.into_iter().map(|(p, w)| EmpiricalMeasure::new(dim, p, w)).collect::<Result<Vec<_>>>()?;
    MeasurePath::new(times, measures, beta)
}

/// Reads a measure CSV: the rows at the first time present.
pub fn read_measure_csv(file: &Path) -> Result<EmpiricalMeasure> {
    let p = read_path_csv(file, FracOrder::ONE)?;
    Ok(p.measures()[0].clone())
}

/// Run description stored next to a path CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub beta: FracOrder,
    pub dim: usize,
    pub times: Vec<f64>,
    pub particles: Vec<usize>,
    pub total_mass: Vec<f64>,
    pub first_moment: Vec<Vec<f64>>,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    /// Grid, sizes, masses and mean positions of `path`.
    pub fn describe(path: &MeasurePath) -> Self {
        let ms = path.measures();
        Self {
            beta: path.beta(),
            dim: path.dim(),
            times: path.times().to_vec(),
            particles: ms.iter().map(EmpiricalMeasure::len).collect(),
            total_mass: path.masses(),
            first_moment: ms.iter().map(|m| (0..m.dim()).map(|c| m.expectation(|x| x[c])).collect()).collect(),
            tolerances: BTreeMap::new(),
            seed: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn read(file: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(file)?)?)
    }

    pub fn write(&self, file: &Path) -> Result<()> {
        write_json_atomic(file, self)
    }
}
